#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "checkpoint.hpp"
#include "guard.hpp"
#include "model.hpp"
#include "text.hpp"

namespace dnat {

struct TranslateOptions {
    bool collapse_repeats = true;  // NAT only
    std::size_t max_len = 256;     // AT only
};

struct TranslationResult {
    std::string text;
    std::vector<int> ids;
    std::size_t predicted_length = 0;
    Tensor cross_attention;
    bool truncated = false;
};

// Model input for raw text: greedy segmentation with the model lexicon,
// whitespace acting only as a word separator.
struct ModelInput {
    std::vector<int> ids;
    std::vector<std::uint8_t> flags;
};

inline ModelInput prepare_input(std::string_view text, const TranslationModel& m) {
    const auto seg = segment_for_model(text, m.lexicon);
    return {ids_for_units(seg.units, m.vocab), seg.flags};
}

// Translates already-guarded text (⟨rep⟩ markers in place, no unguarding).
inline TranslationResult translate_guarded(const TranslationModel& m, std::string_view guarded,
                                           const TranslateOptions& opt = {}) {
    TranslationResult r;
    const std::string clean = preprocess(guarded);
    const ModelInput in = prepare_input(clean, m);
    if (in.ids.empty()) return r;
    if (m.config.kind == ModelKind::nat) {
        auto out = infer_nat(m.params, m.config, in.ids, in.flags, opt.collapse_repeats);
        r.ids = std::move(out.ids);
        r.predicted_length = out.predicted_length;
        r.cross_attention = out.cross_attention;
        r.truncated = out.truncated;
    } else {
        r.ids = infer_at(m.params, m.config, in.ids, in.flags, GreedyOptions{opt.max_len, false});
        r.predicted_length = r.ids.size();
        r.truncated = in.ids.size() > m.config.max_len;
    }
    r.text = detokenize(r.ids, m.vocab);
    return r;
}

// guard -> preprocess -> segment -> encode -> length -> decode -> collapse
// repeats -> detokenize -> unguard. Empty input gives an empty result.
inline TranslationResult translate(const TranslationModel& m, std::string_view text, const GuardPatterns& patterns,
                                   const TranslateOptions& opt = {}) {
    const GuardedText g = guard(text, patterns);
    TranslationResult r = translate_guarded(m, g.guarded, opt);
    if (r.ids.empty() && g.originals.empty()) return r;
    r.text = unguard(r.text, g);
    return r;
}

}  // namespace dnat
