#pragma once

// TTS text frontend: guard, translate, unguard, preprocess, TN, CWS, POS,
// prosody, G2P. Only guard/translate/unguard/preprocess/CWS do real work;
// TN, POS, prosody and G2P are deterministic placeholders.

#include <algorithm>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "checkpoint.hpp"
#include "corpus_io.hpp"
#include "errors.hpp"
#include "guard.hpp"
#include "text.hpp"
#include "translate.hpp"
#include "utf8.hpp"

namespace dnat {

struct StageTrace {
    std::string stage;
    std::string input;
    std::string output;
};

struct FrontendDoc {
    std::string original;
    GuardedText guarded;
    std::string translated;
    std::vector<GuardSpan> protected_spans;  // restored originals inside `translated`
    std::string normalized;
    std::vector<GuardSpan> normalized_spans;  // the same spans inside `normalized`
    std::vector<std::string> words;
    std::vector<std::string> pos_tags;
    std::vector<std::size_t> prosody_breaks;  // word indices followed by a break
    std::vector<std::string> phonemes;
    std::vector<StageTrace> trace;
    std::set<std::string> available;  // keys provided so far

    // Latest text form: phonemes, words, normalized, translated, guarded, original.
    std::string snapshot() const {
        if (!phonemes.empty()) return join_words(phonemes);
        if (available.count("words")) return join_words(words, "|");
        if (available.count("normalized")) return normalized;
        if (available.count("translated")) return translated;
        if (available.count("guarded")) return guarded.guarded;
        return original;
    }
};

struct PipelineStage {
    std::string name;
    std::vector<std::string> requires_keys;
    std::vector<std::string> provides_keys;
    std::function<void(FrontendDoc&)> transform;
};

// Raised when a stage throws; carries the trace up to and including the
// failed stage (whose output snapshot is empty).
class PipelineAbort : public PipelineError {
public:
    PipelineAbort(std::string stage, const std::string& what, std::vector<StageTrace> trace)
        : PipelineError(std::move(stage), what), trace_(std::move(trace)) {}
    const std::vector<StageTrace>& trace() const noexcept { return trace_; }

private:
    std::vector<StageTrace> trace_;
};

// Shared, read-only inputs of the stages.
struct PipelineContext {
    std::shared_ptr<const TranslationModel> model;  // null: only the identity translator works
    GuardPatterns patterns = GuardPatterns::defaults();
    Lexicon lexicon;  // CWS lexicon; falls back to the model lexicon when empty
    TranslateOptions translate;
};

namespace detail {

inline bool starts_with_space(std::string_view s) {
    const auto cps = utf8::decode(s);
    return !cps.empty() && utf8::is_space(cps.front());
}
inline bool ends_with_space(std::string_view s) {
    const auto cps = utf8::decode(s);
    return !cps.empty() && utf8::is_space(cps.back());
}

}  // namespace detail

struct PreprocessedText {
    std::string text;
    std::vector<GuardSpan> spans;
};

// preprocess() applied outside `spans` only; span contents are copied
// verbatim and a single space is kept where whitespace touched a span.
inline PreprocessedText preprocess_except(std::string_view text, std::vector<GuardSpan> spans) {
    std::sort(spans.begin(), spans.end(), [](const GuardSpan& a, const GuardSpan& b) { return a.begin < b.begin; });
    PreprocessedText out;
    std::size_t cursor = 0;
    auto emit_gap = [&](std::string_view gap, bool after_span, bool before_span) {
        const std::string clean = preprocess(gap);
        const bool lead = after_span && detail::starts_with_space(gap);
        const bool trail = before_span && detail::ends_with_space(gap);
        if (clean.empty()) {
            if ((lead || trail) && after_span && before_span) out.text.push_back(' ');
            return;
        }
        if (lead) out.text.push_back(' ');
        out.text += clean;
        if (trail) out.text.push_back(' ');
    };
    for (std::size_t k = 0; k < spans.size(); ++k) {
        const auto& s = spans[k];
        if (s.begin < cursor || s.end > text.size()) throw DimensionError("preprocess_except: overlapping or out-of-range span");
        emit_gap(text.substr(cursor, s.begin - cursor), k > 0, true);
        const std::size_t b = out.text.size();
        out.text.append(text.substr(s.begin, s.end - s.begin));
        out.spans.push_back({b, out.text.size()});
        cursor = s.end;
    }
    emit_gap(text.substr(cursor), !spans.empty(), false);
    return out;
}

// ---------------------------------------------------------------------------
// Stages

inline PipelineStage guard_stage(std::shared_ptr<const PipelineContext> ctx) {
    return {"guard", {}, {"guarded"}, [ctx](FrontendDoc& d) { d.guarded = guard(d.original, ctx->patterns); }};
}

inline PipelineStage translate_stage(std::shared_ptr<const PipelineContext> ctx) {
    return {"translate", {"guarded"}, {"translated"}, [ctx](FrontendDoc& d) {
                if (!ctx->model) throw ConfigError("translate stage needs a model");
                d.translated = translate_guarded(*ctx->model, d.guarded.guarded, ctx->translate).text;
            }};
}

// Drop-in replacement for translate that passes the guarded text through.
inline PipelineStage identity_translate_stage() {
    return {"translate-identity", {"guarded"}, {"translated"},
            [](FrontendDoc& d) { d.translated = d.guarded.guarded; }};
}

inline PipelineStage unguard_stage() {
    return {"unguard", {"guarded", "translated"}, {"recovered"}, [](FrontendDoc& d) {
                auto r = unguard_with_spans(d.translated, d.guarded);
                d.translated = std::move(r.text);
                d.protected_spans = std::move(r.restored);
            }};
}

// Reads the translated text when present, the original otherwise.
inline PipelineStage preprocess_stage() {
    return {"preprocess", {}, {"normalized"}, [](FrontendDoc& d) {
                const bool has_translation = d.available.count("translated") > 0;
                const std::string& src = has_translation ? d.translated : d.original;
                auto r = preprocess_except(src, has_translation ? d.protected_spans : std::vector<GuardSpan>{});
                d.normalized = std::move(r.text);
                d.normalized_spans = std::move(r.spans);
            }};
}

inline PipelineStage tn_stub() {
    return {"tn", {"normalized"}, {}, [](FrontendDoc&) {}};
}

// Protected spans stay single words; other text is split on whitespace and
// segmented by greedy longest match.
inline PipelineStage cws_stage(std::shared_ptr<const PipelineContext> ctx) {
    return {"cws", {"normalized"}, {"words"}, [ctx](FrontendDoc& d) {
                const Lexicon& lex = (ctx->lexicon.max_units() == 0 && ctx->model) ? ctx->model->lexicon : ctx->lexicon;
                d.words.clear();
                auto segment_gap = [&](std::string_view gap) {
                    for (const auto& chunk : split_whitespace(gap))
                        for (auto& w : segment_greedy(chunk, lex).words()) d.words.push_back(std::move(w));
                };
                std::size_t cursor = 0;
                const std::string_view text = d.normalized;
                for (const auto& s : d.normalized_spans) {
                    segment_gap(text.substr(cursor, s.begin - cursor));
                    d.words.emplace_back(text.substr(s.begin, s.end - s.begin));
                    cursor = s.end;
                }
                segment_gap(text.substr(cursor));
            }};
}

inline PipelineStage pos_stub() {
    return {"pos", {"words"}, {"pos"}, [](FrontendDoc& d) { d.pos_tags.assign(d.words.size(), "X"); }};
}

inline PipelineStage prosody_stub() {
    return {"prosody", {"words"}, {"prosody"}, [](FrontendDoc& d) { d.prosody_breaks.clear(); }};
}

inline std::vector<std::string> g2p_placeholder(std::string_view text) {
    std::vector<std::string> out;
    for (char32_t c : utf8::decode(text)) {
        if (utf8::is_space(c)) continue;
        std::string ch;
        utf8::append(ch, c);
        out.push_back("PH(" + ch + ")");
    }
    return out;
}

inline PipelineStage g2p_stub() {
    return {"g2p", {"words"}, {"phonemes"}, [](FrontendDoc& d) {
                d.phonemes.clear();
                for (const auto& w : d.words)
                    for (auto& p : g2p_placeholder(w)) d.phonemes.push_back(std::move(p));
            }};
}

inline const std::vector<std::string>& default_stage_names() {
    static const std::vector<std::string> names = {"guard", "translate", "unguard", "preprocess", "tn",
                                                   "cws",   "pos",       "prosody", "g2p"};
    return names;
}

inline PipelineStage make_stage(const std::string& name, std::shared_ptr<const PipelineContext> ctx) {
    if (name == "guard") return guard_stage(ctx);
    if (name == "translate") return translate_stage(ctx);
    if (name == "translate-identity") return identity_translate_stage();
    if (name == "unguard") return unguard_stage();
    if (name == "preprocess") return preprocess_stage();
    if (name == "tn") return tn_stub();
    if (name == "cws") return cws_stage(ctx);
    if (name == "pos") return pos_stub();
    if (name == "prosody") return prosody_stub();
    if (name == "g2p") return g2p_stub();
    throw ConfigError("unknown pipeline stage '" + name + "'");
}

// Fails when a stage runs before the stages it depends on.
inline void validate_stages(const std::vector<PipelineStage>& stages) {
    if (stages.empty()) throw ConfigError("pipeline has no stages");
    std::set<std::string> have;
    for (const auto& s : stages) {
        for (const auto& r : s.requires_keys)
            if (!have.count(r)) throw ConfigError("stage '" + s.name + "' requires '" + r + "' from an earlier stage");
        have.insert(s.provides_keys.begin(), s.provides_keys.end());
    }
}

inline std::vector<PipelineStage> build_pipeline(const std::vector<std::string>& names,
                                                 std::shared_ptr<const PipelineContext> ctx) {
    std::vector<PipelineStage> stages;
    for (const auto& n : names) stages.push_back(make_stage(n, ctx));
    validate_stages(stages);
    return stages;
}

inline std::vector<PipelineStage> default_pipeline(std::shared_ptr<const PipelineContext> ctx, bool identity_translation = false) {
    auto names = default_stage_names();
    if (identity_translation) names[1] = "translate-identity";
    return build_pipeline(names, std::move(ctx));
}

// One stage name per line; blank lines and '#' comments are ignored.
inline std::vector<std::string> load_pipeline_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read pipeline config " + path);
    std::vector<std::string> names;
    for (std::string line; std::getline(in, line);) {
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        const auto words = split_whitespace(line);
        if (words.empty()) continue;
        if (words.size() > 1) throw ConfigError("pipeline config line holds more than one stage: " + line);
        names.push_back(words[0]);
    }
    return names;
}

inline FrontendDoc run_pipeline(std::string_view text, const std::vector<PipelineStage>& stages) {
    validate_stages(stages);
    FrontendDoc d;
    d.original = std::string(text);
    for (const auto& s : stages) {
        StageTrace t{s.name, d.snapshot(), {}};
        try {
            s.transform(d);
        } catch (const std::exception& e) {
            d.trace.push_back(std::move(t));
            throw PipelineAbort(s.name, e.what(), d.trace);
        }
        d.available.insert(s.provides_keys.begin(), s.provides_keys.end());
        t.output = d.snapshot();
        d.trace.push_back(std::move(t));
    }
    return d;
}

// Batch mode: one TSV row (input, translated, space-joined phonemes) per line.
inline std::vector<std::string> run_batch(const std::vector<std::string>& lines, const std::vector<PipelineStage>& stages) {
    std::vector<std::string> rows;
    rows.reserve(lines.size());
    auto clean = [](std::string s) {
        std::replace(s.begin(), s.end(), '\t', ' ');
        return s;
    };
    for (const auto& line : lines) {
        const FrontendDoc d = run_pipeline(line, stages);
        rows.push_back(clean(line) + '\t' + clean(d.translated) + '\t' + join_words(d.phonemes));
    }
    return rows;
}

}  // namespace dnat
