#pragma once

// Corpus-to-model plumbing shared by the command-line tool and the
// acceptance runner.

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "aligner.hpp"
#include "checkpoint.hpp"
#include "corpus_io.hpp"
#include "evaluation.hpp"
#include "text.hpp"
#include "training.hpp"
#include "translate.hpp"

namespace dnat {

using LinkSet = std::set<std::pair<std::size_t, std::size_t>>;

// Vocabulary over both corpus sides; lexicon of source words (for the
// model-side segmentation of raw input).
inline TranslationModel make_model_shell(const ModelConfig& base, const std::vector<TextPair>& corpus) {
    TranslationModel m;
    m.vocab = build_vocab(corpus);
    for (const auto& [src, tgt] : corpus)
        for (const auto& w : split_whitespace(src))
            if (w != kRepMarker) m.lexicon.add(w);
    m.config = base;
    m.config.vocab_size = m.vocab.size();
    m.config.validate();
    return m;
}

// Symmetrised IBM Model 1 links (intersection of both directions).
inline std::vector<LinkSet> ibm1_links(const std::vector<WordPair>& pairs, int iterations) {
    const Ibm1Result fwd = train_ibm1(pairs, iterations);
    const Ibm1Result bwd = train_ibm1(reversed(pairs), iterations);
    std::vector<LinkSet> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        const WordAlignment a = viterbi_align(fwd.table, p);
        const WordAlignment b = viterbi_align(bwd.table, WordPair{p.target, p.source});
        out.push_back(symmetrize(a, flip(b)).links);
    }
    return out;
}

// Character-level corpus BLEU of a model on word-split pairs.
inline double corpus_char_bleu(const TranslationModel& m, const std::vector<WordPair>& pairs,
                               const TranslateOptions& opt = {}) {
    std::vector<std::vector<std::string>> cands, refs;
    for (const auto& p : pairs) {
        const auto out = translate_guarded(m, join_words(p.source), opt);
        std::vector<std::string> c, r;
        for (auto& u : split_units(out.text))
            if (!is_space_unit(u)) c.push_back(std::move(u));
        for (const auto& w : p.target)
            for (auto& u : split_units(w)) r.push_back(std::move(u));
        cands.push_back(std::move(c));
        refs.push_back(std::move(r));
    }
    if (cands.empty()) throw EmptyInputError("corpus_char_bleu: no pairs");
    return bleu(cands, refs).bleu;
}

// Teacher output for each monolingual source line; empty outputs dropped.
inline std::vector<TextPair> augment_corpus(const TranslationModel& teacher, const std::vector<std::string>& sources,
                                            const TranslateOptions& opt = {}) {
    std::vector<TextPair> out;
    for (const auto& s : sources) {
        const auto r = translate_guarded(teacher, s, opt);
        if (r.ids.empty()) continue;
        // The output carries no word boundaries; each character is a word.
        std::vector<std::string> words;
        for (const auto& u : split_units(r.text))
            if (!is_space_unit(u)) words.push_back(u);
        out.emplace_back(s, join_words(words));
    }
    return out;
}

}  // namespace dnat
