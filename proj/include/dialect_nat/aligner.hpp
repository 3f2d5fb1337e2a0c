#pragma once

// Statistical word alignment (IBM Model 1 trained by EM), directional
// Viterbi links, intersection symmetrisation, Pharaoh I/O, and conversion of
// word links to the character-level matrices that supervise attention.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "corpus_io.hpp"
#include "errors.hpp"
#include "text.hpp"

namespace dnat {

inline constexpr double kUnknownTranslationProb = 1e-9;

// t(target word | source word), with a NULL source word.
class TranslationTable {
public:
    static constexpr int kNull = 0;

    int source_id(const std::string& w) const {
        auto it = src_ids_.find(w);
        return it == src_ids_.end() ? -1 : it->second;
    }
    int target_id(const std::string& w) const {
        auto it = tgt_ids_.find(w);
        return it == tgt_ids_.end() ? -1 : it->second;
    }

    double prob(const std::string& src, const std::string& tgt) const { return prob_ids(source_id(src), target_id(tgt)); }
    double null_prob(const std::string& tgt) const { return prob_ids(kNull, target_id(tgt)); }

    double prob_ids(int s, int t) const {
        if (s < 0 || t < 0) return kUnknownTranslationProb;
        const auto& row = rows_[static_cast<std::size_t>(s)];
        auto it = row.find(t);
        return it == row.end() || it->second < kUnknownTranslationProb ? kUnknownTranslationProb : it->second;
    }

    // Most probable target word for `src` (empty if unknown).
    std::string best_target(const std::string& src) const {
        const int s = source_id(src);
        if (s < 0) return {};
        int best = -1;
        double bp = -1.0;
        for (const auto& [t, p] : rows_[static_cast<std::size_t>(s)])
            if (p > bp || (p == bp && t < best)) {
                bp = p;
                best = t;
            }
        return best < 0 ? std::string{} : tgt_words_[static_cast<std::size_t>(best)];
    }

    // Max |sum_t p(t|s) - 1| over source rows (NULL included).
    double max_row_deviation() const {
        double dev = 0.0;
        for (const auto& row : rows_) {
            if (row.empty()) continue;
            double s = 0.0;
            for (const auto& [t, p] : row) s += p;
            dev = std::max(dev, std::abs(s - 1.0));
        }
        return dev;
    }

    std::size_t source_vocab_size() const noexcept { return rows_.size() - 1; }
    std::size_t target_vocab_size() const noexcept { return tgt_words_.size(); }

    // For user-built tables (tests, imported lexicons): entries are stored as given.
    void set(const std::string& src, const std::string& tgt, double p) { rows_[intern_src(src)][intern_tgt(tgt)] = p; }
    void set_null(const std::string& tgt, double p) { rows_[kNull][intern_tgt(tgt)] = p; }

    int intern_src(const std::string& w) {
        auto [it, inserted] = src_ids_.emplace(w, static_cast<int>(rows_.size()));
        if (inserted) rows_.emplace_back();
        return it->second;
    }
    int intern_tgt(const std::string& w) {
        auto [it, inserted] = tgt_ids_.emplace(w, static_cast<int>(tgt_words_.size()));
        if (inserted) tgt_words_.push_back(w);
        return it->second;
    }

    std::vector<std::unordered_map<int, double>>& rows() { return rows_; }
    const std::vector<std::unordered_map<int, double>>& rows() const { return rows_; }

private:
    std::unordered_map<std::string, int> src_ids_;
    std::unordered_map<std::string, int> tgt_ids_;
    std::vector<std::string> tgt_words_;
    std::vector<std::unordered_map<int, double>> rows_{1};  // row 0 = NULL
};

struct Ibm1Result {
    TranslationTable table;
    // Corpus log-likelihood under the table before each iteration and after the last.
    std::vector<double> log_likelihood;
};

namespace detail {
struct IdPair {
    std::vector<int> src;  // without NULL
    std::vector<int> tgt;
};

inline double ibm1_log_likelihood(const TranslationTable& tt, const std::vector<IdPair>& data) {
    double ll = 0.0;
    for (const auto& p : data) {
        const double norm = 1.0 / static_cast<double>(p.src.size() + 1);
        for (int f : p.tgt) {
            double s = tt.prob_ids(TranslationTable::kNull, f);
            for (int e : p.src) s += tt.prob_ids(e, f);
            ll += std::log(s * norm);
        }
    }
    return ll;
}
}  // namespace detail

// EM for IBM Model 1 with a NULL source word. Each source row starts uniform
// over the target words it co-occurs with. Pairs with an empty target side
// are skipped.
inline Ibm1Result train_ibm1(const std::vector<WordPair>& corpus, int iterations) {
    if (corpus.empty()) throw EmptyInputError("train_ibm1: empty corpus");
    if (iterations < 1) throw ConfigError("train_ibm1: iterations must be >= 1");

    Ibm1Result r;
    TranslationTable& tt = r.table;
    std::vector<detail::IdPair> data;
    for (const auto& p : corpus) {
        if (p.target.empty()) continue;
        detail::IdPair ip;
        for (const auto& w : p.source) ip.src.push_back(tt.intern_src(w));
        for (const auto& w : p.target) ip.tgt.push_back(tt.intern_tgt(w));
        data.push_back(std::move(ip));
    }
    if (data.empty()) throw EmptyInputError("train_ibm1: every pair has an empty target");

    auto& rows = tt.rows();
    for (const auto& p : data)
        for (int f : p.tgt) {
            rows[TranslationTable::kNull][f] = 0.0;
            for (int e : p.src) rows[static_cast<std::size_t>(e)][f] = 0.0;
        }
    for (auto& row : rows) {
        const double u = row.empty() ? 0.0 : 1.0 / static_cast<double>(row.size());
        for (auto& [f, p] : row) p = u;
    }

    for (int it = 0; it < iterations; ++it) {
        r.log_likelihood.push_back(detail::ibm1_log_likelihood(tt, data));
        std::vector<std::unordered_map<int, double>> counts(rows.size());
        for (const auto& p : data) {
            for (int f : p.tgt) {
                double z = rows[TranslationTable::kNull].at(f);
                for (int e : p.src) z += rows[static_cast<std::size_t>(e)].at(f);
                counts[TranslationTable::kNull][f] += rows[TranslationTable::kNull].at(f) / z;
                for (int e : p.src) counts[static_cast<std::size_t>(e)][f] += rows[static_cast<std::size_t>(e)].at(f) / z;
            }
        }
        for (std::size_t e = 0; e < rows.size(); ++e) {
            double total = 0.0;
            for (const auto& [f, c] : counts[e]) total += c;
            if (total <= 0.0) continue;
            for (auto& [f, p] : rows[e]) {
                auto c = counts[e].find(f);
                p = c == counts[e].end() ? 0.0 : c->second / total;
            }
        }
    }
    r.log_likelihood.push_back(detail::ibm1_log_likelihood(tt, data));
    return r;
}

inline std::vector<WordPair> reversed(const std::vector<WordPair>& corpus) {
    std::vector<WordPair> out;
    out.reserve(corpus.size());
    for (const auto& p : corpus) out.push_back({p.target, p.source});
    return out;
}

struct WordAlignment {
    std::set<std::pair<std::size_t, std::size_t>> links;  // (source index, target index)
    std::size_t src_len = 0;
    std::size_t tgt_len = 0;

    bool operator==(const WordAlignment&) const = default;
};

inline WordAlignment flip(const WordAlignment& a) {
    WordAlignment out{{}, a.tgt_len, a.src_len};
    for (const auto& [i, j] : a.links) out.links.emplace(j, i);
    return out;
}

// Each target word links to its most probable source word (smallest index on
// ties) when that word scores at least as high as NULL and above the unknown
// floor; otherwise the target word stays unlinked.
inline WordAlignment viterbi_align(const TranslationTable& tt, const WordPair& pair) {
    WordAlignment a{{}, pair.source.size(), pair.target.size()};
    for (std::size_t j = 0; j < pair.target.size(); ++j) {
        double best = -1.0;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < pair.source.size(); ++i) {
            const double p = tt.prob(pair.source[i], pair.target[j]);
            if (p > best) {
                best = p;
                arg = i;
            }
        }
        if (best > kUnknownTranslationProb && best >= tt.null_prob(pair.target[j])) a.links.emplace(arg, j);
    }
    return a;
}

inline WordAlignment symmetrize(const WordAlignment& m2c, const WordAlignment& c2m) {
    if (m2c.src_len != c2m.src_len || m2c.tgt_len != c2m.tgt_len)
        throw DimensionError("symmetrize: alignments cover " + std::to_string(m2c.src_len) + "x" +
                             std::to_string(m2c.tgt_len) + " and " + std::to_string(c2m.src_len) + "x" +
                             std::to_string(c2m.tgt_len) + " words");
    WordAlignment out{{}, m2c.src_len, m2c.tgt_len};
    std::set_intersection(m2c.links.begin(), m2c.links.end(), c2m.links.begin(), c2m.links.end(),
                          std::inserter(out.links, out.links.end()));
    return out;
}

// ---------------------------------------------------------------------------
// Pharaoh format: "i-j" pairs (source-target word indices), space separated.

inline std::string to_pharaoh(const WordAlignment& a) {
    std::string s;
    for (const auto& [i, j] : a.links) {
        if (!s.empty()) s += ' ';
        s += std::to_string(i) + "-" + std::to_string(j);
    }
    return s;
}

inline std::set<std::pair<std::size_t, std::size_t>> parse_pharaoh(std::string_view line) {
    std::set<std::pair<std::size_t, std::size_t>> links;
    std::istringstream is{std::string(line)};
    for (std::string tok; is >> tok;) {
        const auto dash = tok.find('-');
        if (dash == std::string::npos || dash == 0 || dash + 1 == tok.size())
            throw ConfigError("malformed Pharaoh link '" + tok + "'");
        try {
            std::size_t used1 = 0, used2 = 0;
            const auto i = std::stoul(tok.substr(0, dash), &used1);
            const auto j = std::stoul(tok.substr(dash + 1), &used2);
            if (used1 != dash || used2 != tok.size() - dash - 1) throw std::invalid_argument(tok);
            links.emplace(i, j);
        } catch (const std::logic_error&) {
            throw ConfigError("malformed Pharaoh link '" + tok + "'");
        }
    }
    return links;
}

inline std::vector<std::set<std::pair<std::size_t, std::size_t>>> read_pharaoh(const std::string& path) {
    std::vector<std::set<std::pair<std::size_t, std::size_t>>> out;
    for (const auto& line : read_lines(path)) out.push_back(parse_pharaoh(line));
    return out;
}

inline void write_pharaoh(const std::string& path, const std::vector<WordAlignment>& aligns) {
    std::vector<std::string> lines;
    lines.reserve(aligns.size());
    for (const auto& a : aligns) lines.push_back(to_pharaoh(a));
    write_lines(path, lines);
}

struct AlignmentScore {
    double precision = 0.0;
    double recall = 0.0;
    std::size_t predicted = 0, gold = 0, correct = 0;
};

inline void accumulate_score(AlignmentScore& s, const std::set<std::pair<std::size_t, std::size_t>>& predicted,
                             const std::set<std::pair<std::size_t, std::size_t>>& gold) {
    s.predicted += predicted.size();
    s.gold += gold.size();
    for (const auto& l : predicted) s.correct += gold.count(l);
    s.precision = s.predicted ? static_cast<double>(s.correct) / static_cast<double>(s.predicted) : 1.0;
    s.recall = s.gold ? static_cast<double>(s.correct) / static_cast<double>(s.gold) : 1.0;
}

// ---------------------------------------------------------------------------
// Word links -> character matrix

struct CharAlignmentMatrix {
    std::size_t rows = 0;  // target characters
    std::size_t cols = 0;  // source characters
    std::vector<std::uint8_t> cells;
    std::vector<std::size_t> src_word_starts;
    std::vector<std::size_t> tgt_word_starts;

    std::uint8_t at(std::size_t t, std::size_t s) const { return cells[t * cols + s]; }
    bool operator==(const CharAlignmentMatrix&) const = default;
};

// Every character of target word j gets a 1 in the column of the first
// character of its linked source word; with several links the smallest source
// index wins and unlinked target words leave zero rows.
inline CharAlignmentMatrix word_to_char_alignment(const std::set<std::pair<std::size_t, std::size_t>>& links,
                                                  const std::vector<std::string>& src_words,
                                                  const std::vector<std::string>& tgt_words) {
    CharAlignmentMatrix m;
    std::vector<std::size_t> tgt_chars;
    for (const auto& w : src_words) {
        m.src_word_starts.push_back(m.cols);
        m.cols += split_units(w).size();
    }
    for (const auto& w : tgt_words) {
        m.tgt_word_starts.push_back(m.rows);
        tgt_chars.push_back(split_units(w).size());
        m.rows += tgt_chars.back();
    }
    m.cells.assign(m.rows * m.cols, 0);
    std::vector<std::ptrdiff_t> chosen(tgt_words.size(), -1);
    for (const auto& [i, j] : links) {
        if (i >= src_words.size() || j >= tgt_words.size())
            throw DimensionError("word_to_char_alignment: link " + std::to_string(i) + "-" + std::to_string(j) +
                                 " outside " + std::to_string(src_words.size()) + "x" +
                                 std::to_string(tgt_words.size()) + " words");
        if (chosen[j] < 0 || static_cast<std::ptrdiff_t>(i) < chosen[j]) chosen[j] = static_cast<std::ptrdiff_t>(i);
    }
    for (std::size_t j = 0; j < tgt_words.size(); ++j) {
        if (chosen[j] < 0) continue;
        const std::size_t col = m.src_word_starts[static_cast<std::size_t>(chosen[j])];
        for (std::size_t k = 0; k < tgt_chars[j]; ++k) m.cells[(m.tgt_word_starts[j] + k) * m.cols + col] = 1;
    }
    return m;
}

inline CharAlignmentMatrix word_to_char_alignment(const WordAlignment& a, const std::vector<std::string>& src_words,
                                                  const std::vector<std::string>& tgt_words) {
    if (a.src_len != src_words.size() || a.tgt_len != tgt_words.size())
        throw DimensionError("word_to_char_alignment: alignment lengths do not match the word lists");
    return word_to_char_alignment(a.links, src_words, tgt_words);
}

}  // namespace dnat
