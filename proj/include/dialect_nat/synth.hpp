#pragma once

// Synthetic "toy dialect" corpora with gold translations and gold word
// alignments. A rule set holds a source word inventory plus three kinds of
// rules: character substitution, whole-word replacement (possibly changing
// length), and marker-triggered swaps of adjacent words.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "aligner.hpp"
#include "corpus_io.hpp"
#include "errors.hpp"
#include "text.hpp"
#include "utf8.hpp"

namespace dnat {

struct DialectRuleSet {
    std::vector<std::string> inventory;             // source words
    std::map<std::string, std::string> char_map;    // source char -> dialect char
    std::map<std::string, std::string> word_rules;  // source word -> dialect word
    std::set<std::string> reorder_markers;          // marker swaps with the next word
    std::uint64_t seed = 0;

    bool empty_rules() const { return char_map.empty() && word_rules.empty() && reorder_markers.empty(); }
};

struct RuleMix {
    double char_substitution = 0.5;  // share of source characters with a dialect substitute
    double word_replacement = 0.15;  // share of words replaced wholesale
    std::size_t reorder_markers = 2;
};

namespace detail {
// Disjoint code point pools so source and dialect characters never collide.
inline constexpr char32_t kSourcePoolStart = 0x4E00;
inline constexpr char32_t kDialectPoolStart = 0x5E00;
inline constexpr std::size_t kPoolSize = 0x0F00;

class CharPool {
public:
    CharPool(char32_t start, std::mt19937_64& rng) {
        order_.resize(kPoolSize);
        for (std::size_t i = 0; i < kPoolSize; ++i) order_[i] = start + static_cast<char32_t>(i);
        std::shuffle(order_.begin(), order_.end(), rng);
    }
    std::string next() {
        if (next_ >= order_.size()) throw ConfigError("synthetic character pool exhausted");
        return utf8::encode(order_[next_++]);
    }

private:
    std::vector<char32_t> order_;
    std::size_t next_ = 0;
};
}  // namespace detail

// Deterministic per (vocab_size, seed, mix). Every source character belongs to
// exactly one inventory word, so greedy segmentation recovers the words.
inline DialectRuleSet make_rules(std::size_t vocab_size, std::uint64_t seed, const RuleMix& mix = {}) {
    if (vocab_size < 10) throw ConfigError("synth: vocab_size must be >= 10");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    detail::CharPool src_pool(detail::kSourcePoolStart, rng);
    detail::CharPool dia_pool(detail::kDialectPoolStart, rng);

    DialectRuleSet rules;
    rules.seed = seed;
    for (std::size_t w = 0; w < vocab_size; ++w) {
        const double u = unit(rng);
        const std::size_t len = u < 0.3 ? 1 : u < 0.8 ? 2 : 3;
        std::string word;
        for (std::size_t k = 0; k < len; ++k) word += src_pool.next();
        rules.inventory.push_back(word);
    }
    for (const auto& word : rules.inventory) {
        for (const auto& ch : split_units(word))
            if (unit(rng) < mix.char_substitution) rules.char_map[ch] = dia_pool.next();
    }
    std::vector<std::size_t> idx(vocab_size);
    for (std::size_t i = 0; i < vocab_size; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_word = static_cast<std::size_t>(mix.word_replacement * static_cast<double>(vocab_size));
    std::size_t k = 0;
    for (; k < n_word && k < idx.size(); ++k) {
        const auto& src = rules.inventory[idx[k]];
        const auto len = split_units(src).size();
        const int delta = static_cast<int>(rng() % 3) - 1;
        const std::size_t out_len = std::max<std::ptrdiff_t>(1, static_cast<std::ptrdiff_t>(len) + delta);
        std::string tgt;
        for (std::size_t c = 0; c < out_len; ++c) tgt += dia_pool.next();
        rules.word_rules[src] = tgt;
    }
    for (std::size_t r = 0; r < mix.reorder_markers && k < idx.size(); ++r, ++k)
        rules.reorder_markers.insert(rules.inventory[idx[k]]);
    return rules;
}

struct SynthPair {
    std::vector<std::string> source;
    std::vector<std::string> target;
    WordAlignment gold;
};

inline std::string translate_word(const DialectRuleSet& rules, const std::string& word) {
    if (word == kRepMarker) return word;
    if (auto it = rules.word_rules.find(word); it != rules.word_rules.end()) return it->second;
    std::string out;
    for (const auto& ch : split_units(word)) {
        auto it = rules.char_map.find(ch);
        out += it == rules.char_map.end() ? ch : it->second;
    }
    return out;
}

// Word-by-word translation, then a left-to-right pass where a marker that is
// followed by a non-marker word swaps places with it.
inline SynthPair apply_rules(const DialectRuleSet& rules, const std::vector<std::string>& source) {
    const std::size_t n = source.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = 0; i + 1 < n;) {
        if (rules.reorder_markers.count(source[i]) && !rules.reorder_markers.count(source[i + 1])) {
            std::swap(order[i], order[i + 1]);
            i += 2;
        } else {
            ++i;
        }
    }
    SynthPair p{source, {}, WordAlignment{{}, n, n}};
    for (std::size_t j = 0; j < n; ++j) {
        p.target.push_back(translate_word(rules, source[order[j]]));
        p.gold.links.emplace(order[j], j);
    }
    return p;
}

struct SynthOptions {
    std::size_t n = 1000;
    std::size_t min_words = 3;
    std::size_t max_words = 8;
    double rep_rate = 0.1;  // chance that one word of a sentence is a ⟨rep⟩ marker
    std::uint64_t seed = 7;
};

inline std::vector<SynthPair> generate(const DialectRuleSet& rules, const SynthOptions& opt) {
    if (opt.min_words < 1 || opt.max_words < opt.min_words)
        throw ConfigError("synth: need 1 <= min_words <= max_words");
    if (rules.inventory.size() < 10) throw ConfigError("synth: inventory must hold >= 10 words");
    std::mt19937_64 rng(opt.seed * 0x2545F4914F6CDD1DULL + 1);
    std::uniform_int_distribution<std::size_t> len_dist(opt.min_words, opt.max_words);
    std::uniform_int_distribution<std::size_t> word_dist(0, rules.inventory.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<SynthPair> out;
    out.reserve(opt.n);
    for (std::size_t s = 0; s < opt.n; ++s) {
        const std::size_t len = len_dist(rng);
        std::vector<std::string> src;
        for (std::size_t k = 0; k < len; ++k) src.push_back(rules.inventory[word_dist(rng)]);
        if (unit(rng) < opt.rep_rate) src[rng() % len] = std::string(kRepMarker);
        out.push_back(apply_rules(rules, src));
    }
    return out;
}

inline bool verify_pair(const DialectRuleSet& rules, const SynthPair& pair) {
    const SynthPair expect = apply_rules(rules, pair.source);
    return expect.target == pair.target && expect.gold == pair.gold;
}

inline std::vector<TextPair> to_text_pairs(const std::vector<SynthPair>& pairs) {
    std::vector<TextPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.emplace_back(join_words(p.source), join_words(p.target));
    return out;
}

inline std::vector<WordPair> to_word_pairs(const std::vector<SynthPair>& pairs) {
    std::vector<WordPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back({p.source, p.target});
    return out;
}

// Rule file: "rule_type TAB lhs TAB rhs" with types seed, inventory, char,
// word and reorder.
inline void save_rules(const std::string& path, const DialectRuleSet& rules) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write rules " + path);
    out << "seed\t" << rules.seed << "\t-\n";
    for (const auto& w : rules.inventory) out << "inventory\t" << w << "\t-\n";
    for (const auto& [a, b] : rules.char_map) out << "char\t" << a << '\t' << b << '\n';
    for (const auto& [a, b] : rules.word_rules) out << "word\t" << a << '\t' << b << '\n';
    for (const auto& m : rules.reorder_markers) out << "reorder\t" << m << "\tswap-next\n";
}

inline DialectRuleSet load_rules(const std::string& path) {
    DialectRuleSet rules;
    std::size_t lineno = 0;
    for (const auto& line : read_lines(path)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string cur;
        for (char c : line) {
            if (c == '\t') {
                f.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        f.push_back(cur);
        if (f.size() != 3) throw ConfigError("rules line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
        if (f[0] == "seed") {
            rules.seed = std::stoull(f[1]);
        } else if (f[0] == "inventory") {
            rules.inventory.push_back(f[1]);
        } else if (f[0] == "char") {
            rules.char_map[f[1]] = f[2];
        } else if (f[0] == "word") {
            rules.word_rules[f[1]] = f[2];
        } else if (f[0] == "reorder") {
            rules.reorder_markers.insert(f[1]);
        } else {
            throw ConfigError("rules line " + std::to_string(lineno) + ": unknown rule type '" + f[0] + "'");
        }
    }
    return rules;
}

}  // namespace dnat
