#pragma once

// Character tokenisation over a shared source/target vocabulary, greedy
// longest-match word segmentation with 0/1 boundary flags, and text cleanup.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "utf8.hpp"

namespace dnat {

inline constexpr std::string_view kRepMarker = "⟨rep⟩";

enum ReservedId : int { kPadId = 0, kBosId = 1, kEosId = 2, kUnkId = 3, kRepId = 4 };
inline constexpr int kNumReserved = 5;

// Splits text into character units: one Unicode scalar per unit, except that
// each ⟨rep⟩ marker is a single unit.
inline std::vector<std::string> split_units(std::string_view text) {
    std::vector<std::string> units;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, kRepMarker.size(), kRepMarker) == 0) {
            units.emplace_back(kRepMarker);
            i += kRepMarker.size();
            continue;
        }
        const auto b0 = static_cast<unsigned char>(text[i]);
        std::size_t len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 1;
        len = std::min(len, text.size() - i);
        units.emplace_back(text.substr(i, len));
        i += len;
    }
    return units;
}

inline bool is_space_unit(std::string_view u) {
    const auto cps = utf8::decode(u);
    return cps.size() == 1 && utf8::is_space(cps[0]);
}

class Vocab {
public:
    Vocab() {
        for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t);
        add(std::string(kRepMarker));
    }

    int add(const std::string& token) {
        if (auto it = to_id_.find(token); it != to_id_.end()) return it->second;
        const int id = static_cast<int>(to_token_.size());
        to_id_.emplace(token, id);
        to_token_.push_back(token);
        return id;
    }

    bool contains(const std::string& token) const { return to_id_.count(token) > 0; }
    int id(const std::string& token) const {
        auto it = to_id_.find(token);
        return it == to_id_.end() ? kUnkId : it->second;
    }
    const std::string& token(int id) const { return to_token_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const noexcept { return to_token_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return to_token_; }

    bool operator==(const Vocab& o) const { return to_token_ == o.to_token_; }

    // One token per line, line number = id.
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write vocab file " + path);
        for (const auto& t : to_token_) out << t << '\n';
    }

    static Vocab load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read vocab file " + path);
        std::vector<std::string> lines;
        for (std::string line; std::getline(in, line);) lines.push_back(line);
        return from_tokens(lines);
    }

    static Vocab from_tokens(const std::vector<std::string>& tokens) {
        Vocab v;
        if (tokens.size() < static_cast<std::size_t>(kNumReserved))
            throw ConfigError("vocab lists fewer than the five reserved tokens");
        for (int i = 0; i < kNumReserved; ++i)
            if (tokens[static_cast<std::size_t>(i)] != v.to_token_[static_cast<std::size_t>(i)])
                throw ConfigError("vocab line " + std::to_string(i) + " must be reserved token " +
                                  v.to_token_[static_cast<std::size_t>(i)]);
        for (std::size_t i = kNumReserved; i < tokens.size(); ++i) {
            if (v.contains(tokens[i])) throw ConfigError("duplicate vocab token '" + tokens[i] + "'");
            v.add(tokens[i]);
        }
        return v;
    }

private:
    std::unordered_map<std::string, int> to_id_;
    std::vector<std::string> to_token_;
};

struct TokenSeq {
    std::vector<int> ids;
    std::string text;
};

// Reserved tokens first, then every non-whitespace character of either side in
// order of first appearance.
template <typename PairRange>
Vocab build_vocab(const PairRange& corpus) {
    Vocab v;
    bool any = false;
    for (const auto& [src, tgt] : corpus) {
        any = true;
        for (const std::string* side : {&src, &tgt})
            for (const auto& u : split_units(*side))
                if (!is_space_unit(u)) v.add(u);
    }
    if (!any) throw EmptyInputError("build_vocab: empty corpus");
    return v;
}

inline std::vector<int> ids_for_units(const std::vector<std::string>& units, const Vocab& vocab) {
    std::vector<int> ids;
    ids.reserve(units.size());
    for (const auto& u : units) ids.push_back(vocab.id(u));
    return ids;
}

inline TokenSeq tokenize(std::string_view text, const Vocab& vocab) {
    return {ids_for_units(split_units(text), vocab), std::string(text)};
}

// Inverse of tokenize; pad/bos/eos/unk render as nothing.
inline std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
    std::string out;
    for (int id : ids) {
        if (id == kPadId || id == kBosId || id == kEosId || id == kUnkId) continue;
        out += vocab.token(id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Segmentation

class Lexicon {
public:
    Lexicon() = default;
    template <typename Range>
    explicit Lexicon(const Range& words) {
        for (const auto& w : words) add(std::string(w));
    }

    void add(const std::string& word) {
        const auto n = split_units(word).size();
        if (n == 0) return;
        if (words_.insert(word).second) max_units_ = std::max(max_units_, n);
    }
    bool contains(const std::string& w) const { return words_.count(w) > 0; }
    std::size_t size() const noexcept { return words_.size(); }
    std::size_t max_units() const noexcept { return max_units_; }

    std::vector<std::string> sorted_words() const {
        std::vector<std::string> w(words_.begin(), words_.end());
        std::sort(w.begin(), w.end());
        return w;
    }

    // UTF-8, one word per line; blank lines ignored.
    static Lexicon load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read lexicon file " + path);
        Lexicon lex;
        for (std::string line; std::getline(in, line);) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) lex.add(line);
        }
        return lex;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write lexicon file " + path);
        for (const auto& w : sorted_words()) out << w << '\n';
    }

private:
    std::unordered_set<std::string> words_;
    std::size_t max_units_ = 0;
};

struct SegmentedSentence {
    std::vector<std::string> units;     // character units
    std::vector<std::uint8_t> flags;    // 1 at the first unit of each word

    std::vector<std::string> words() const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < units.size(); ++i) {
            if (flags[i] || out.empty()) out.emplace_back();
            out.back() += units[i];
        }
        return out;
    }
    std::string text() const {
        std::string s;
        for (const auto& u : units) s += u;
        return s;
    }
};

// Greedy longest match, left to right. Unmatched units become one-unit words
// and a ⟨rep⟩ marker is always a word of its own.
inline SegmentedSentence segment_greedy(std::string_view text, const Lexicon& lexicon) {
    SegmentedSentence seg;
    seg.units = split_units(text);
    seg.flags.assign(seg.units.size(), 0);
    std::size_t i = 0;
    while (i < seg.units.size()) {
        std::size_t len = 1;
        if (seg.units[i] != kRepMarker) {
            const std::size_t limit = std::min(lexicon.max_units(), seg.units.size() - i);
            for (std::size_t n = limit; n >= 2; --n) {
                bool has_marker = false;
                std::string cand;
                for (std::size_t k = 0; k < n; ++k) {
                    has_marker = has_marker || seg.units[i + k] == kRepMarker;
                    cand += seg.units[i + k];
                }
                if (!has_marker && lexicon.contains(cand)) {
                    len = n;
                    break;
                }
            }
        }
        seg.flags[i] = 1;
        i += len;
    }
    return seg;
}

// Builds a segmentation from words that are already split (e.g. a space
// separated corpus side).
inline SegmentedSentence segment_from_words(const std::vector<std::string>& words) {
    SegmentedSentence seg;
    for (const auto& w : words) {
        auto u = split_units(w);
        for (std::size_t k = 0; k < u.size(); ++k) {
            seg.units.push_back(std::move(u[k]));
            seg.flags.push_back(k == 0 ? 1 : 0);
        }
    }
    return seg;
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (const auto& u : split_units(text)) {
        if (is_space_unit(u)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += u;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// Model-side segmentation: whitespace only separates (it never becomes a
// token) and each whitespace-delimited chunk is segmented greedily.
inline SegmentedSentence segment_for_model(std::string_view text, const Lexicon& lexicon) {
    SegmentedSentence seg;
    for (const auto& chunk : split_whitespace(text)) {
        auto part = segment_greedy(chunk, lexicon);
        seg.units.insert(seg.units.end(), part.units.begin(), part.units.end());
        seg.flags.insert(seg.flags.end(), part.flags.begin(), part.flags.end());
    }
    return seg;
}

// ---------------------------------------------------------------------------
// Preprocessing

// Full-width ASCII variants become half-width, control characters are
// dropped, whitespace runs collapse to one space and the ends are trimmed.
inline std::string preprocess(std::string_view text) {
    std::u32string out;
    bool pending_space = false;
    for (char32_t c : utf8::decode(text)) {
        if (c >= 0xFF01 && c <= 0xFF5E) c = c - 0xFF01 + 0x21;
        if (utf8::is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (c < 0x20 || (c >= 0x7F && c <= 0x9F)) continue;
        if (pending_space) out.push_back(U' ');
        pending_space = false;
        out.push_back(c);
    }
    return utf8::encode(out);
}

}  // namespace dnat
