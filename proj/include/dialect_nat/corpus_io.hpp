#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "text.hpp"

namespace dnat {

using TextPair = std::pair<std::string, std::string>;

struct WordPair {
    std::vector<std::string> source;
    std::vector<std::string> target;
};

inline WordPair to_word_pair(const TextPair& p) { return {split_whitespace(p.first), split_whitespace(p.second)}; }

inline std::vector<WordPair> to_word_pairs(const std::vector<TextPair>& pairs) {
    std::vector<WordPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(to_word_pair(p));
    return out;
}

inline std::string join_words(const std::vector<std::string>& words, std::string_view sep = " ") {
    std::string s;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) s += sep;
        s += words[i];
    }
    return s;
}

// source TAB target, one pair per line. A line without a tab is a
// source-only line with an empty target.
inline std::vector<TextPair> read_tsv_pairs(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read corpus " + path);
    std::vector<TextPair> out;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            out.emplace_back(line, "");
        else
            out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return out;
}

inline void write_tsv_pairs(const std::string& path, const std::vector<TextPair>& pairs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus " + path);
    for (const auto& [s, t] : pairs) out << s << '\t' << t << '\n';
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(line);
    }
    return out;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& l : lines) out << l << '\n';
}

}  // namespace dnat
