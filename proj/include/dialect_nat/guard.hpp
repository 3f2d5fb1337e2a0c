#pragma once

// Untranslatable spans (URLs, e-mail addresses, Latin abbreviations,
// emoticons) are swapped for ⟨rep⟩ before translation and put back after.

#include <algorithm>
#include <fstream>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "text.hpp"

namespace dnat {

struct GuardSpan {
    std::size_t begin = 0;  // byte offsets into the original text
    std::size_t end = 0;
};

struct GuardedText {
    std::string guarded;
    std::vector<std::string> originals;
    std::vector<GuardSpan> spans;
};

class GuardPatterns {
public:
    GuardPatterns() = default;

    explicit GuardPatterns(std::vector<std::string> sources) : sources_(std::move(sources)) {
        for (const auto& s : sources_) {
            try {
                compiled_.emplace_back(s, std::regex::ECMAScript | std::regex::optimize);
            } catch (const std::regex_error& e) {
                throw PatternError("cannot compile guard pattern '" + s + "': " + e.what());
            }
        }
    }

    // URLs, e-mail addresses, Latin-letter abbreviations of length >= 2, and
    // ASCII emoticons, in priority order.
    static GuardPatterns defaults() {
        return GuardPatterns({
            R"((?:https?://|www\.)[A-Za-z0-9\-._~:/?#\[\]@!$&'()*+,;=%]+)",
            R"([A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,})",
            R"([A-Za-z][A-Za-z0-9]*[A-Za-z][A-Za-z0-9]*)",
            R"([:;=8][\-o']?[)(\]\[DPpO3/|]+|\^_+\^|[Tt]_[Tt]|>_<|<3)",
        });
    }

    // One regular expression per line; line order is priority.
    static GuardPatterns load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read pattern file " + path);
        std::vector<std::string> lines;
        for (std::string line; std::getline(in, line);) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) lines.push_back(line);
        }
        return GuardPatterns(std::move(lines));
    }

    const std::vector<std::regex>& compiled() const noexcept { return compiled_; }
    const std::vector<std::string>& sources() const noexcept { return sources_; }

private:
    std::vector<std::string> sources_;
    std::vector<std::regex> compiled_;
};

// Left to right, earliest match first (ties go to the higher-priority
// pattern). Each pattern is searched again from the
// end of the last accepted span. Matches overlapping an existing ⟨rep⟩
// marker are skipped.
inline GuardedText guard(std::string_view text, const GuardPatterns& patterns) {
    std::vector<GuardSpan> blocked;
    for (std::size_t pos = text.find(kRepMarker); pos != std::string_view::npos;
         pos = text.find(kRepMarker, pos + kRepMarker.size()))
        blocked.push_back({pos, pos + kRepMarker.size()});
    auto is_blocked = [&](std::size_t b, std::size_t e) {
        return std::any_of(blocked.begin(), blocked.end(), [&](const GuardSpan& s) { return b < s.end && s.begin < e; });
    };

    const std::string owned(text);
    auto first_match = [&](const std::regex& re, std::size_t from) -> std::optional<GuardSpan> {
        while (from < owned.size()) {
            std::smatch m;
            const auto flags = from > 0 ? std::regex_constants::match_prev_avail : std::regex_constants::match_default;
            if (!std::regex_search(owned.cbegin() + static_cast<std::ptrdiff_t>(from), owned.cend(), m, re, flags))
                return std::nullopt;
            const std::size_t b = from + static_cast<std::size_t>(m.position(0));
            const std::size_t e = b + static_cast<std::size_t>(m.length(0));
            if (e > b && !is_blocked(b, e)) return GuardSpan{b, e};
            from = b + 1;
        }
        return std::nullopt;
    };

    GuardedText out;
    std::size_t cursor = 0;
    for (;;) {
        std::optional<GuardSpan> best;
        for (const auto& re : patterns.compiled()) {
            const auto m = first_match(re, cursor);
            if (m && (!best || m->begin < best->begin)) best = m;
        }
        if (!best) break;
        out.guarded.append(text.substr(cursor, best->begin - cursor));
        out.guarded.append(kRepMarker);
        out.originals.emplace_back(text.substr(best->begin, best->end - best->begin));
        out.spans.push_back(*best);
        cursor = best->end;
    }
    out.guarded.append(text.substr(cursor));
    return out;
}

struct UnguardResult {
    std::string text;
    std::vector<GuardSpan> restored;  // byte spans of reinserted originals in `text`
};

// The i-th marker becomes originals[i]. Missing markers: the leftover
// originals are appended at the end, space separated. Surplus markers are
// deleted.
inline UnguardResult unguard_with_spans(std::string_view translated, const GuardedText& g) {
    UnguardResult r;
    std::size_t next = 0;
    std::size_t cursor = 0;
    for (std::size_t pos = translated.find(kRepMarker); pos != std::string_view::npos;
         pos = translated.find(kRepMarker, cursor)) {
        r.text.append(translated.substr(cursor, pos - cursor));
        if (next < g.originals.size()) {
            r.restored.push_back({r.text.size(), r.text.size() + g.originals[next].size()});
            r.text.append(g.originals[next++]);
        }
        cursor = pos + kRepMarker.size();
    }
    r.text.append(translated.substr(cursor));
    for (; next < g.originals.size(); ++next) {
        if (!r.text.empty()) r.text.push_back(' ');
        r.restored.push_back({r.text.size(), r.text.size() + g.originals[next].size()});
        r.text.append(g.originals[next]);
    }
    return r;
}

inline std::string unguard(std::string_view translated, const GuardedText& g) {
    return unguard_with_spans(translated, g).text;
}

}  // namespace dnat
