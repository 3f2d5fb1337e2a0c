#pragma once

// Corpus BLEU and decoding-latency measurement.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "errors.hpp"

namespace dnat {

struct BleuOptions {
    std::size_t max_order = 4;
    // Add-one smoothing of orders >= 2, for sentence-level scores.
    bool smooth = false;
};

struct BleuReport {
    double bleu = 0.0;  // in [0, 1]
    std::vector<double> precisions;
    std::vector<std::size_t> matches;
    std::vector<std::size_t> totals;
    double brevity_penalty = 1.0;
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0;
};

namespace detail {
template <typename Token>
std::map<std::vector<Token>, std::size_t> ngram_counts(const std::vector<Token>& s, std::size_t n) {
    std::map<std::vector<Token>, std::size_t> out;
    if (s.size() < n) return out;
    for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[std::vector<Token>(s.begin() + i, s.begin() + i + n)];
    return out;
}
}  // namespace detail

// Clipped n-gram precision per order aggregated over the corpus, single
// reference per candidate. BP = exp(1 - r/c) when c <= r, else 1. Without
// smoothing, an order with zero matches yields BLEU 0; orders for which
// neither side of the corpus has any n-grams are left out of the mean.
template <typename Token>
BleuReport bleu(const std::vector<std::vector<Token>>& candidates, const std::vector<std::vector<Token>>& references,
                const BleuOptions& opt = {}) {
    if (candidates.empty()) throw EmptyInputError("bleu: empty corpus");
    if (candidates.size() != references.size())
        throw DimensionError("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                             std::to_string(references.size()) + " references");
    BleuReport r;
    r.matches.assign(opt.max_order, 0);
    r.totals.assign(opt.max_order, 0);
    std::vector<std::size_t> ref_totals(opt.max_order, 0);
    for (std::size_t s = 0; s < candidates.size(); ++s) {
        const auto& c = candidates[s];
        const auto& ref = references[s];
        r.candidate_length += c.size();
        r.reference_length += ref.size();
        for (std::size_t n = 1; n <= opt.max_order; ++n) {
            const auto cc = detail::ngram_counts(c, n);
            const auto rc = detail::ngram_counts(ref, n);
            for (const auto& [g, k] : cc) {
                r.totals[n - 1] += k;
                auto it = rc.find(g);
                if (it != rc.end()) r.matches[n - 1] += std::min(k, it->second);
            }
            if (ref.size() >= n) ref_totals[n - 1] += ref.size() - n + 1;
        }
    }
    r.precisions.assign(opt.max_order, 0.0);
    double log_sum = 0.0;
    std::size_t used = 0;
    bool zero = false;
    for (std::size_t n = 1; n <= opt.max_order; ++n) {
        const std::size_t m = r.matches[n - 1], t = r.totals[n - 1];
        if (t == 0 && ref_totals[n - 1] == 0) continue;
        double p;
        if (opt.smooth && n >= 2)
            p = (static_cast<double>(m) + 1.0) / (static_cast<double>(t) + 1.0);
        else
            p = t == 0 ? 0.0 : static_cast<double>(m) / static_cast<double>(t);
        r.precisions[n - 1] = p;
        if (p <= 0.0) {
            zero = true;
            continue;
        }
        log_sum += std::log(p);
        ++used;
    }
    const double c = static_cast<double>(r.candidate_length), rl = static_cast<double>(r.reference_length);
    if (r.candidate_length == 0)
        r.brevity_penalty = r.reference_length == 0 ? 1.0 : 0.0;
    else
        r.brevity_penalty = c <= rl ? std::exp(1.0 - rl / c) : 1.0;
    if (zero)
        r.bleu = 0.0;
    else
        r.bleu = r.brevity_penalty * (used ? std::exp(log_sum / static_cast<double>(used)) : 1.0);
    return r;
}

// ---------------------------------------------------------------------------
// Latency

struct LatencyReport {
    std::vector<double> seconds;       // median per sentence
    std::vector<std::size_t> out_chars;
    double mean_seconds = 0.0;
    double mean_seconds_per_char = 0.0;
    double rtf_proxy = 0.0;            // mean of latency / (chars * seconds_per_char)
};

// Processing time over the estimated speech duration of the output.
inline double rtf_proxy(double seconds, std::size_t out_chars, double seconds_per_char) {
    return seconds / (static_cast<double>(out_chars) * seconds_per_char);
}

// Times `run(i)` (which returns the number of output characters) for every
// sentence: `warmup` untimed calls, then the median of `repetitions` timed
// calls. Runs are strictly sequential.
inline LatencyReport bench_latency(const std::function<std::size_t(std::size_t)>& run, std::size_t n_sentences,
                                   std::size_t repetitions, double seconds_per_char = 0.2, std::size_t warmup = 1) {
    if (n_sentences == 0) throw EmptyInputError("bench_latency: empty test set");
    if (repetitions == 0) throw ConfigError("bench_latency: repetitions must be >= 1");
    using clock = std::chrono::steady_clock;
    LatencyReport r;
    double chars_total = 0.0, rtf_sum = 0.0;
    std::size_t rtf_n = 0;
    for (std::size_t i = 0; i < n_sentences; ++i) {
        std::size_t chars = 0;
        for (std::size_t w = 0; w < warmup; ++w) chars = run(i);
        std::vector<double> times;
        for (std::size_t k = 0; k < repetitions; ++k) {
            const auto t0 = clock::now();
            chars = run(i);
            times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
        }
        std::sort(times.begin(), times.end());
        const double med = times.size() % 2 ? times[times.size() / 2]
                                             : 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);
        r.seconds.push_back(med);
        r.out_chars.push_back(chars);
        r.mean_seconds += med;
        chars_total += static_cast<double>(chars);
        if (chars > 0) {
            rtf_sum += rtf_proxy(med, chars, seconds_per_char);
            ++rtf_n;
        }
    }
    r.mean_seconds /= static_cast<double>(n_sentences);
    r.mean_seconds_per_char = chars_total > 0 ? r.mean_seconds * static_cast<double>(n_sentences) / chars_total : 0.0;
    r.rtf_proxy = rtf_n ? rtf_sum / static_cast<double>(rtf_n) : 0.0;
    return r;
}

inline double speedup(const LatencyReport& nat, const LatencyReport& at) { return at.mean_seconds / nat.mean_seconds; }

}  // namespace dnat
