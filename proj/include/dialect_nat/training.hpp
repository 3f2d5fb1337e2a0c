#pragma once

// Glancing two-pass training for the parallel decoder, teacher-forced
// training for the autoregressive baseline, and the shared epoch loop.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aligner.hpp"
#include "autodiff.hpp"
#include "corpus_io.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "model.hpp"
#include "text.hpp"

namespace dnat {

struct GlancingSchedule {
    double lambda_start = 0.5;
    double lambda_end = 0.3;
    std::size_t total_steps = 1;

    void validate() const {
        if (!(0.0 <= lambda_end && lambda_end <= lambda_start && lambda_start <= 1.0))
            throw ConfigError("glancing schedule needs 0 <= lambda_end <= lambda_start <= 1");
    }

    // Linear in step, clamped at both ends.
    double at(std::size_t step) const {
        if (total_steps == 0) return lambda_end;
        const double f = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
        return lambda_start + (lambda_end - lambda_start) * f;
    }
};

struct LossWeights {
    double token = 1.0;
    double length = 0.1;
    double alignment = 0.5;

    void validate() const {
        if (token < 0 || length < 0 || alignment < 0) throw ConfigError("loss weights must be non-negative");
    }
};

enum class GlancingSampling { uniform, error_weighted };

// Hamming distance H between the first-pass prediction and the reference,
// then floor(lambda * H) positions drawn without replacement: from all T
// positions (uniform) or from the mismatched ones only (error_weighted).
inline std::vector<std::uint8_t> sample_glancing_positions(std::span<const int> prediction, std::span<const int> reference,
                                                           double lambda, std::mt19937_64& rng,
                                                           GlancingSampling mode = GlancingSampling::uniform) {
    if (prediction.size() != reference.size())
        throw DimensionError("sample_glancing_positions: prediction has " + std::to_string(prediction.size()) +
                             " positions, reference " + std::to_string(reference.size()));
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("glancing ratio must lie in [0, 1]");
    const std::size_t t_len = reference.size();
    std::vector<std::size_t> pool;
    std::size_t hamming = 0;
    for (std::size_t i = 0; i < t_len; ++i) {
        const bool wrong = prediction[i] != reference[i];
        hamming += wrong;
        if (mode == GlancingSampling::uniform || wrong) pool.push_back(i);
    }
    const auto n_sample = static_cast<std::size_t>(std::floor(lambda * static_cast<double>(hamming)));
    std::vector<std::uint8_t> mask(t_len, 0);
    for (std::size_t k = 0; k < n_sample; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
        std::swap(pool[k], pool[pick(rng)]);
        mask[pool[k]] = 1;
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Examples

struct TrainingExample {
    std::vector<int> src_ids;
    std::vector<std::uint8_t> src_flags;
    std::vector<int> tgt_ids;
    std::vector<double> alignment;  // tgt x src character matrix, empty when absent
};

// Source flags come from the word split of the source side; the alignment
// matrix is built from `links` when provided (one link set per pair).
inline std::vector<TrainingExample> make_examples(
    const std::vector<WordPair>& pairs, const Vocab& vocab, std::size_t max_len,
    const std::vector<std::set<std::pair<std::size_t, std::size_t>>>* links = nullptr) {
    if (links && links->size() != pairs.size())
        throw DimensionError("make_examples: " + std::to_string(links->size()) + " alignment lines for " +
                             std::to_string(pairs.size()) + " pairs");
    std::vector<TrainingExample> out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        const auto seg = segment_from_words(p.source);
        const auto tgt = segment_from_words(p.target);
        if (seg.units.empty() || tgt.units.empty()) continue;
        if (seg.units.size() > max_len || tgt.units.size() > max_len) continue;
        TrainingExample ex;
        ex.src_ids = ids_for_units(seg.units, vocab);
        ex.src_flags = seg.flags;
        ex.tgt_ids = ids_for_units(tgt.units, vocab);
        if (links) {
            const auto m = word_to_char_alignment((*links)[i], p.source, p.target);
            ex.alignment.assign(m.cells.begin(), m.cells.end());
        }
        out.push_back(std::move(ex));
    }
    return out;
}

// Drops pad/bos/eos/unk, keeping content tokens and ⟨rep⟩.
inline std::vector<int> content_ids(const std::vector<int>& ids) {
    std::vector<int> out;
    for (int id : ids)
        if (id == kRepId || id >= kNumReserved) out.push_back(id);
    return out;
}

// ---------------------------------------------------------------------------
// Steps

struct GlancingOptions {
    GlancingSampling sampling = GlancingSampling::uniform;
    // Exclude all-zero (NULL-aligned) target rows from the alignment loss.
    bool mask_null_rows = false;
    // Use this mask instead of sampling (probes and tests).
    const std::vector<std::uint8_t>* forced_mask = nullptr;
};

struct StepResult {
    double total = 0.0;
    double token = 0.0;
    double length = 0.0;
    double alignment = 0.0;
    bool has_token_loss = false;
    bool length_correct = false;
    std::size_t sampled = 0;
    std::vector<std::uint8_t> mask;
    std::vector<int> first_pass;
    Tensor logits;           // second-pass logits; grad populated after the step
    Tensor cross_attention;  // second-pass cross-attention
};

// One glancing step on a single example; accumulates parameter gradients.
// Pass 1 decodes from uniform-copy inputs without recording; reference
// embeddings then replace the decoder inputs at the sampled positions and
// pass 2 is recorded. Token loss covers unsampled positions only.
inline StepResult glancing_step(const ModelParams& p, const ModelConfig& c, const TrainingExample& ex, double lambda,
                                const LossWeights& w, std::mt19937_64& rng, const GlancingOptions& opt = {}) {
    if (w.alignment > 0.0 && ex.alignment.empty())
        throw ConfigError("alignment loss weight > 0 but the example has no alignment target");
    StepResult r;
    Tape tape;
    TapeScope scope(tape);
    const EncoderState enc = encode(p, c, ex.src_ids, ex.src_flags);
    const std::size_t t_len = ex.tgt_ids.size();
    const Tensor dec_in = init_decoder_inputs(p, c, enc, t_len);
    {
        NoGradScope ng;
        r.first_pass = decode_parallel(p, c, dec_in, enc).predicted_ids;
    }
    if (opt.forced_mask) {
        if (opt.forced_mask->size() != t_len) throw DimensionError("forced glancing mask has the wrong length");
        r.mask = *opt.forced_mask;
    } else {
        r.mask = sample_glancing_positions(r.first_pass, ex.tgt_ids, lambda, rng, opt.sampling);
    }
    r.sampled = static_cast<std::size_t>(std::count(r.mask.begin(), r.mask.end(), 1));

    Tensor glanced = dec_in;
    if (r.sampled > 0) {
        std::vector<std::size_t> ref(ex.tgt_ids.begin(), ex.tgt_ids.end());
        const Tensor ref_in = add(gather_rows(p.embedding, ref), sinusoidal_positions(t_len, c.d_model));
        glanced = where_rows(r.mask, ref_in, dec_in);
    }
    const DecodeOutput dec = decode_parallel(p, c, glanced, enc);
    r.logits = dec.logits;
    r.cross_attention = dec.cross_attention;

    Tensor total;
    auto accumulate = [&](const Tensor& term, double weight) {
        const Tensor t = scale(term, weight);
        total = total.defined() ? add(total, t) : t;
    };
    if (r.sampled < t_len) {
        std::vector<std::size_t> targets(ex.tgt_ids.begin(), ex.tgt_ids.end());
        const Tensor tok = cross_entropy(dec.logits, targets, r.mask);
        r.token = tok.item();
        r.has_token_loss = true;
        if (w.token > 0.0) accumulate(tok, w.token);
    }
    {
        const Tensor ll = length_logits(p, enc);
        const std::size_t gold = length_class(enc.length, t_len, c.length_offset_range);
        const std::size_t target[1] = {gold};
        const Tensor len_loss = cross_entropy(ll, target);
        r.length = len_loss.item();
        r.length_correct = length_from_logits(ll.values(), enc.length, c.length_offset_range, c.max_len) ==
                           std::clamp<std::size_t>(t_len, 1, c.max_len);
        if (w.length > 0.0) accumulate(len_loss, w.length);
    }
    if (w.alignment > 0.0) {
        const std::size_t s_len = enc.length;
        if (ex.alignment.size() != t_len * s_len)
            throw DimensionError("alignment target is not " + std::to_string(t_len) + "x" + std::to_string(s_len));
        const Tensor target({t_len, s_len}, ex.alignment);
        std::vector<std::uint8_t> keep;
        if (opt.mask_null_rows) {
            keep.assign(t_len * s_len, 1);
            for (std::size_t t = 0; t < t_len; ++t) {
                const bool null_row =
                    std::all_of(ex.alignment.begin() + static_cast<std::ptrdiff_t>(t * s_len),
                                ex.alignment.begin() + static_cast<std::ptrdiff_t>((t + 1) * s_len), [](double v) { return v == 0.0; });
                if (null_row) std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>(t * s_len), s_len, 0);
            }
            if (std::find(keep.begin(), keep.end(), 1) == keep.end()) keep.clear();
        }
        if (!opt.mask_null_rows || !keep.empty()) {
            const Tensor al = mse_loss(dec.cross_attention, target, keep);
            r.alignment = al.item();
            accumulate(al, w.alignment);
        }
    }
    if (total.defined()) {
        r.total = total.item();
        if (std::isfinite(r.total) && total.requires_grad()) tape.backward(total);
    }
    return r;
}

// Teacher-forced step for the autoregressive model: input <bos> y1..yT,
// targets y1..yT <eos>.
inline StepResult autoregressive_step(const ModelParams& p, const ModelConfig& c, const TrainingExample& ex) {
    StepResult r;
    Tape tape;
    TapeScope scope(tape);
    const EncoderState enc = encode(p, c, ex.src_ids, ex.src_flags);
    const DecodeOutput dec = decode_parallel(p, c, at_decoder_inputs(p, c, ex.tgt_ids), enc, /*causal=*/true);
    std::vector<std::size_t> targets(ex.tgt_ids.begin(), ex.tgt_ids.end());
    targets.push_back(kEosId);
    const Tensor loss = cross_entropy(dec.logits, targets);
    r.logits = dec.logits;
    r.cross_attention = dec.cross_attention;
    r.token = r.total = loss.item();
    r.has_token_loss = true;
    if (std::isfinite(r.total)) tape.backward(loss);
    return r;
}

// ---------------------------------------------------------------------------
// Optimisation

enum class OptimizerKind { sgd, adam };

struct OptimizerOptions {
    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 0.1;
    double clip_norm = 1.0;  // global gradient norm; <= 0 disables clipping
    double beta1 = 0.9, beta2 = 0.98, adam_eps = 1e-9;
    // Constant learning rate until this fraction of training, then linear
    // decay to decay_floor * learning_rate.
    double decay_start = 1.0;
    double decay_floor = 0.1;
};

class Optimizer {
public:
    Optimizer(const ModelParams::Named& params, OptimizerOptions opt) : params_(params), opt_(opt) {
        if (opt_.kind == OptimizerKind::adam) {
            for (const auto& [name, t] : params_) {
                m_.emplace_back(t.size(), 0.0);
                v_.emplace_back(t.size(), 0.0);
            }
        }
    }

    double rate(std::size_t step, std::size_t total_steps) const {
        if (total_steps == 0 || opt_.decay_start >= 1.0) return opt_.learning_rate;
        const double f = static_cast<double>(step) / static_cast<double>(total_steps);
        if (f <= opt_.decay_start) return opt_.learning_rate;
        const double g = std::min(1.0, (f - opt_.decay_start) / (1.0 - opt_.decay_start));
        return opt_.learning_rate * (1.0 - (1.0 - opt_.decay_floor) * g);
    }

    // Scales gradients by 1/batch, clips by global norm, updates, and zeroes
    // the gradients. Returns the pre-clip norm.
    double step(std::size_t batch, std::size_t step, std::size_t total_steps) {
        const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(batch, 1));
        double sq = 0.0;
        for (auto& [name, t] : params_) {
            if (!t.has_grad()) continue;
            for (double& g : t.grad()) {
                g *= inv;
                sq += g * g;
            }
        }
        const double norm = std::sqrt(sq);
        const double clip = (opt_.clip_norm > 0.0 && norm > opt_.clip_norm) ? opt_.clip_norm / norm : 1.0;
        const double lr = rate(step, total_steps);
        ++t_;
        for (std::size_t k = 0; k < params_.size(); ++k) {
            Tensor& t = params_[k].second;
            if (!t.has_grad()) continue;
            auto g = t.grad();
            auto x = t.values();
            if (opt_.kind == OptimizerKind::sgd) {
                for (std::size_t i = 0; i < x.size(); ++i) x[i] -= lr * clip * g[i];
            } else {
                const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
                const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
                auto& m = m_[k];
                auto& v = v_[k];
                for (std::size_t i = 0; i < x.size(); ++i) {
                    const double gi = g[i] * clip;
                    m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
                    v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
                    x[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt_.adam_eps);
                }
            }
            t.zero_grad();
        }
        return norm;
    }

    void zero_grad() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

private:
    ModelParams::Named params_;
    OptimizerOptions opt_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double token_loss = 0.0;
    double length_accuracy = 0.0;
    double alignment_loss = 0.0;
    double valid_bleu = 0.0;
    double wall_seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;

    static std::string tsv_header() {
        return "epoch\tstep\ttoken_loss\tlength_accuracy\talignment_loss\tvalid_bleu\twall_seconds";
    }
    static std::string tsv_row(const EpochRecord& e) {
        std::ostringstream os;
        os << std::setprecision(6) << e.epoch << '\t' << e.step << '\t' << e.token_loss << '\t' << e.length_accuracy
           << '\t' << e.alignment_loss << '\t' << e.valid_bleu << '\t' << e.wall_seconds;
        return os.str();
    }
    // Append-only: the header is written only when the file is new or empty.
    void append_tsv(const std::string& path, const EpochRecord& e) const {
        std::ifstream probe(path, std::ios::binary | std::ios::ate);
        const bool fresh = !probe || probe.tellg() == 0;
        std::ofstream out(path, std::ios::binary | std::ios::app);
        if (!out) throw IoError("cannot append to report " + path);
        if (fresh) out << tsv_header() << '\n';
        out << tsv_row(e) << '\n';
    }
};

struct TrainOptions {
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    OptimizerOptions optimizer;
    double lambda_start = 0.5;
    double lambda_end = 0.3;
    LossWeights weights;
    GlancingOptions glancing;
    std::uint64_t seed = 1;
    std::size_t max_validation = 200;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    // Best validation BLEU; the initialisation when epochs == 0; the last
    // finite epoch after divergence.
    ModelParams params;
    TrainReport report;
    double best_bleu = -1.0;
    std::size_t best_epoch = 0;
    bool diverged = false;
};

inline double corpus_bleu_ids(const std::vector<std::vector<int>>& cands, const std::vector<std::vector<int>>& refs) {
    return bleu(cands, refs).bleu;
}

// Character BLEU of `infer` over the validation examples.
inline double validation_bleu(const std::vector<TrainingExample>& valid, std::size_t limit,
                              const std::function<std::vector<int>(const TrainingExample&)>& infer) {
    std::vector<std::vector<int>> cands, refs;
    for (std::size_t i = 0; i < valid.size() && i < limit; ++i) {
        cands.push_back(content_ids(infer(valid[i])));
        refs.push_back(content_ids(valid[i].tgt_ids));
    }
    if (cands.empty()) return 0.0;
    return corpus_bleu_ids(cands, refs);
}

namespace detail {

inline bool all_finite(const ModelParams& p) {
    for (const auto& [name, t] : p.named())
        for (double v : t.values())
            if (!std::isfinite(v)) return false;
    return true;
}

using StepFn = std::function<StepResult(const ModelParams&, const TrainingExample&, double lambda, std::mt19937_64&)>;
using InferFn = std::function<std::vector<int>(const ModelParams&, const TrainingExample&)>;

inline TrainResult train_loop(const ModelConfig& config, std::vector<TrainingExample> data,
                              const std::vector<TrainingExample>& valid, const TrainOptions& opt, const StepFn& step_fn,
                              const InferFn& infer_fn) {
    config.validate();
    opt.weights.validate();
    if (data.empty()) throw EmptyInputError("train: empty corpus");
    const std::size_t batch = std::max<std::size_t>(opt.batch_size, 1);
    const std::size_t batches_per_epoch = (data.size() + batch - 1) / batch;
    GlancingSchedule sched{opt.lambda_start, opt.lambda_end, opt.epochs * batches_per_epoch};
    sched.validate();

    ModelParams params = init_params(config, opt.seed);
    TrainResult result;
    result.params = params.clone();
    if (opt.epochs == 0) return result;

    std::mt19937_64 shuffle_rng(opt.seed + 0x51ED);
    std::mt19937_64 glance_rng(opt.seed + 0xC0FFEE);
    Optimizer optim(params.named(), opt.optimizer);
    const auto start = std::chrono::steady_clock::now();
    std::size_t step = 0;
    ModelParams last_good = params.clone();
    auto infer = [&](const TrainingExample& ex) { return infer_fn(params, ex); };

    for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
        std::shuffle(data.begin(), data.end(), shuffle_rng);
        double tok_sum = 0.0, al_sum = 0.0;
        std::size_t tok_n = 0, len_ok = 0, seen = 0;
        for (std::size_t b0 = 0; b0 < data.size(); b0 += batch) {
            const std::size_t b1 = std::min(data.size(), b0 + batch);
            const double lambda = sched.at(step);
            for (std::size_t i = b0; i < b1; ++i) {
                StepResult s;
                try {
                    s = step_fn(params, data[i], lambda, glance_rng);
                } catch (const InstabilityError&) {
                    s.total = std::numeric_limits<double>::quiet_NaN();
                }
                if (!std::isfinite(s.total)) {
                    result.diverged = true;
                    result.params = last_good;
                    return result;
                }
                if (s.has_token_loss) {
                    tok_sum += s.token;
                    ++tok_n;
                }
                al_sum += s.alignment;
                len_ok += s.length_correct;
                ++seen;
            }
            const double norm = optim.step(b1 - b0, step, sched.total_steps);
            ++step;
            if (!std::isfinite(norm) || !all_finite(params)) {
                result.diverged = true;
                result.params = last_good;
                return result;
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.step = step;
        rec.token_loss = tok_n ? tok_sum / static_cast<double>(tok_n) : 0.0;
        rec.length_accuracy = seen ? static_cast<double>(len_ok) / static_cast<double>(seen) : 0.0;
        rec.alignment_loss = seen ? al_sum / static_cast<double>(seen) : 0.0;
        rec.valid_bleu = validation_bleu(valid.empty() ? data : valid, opt.max_validation, infer);
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.report.epochs.push_back(rec);
        if (opt.on_epoch) opt.on_epoch(rec);
        if (rec.valid_bleu > result.best_bleu) {
            result.best_bleu = rec.valid_bleu;
            result.best_epoch = epoch;
            result.params = params.clone();
        }
        last_good = params.clone();
    }
    return result;
}

}  // namespace detail

// Real and augmented examples are concatenated and shuffled together.
inline TrainResult train_nat(const ModelConfig& config, const std::vector<TrainingExample>& corpus,
                             const std::vector<TrainingExample>& augmented, const std::vector<TrainingExample>& valid,
                             const TrainOptions& opt) {
    if (config.kind != ModelKind::nat) throw ConfigError("train_nat needs a nat config");
    std::vector<TrainingExample> data = corpus;
    data.insert(data.end(), augmented.begin(), augmented.end());
    const LossWeights w = opt.weights;
    const GlancingOptions g = opt.glancing;
    return detail::train_loop(
        config, std::move(data), valid, opt,
        [&](const ModelParams& p, const TrainingExample& ex, double lambda, std::mt19937_64& rng) {
            return glancing_step(p, config, ex, lambda, w, rng, g);
        },
        [&](const ModelParams& p, const TrainingExample& ex) { return infer_nat(p, config, ex.src_ids, ex.src_flags).ids; });
}

inline TrainResult train_at(const ModelConfig& config, const std::vector<TrainingExample>& corpus,
                            const std::vector<TrainingExample>& valid, const TrainOptions& opt) {
    if (config.kind != ModelKind::at) throw ConfigError("train_at needs an at config");
    return detail::train_loop(
        config, corpus, valid, opt,
        [&](const ModelParams& p, const TrainingExample& ex, double, std::mt19937_64&) {
            return autoregressive_step(p, config, ex);
        },
        [&](const ModelParams& p, const TrainingExample& ex) {
            return infer_at(p, config, ex.src_ids, ex.src_flags,
                            GreedyOptions{std::min<std::size_t>(config.max_len, 2 * ex.src_ids.size() + 10), false});
        });
}

}  // namespace dnat
