#pragma once

// Translation network: multibranch transformer encoder with a word-boundary
// embedding stitched onto the character embedding, a length predictor, a
// parallel (non-autoregressive) decoder fed by uniform copies of the encoder
// states, and an output projection tied to the token embedding. The same
// layers also assemble the causally masked autoregressive baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "errors.hpp"
#include "text.hpp"

namespace dnat {

enum class ModelKind { nat, at };

inline std::string to_string(ModelKind k) { return k == ModelKind::nat ? "nat" : "at"; }

struct ModelConfig {
    ModelKind kind = ModelKind::nat;
    std::size_t d_model = 300;
    std::size_t n_branches = 2;
    std::size_t n_heads = 2;  // per branch
    std::size_t n_layers = 1;
    std::size_t d_seg = 16;
    std::size_t ffn_multiplier = 4;
    std::size_t max_len = 256;
    std::size_t length_offset_range = 20;  // K: offsets in [-K, K]
    std::size_t vocab_size = 0;
    bool seg_on_decoder = false;  // stitch boundary embedding into decoder inputs instead

    std::size_t branch_width() const { return d_model / n_branches; }
    std::size_t head_width() const { return branch_width() / n_heads; }
    std::size_t length_classes() const { return 2 * length_offset_range + 1; }

    void validate() const {
        if (n_branches == 0 || d_model % n_branches != 0)
            throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_branches " +
                              std::to_string(n_branches));
        if (n_heads == 0 || branch_width() % n_heads != 0)
            throw ConfigError("branch width " + std::to_string(branch_width()) + " is not divisible by n_heads " +
                              std::to_string(n_heads));
        if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
        if (length_offset_range < 1) throw ConfigError("length_offset_range must be >= 1");
        if (d_seg < 1) throw ConfigError("d_seg must be >= 1");
        if (ffn_multiplier < 1) throw ConfigError("ffn_multiplier must be >= 1");
        if (max_len < 1) throw ConfigError("max_len must be >= 1");
        if (vocab_size <= static_cast<std::size_t>(kNumReserved)) throw ConfigError("vocab_size must exceed the reserved tokens");
    }

    bool operator==(const ModelConfig&) const = default;

    // "key=value" lines; the checkpoint config block.
    std::string serialize() const {
        std::ostringstream os;
        os << "kind=" << to_string(kind) << '\n'
           << "d_model=" << d_model << '\n'
           << "n_branches=" << n_branches << '\n'
           << "n_heads=" << n_heads << '\n'
           << "n_layers=" << n_layers << '\n'
           << "d_seg=" << d_seg << '\n'
           << "ffn_multiplier=" << ffn_multiplier << '\n'
           << "max_len=" << max_len << '\n'
           << "length_offset_range=" << length_offset_range << '\n'
           << "vocab_size=" << vocab_size << '\n'
           << "seg_on_decoder=" << (seg_on_decoder ? 1 : 0) << '\n';
        return os.str();
    }

    static ModelConfig parse(const std::string& block) {
        ModelConfig c;
        std::istringstream is(block);
        for (std::string line; std::getline(is, line);) {
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("config line without '=': " + line);
            const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
            auto num = [&]() -> std::size_t {
                try {
                    return std::stoul(val);
                } catch (const std::logic_error&) {
                    throw ConfigError("config key " + key + " has non-numeric value '" + val + "'");
                }
            };
            if (key == "kind") {
                if (val != "nat" && val != "at") throw ConfigError("unknown model kind '" + val + "'");
                c.kind = val == "nat" ? ModelKind::nat : ModelKind::at;
            } else if (key == "d_model") {
                c.d_model = num();
            } else if (key == "n_branches") {
                c.n_branches = num();
            } else if (key == "n_heads") {
                c.n_heads = num();
            } else if (key == "n_layers") {
                c.n_layers = num();
            } else if (key == "d_seg") {
                c.d_seg = num();
            } else if (key == "ffn_multiplier") {
                c.ffn_multiplier = num();
            } else if (key == "max_len") {
                c.max_len = num();
            } else if (key == "length_offset_range") {
                c.length_offset_range = num();
            } else if (key == "vocab_size") {
                c.vocab_size = num();
            } else if (key == "seg_on_decoder") {
                c.seg_on_decoder = num() != 0;
            } else {
                throw ConfigError("unknown config key '" + key + "'");
            }
        }
        return c;
    }
};

// ---------------------------------------------------------------------------
// Parameters

struct BranchAttention {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct AttentionBlock {
    std::vector<BranchAttention> branches;
    Tensor norm_gain, norm_bias;
};

struct BranchFfn {
    Tensor w1, b1, w2, b2;
};

struct FfnBlock {
    std::vector<BranchFfn> branches;
    Tensor norm_gain, norm_bias;
};

struct EncoderLayer {
    AttentionBlock self_attn;
    FfnBlock ffn;
};

struct DecoderLayer {
    AttentionBlock self_attn;
    AttentionBlock cross_attn;
    FfnBlock ffn;
};

struct ModelParams {
    Tensor embedding;  // [V x d]; also the output projection
    Tensor seg_embedding;
    Tensor stitch_w, stitch_b;
    std::vector<EncoderLayer> encoder;
    std::vector<DecoderLayer> decoder;
    Tensor length_w, length_b;  // NAT only

    using Named = std::vector<std::pair<std::string, Tensor>>;

    // Stable names and order, used by checkpoints and optimisers.
    Named named() const {
        Named out;
        auto put = [&](std::string name, const Tensor& t) {
            if (t.defined()) out.emplace_back(std::move(name), t);
        };
        auto put_attn = [&](const std::string& p, const AttentionBlock& a) {
            for (std::size_t b = 0; b < a.branches.size(); ++b) {
                const auto& br = a.branches[b];
                const std::string q = p + ".branch" + std::to_string(b);
                put(q + ".wq", br.wq), put(q + ".bq", br.bq), put(q + ".wk", br.wk), put(q + ".bk", br.bk);
                put(q + ".wv", br.wv), put(q + ".bv", br.bv), put(q + ".wo", br.wo), put(q + ".bo", br.bo);
            }
            put(p + ".norm_gain", a.norm_gain), put(p + ".norm_bias", a.norm_bias);
        };
        auto put_ffn = [&](const std::string& p, const FfnBlock& f) {
            for (std::size_t b = 0; b < f.branches.size(); ++b) {
                const auto& br = f.branches[b];
                const std::string q = p + ".branch" + std::to_string(b);
                put(q + ".w1", br.w1), put(q + ".b1", br.b1), put(q + ".w2", br.w2), put(q + ".b2", br.b2);
            }
            put(p + ".norm_gain", f.norm_gain), put(p + ".norm_bias", f.norm_bias);
        };
        put("embedding", embedding);
        put("seg_embedding", seg_embedding);
        put("stitch_w", stitch_w);
        put("stitch_b", stitch_b);
        for (std::size_t l = 0; l < encoder.size(); ++l) {
            const std::string p = "encoder" + std::to_string(l);
            put_attn(p + ".self_attn", encoder[l].self_attn);
            put_ffn(p + ".ffn", encoder[l].ffn);
        }
        for (std::size_t l = 0; l < decoder.size(); ++l) {
            const std::string p = "decoder" + std::to_string(l);
            put_attn(p + ".self_attn", decoder[l].self_attn);
            put_attn(p + ".cross_attn", decoder[l].cross_attn);
            put_ffn(p + ".ffn", decoder[l].ffn);
        }
        put("length_w", length_w);
        put("length_b", length_b);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : named()) n += t.size();
        return n;
    }

    // Independent copy of every weight (graph-free).
    ModelParams clone() const {
        ModelParams c = *this;
        c.embedding = embedding.clone();
        c.seg_embedding = seg_embedding.clone();
        c.stitch_w = stitch_w.clone();
        c.stitch_b = stitch_b.clone();
        auto clone_attn = [](AttentionBlock& a) {
            for (auto& br : a.branches)
                for (Tensor* t : {&br.wq, &br.bq, &br.wk, &br.bk, &br.wv, &br.bv, &br.wo, &br.bo}) *t = t->clone();
            a.norm_gain = a.norm_gain.clone();
            a.norm_bias = a.norm_bias.clone();
        };
        auto clone_ffn = [](FfnBlock& f) {
            for (auto& br : f.branches)
                for (Tensor* t : {&br.w1, &br.b1, &br.w2, &br.b2}) *t = t->clone();
            f.norm_gain = f.norm_gain.clone();
            f.norm_bias = f.norm_bias.clone();
        };
        for (auto& l : c.encoder) clone_attn(l.self_attn), clone_ffn(l.ffn);
        for (auto& l : c.decoder) clone_attn(l.self_attn), clone_attn(l.cross_attn), clone_ffn(l.ffn);
        if (length_w.defined()) c.length_w = length_w.clone();
        if (length_b.defined()) c.length_b = length_b.clone();
        return c;
    }

    void set_requires_grad(bool on) {
        for (auto [name, t] : named()) t.set_requires_grad(on);
    }
};

namespace detail {

inline Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    Tensor t({fan_in, fan_out});
    for (double& v : t.values()) v = u(rng);
    return t;
}

inline Tensor gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, stddev);
    Tensor t({rows, cols});
    for (double& v : t.values()) v = n(rng);
    return t;
}

inline AttentionBlock make_attention(const ModelConfig& c, std::mt19937_64& rng) {
    AttentionBlock a;
    const std::size_t w = c.branch_width();
    for (std::size_t b = 0; b < c.n_branches; ++b) {
        BranchAttention br;
        br.wq = xavier(w, w, rng), br.bq = Tensor({w});
        br.wk = xavier(w, w, rng), br.bk = Tensor({w});
        br.wv = xavier(w, w, rng), br.bv = Tensor({w});
        br.wo = xavier(w, w, rng), br.bo = Tensor({w});
        a.branches.push_back(br);
    }
    a.norm_gain = Tensor({c.d_model}, 1.0);
    a.norm_bias = Tensor({c.d_model});
    return a;
}

inline FfnBlock make_ffn(const ModelConfig& c, std::mt19937_64& rng) {
    FfnBlock f;
    const std::size_t w = c.branch_width(), h = c.ffn_multiplier * w;
    for (std::size_t b = 0; b < c.n_branches; ++b) {
        BranchFfn br;
        br.w1 = xavier(w, h, rng), br.b1 = Tensor({h});
        br.w2 = xavier(h, w, rng), br.b2 = Tensor({w});
        f.branches.push_back(br);
    }
    f.norm_gain = Tensor({c.d_model}, 1.0);
    f.norm_bias = Tensor({c.d_model});
    return f;
}

}  // namespace detail

inline ModelParams init_params(const ModelConfig& c, std::uint64_t seed) {
    c.validate();
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.embedding = detail::gaussian(c.vocab_size, c.d_model, 1.0 / std::sqrt(static_cast<double>(c.d_model)), rng);
    p.seg_embedding = detail::gaussian(2, c.d_seg, 1.0 / std::sqrt(static_cast<double>(c.d_seg)), rng);
    p.stitch_w = detail::xavier(c.d_model + c.d_seg, c.d_model, rng);
    p.stitch_b = Tensor({c.d_model});
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        EncoderLayer e;
        e.self_attn = detail::make_attention(c, rng);
        e.ffn = detail::make_ffn(c, rng);
        p.encoder.push_back(std::move(e));
    }
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        DecoderLayer d;
        d.self_attn = detail::make_attention(c, rng);
        d.cross_attn = detail::make_attention(c, rng);
        d.ffn = detail::make_ffn(c, rng);
        p.decoder.push_back(std::move(d));
    }
    if (c.kind == ModelKind::nat) {
        p.length_w = detail::xavier(c.d_model, c.length_classes(), rng);
        p.length_b = Tensor({c.length_classes()});
    }
    p.set_requires_grad(true);
    return p;
}

// ---------------------------------------------------------------------------
// Compute accounting

struct MultAddCount {
    std::uint64_t baseline = 0;
    std::uint64_t multibranch = 0;
};

// Multiply-adds of the position-wise FFN over N positions: 2*m*N*d^2 for a
// full-width FFN against 2*m*N*(d/n)^2*n for n block-diagonal branches
// (m = ffn_multiplier, 4 by default).
inline MultAddCount count_ffn_multadds(const ModelConfig& c, std::uint64_t seq_len) {
    const std::uint64_t d = c.d_model, n = c.n_branches, m = c.ffn_multiplier;
    return {2 * m * seq_len * d * d, 2 * m * seq_len * (d / n) * (d / n) * n};
}

// Weight (non-bias) entries of one FFN arrangement.
inline std::size_t ffn_weight_count(const FfnBlock& f) {
    std::size_t n = 0;
    for (const auto& br : f.branches) n += br.w1.size() + br.w2.size();
    return n;
}

// ---------------------------------------------------------------------------
// Layers

inline Tensor sinusoidal_positions(std::size_t len, std::size_t d, std::size_t offset = 0) {
    Tensor pe({len, d});
    for (std::size_t pos = 0; pos < len; ++pos)
        for (std::size_t i = 0; i < d; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
            const double a = static_cast<double>(pos + offset) * rate;
            pe.at(pos, i) = (i % 2 == 0) ? std::sin(a) : std::cos(a);
        }
    return pe;
}

// Multi-head attention run independently on each of the n feature slices,
// slices concatenated, then residual + layer norm. When `mean_weights` is
// given it receives the attention probabilities averaged over heads and
// branches (still on the tape).
inline Tensor attention_sublayer(const Tensor& query, const Tensor& memory, const AttentionBlock& blk,
                                 std::size_t n_heads, std::span<const std::uint8_t> allowed,
                                 Tensor* mean_weights = nullptr) {
    const std::size_t n_branches = blk.branches.size();
    const std::size_t w = query.cols() / n_branches;
    const std::size_t hw = w / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hw));
    std::vector<Tensor> branch_out;
    Tensor weight_sum;
    for (std::size_t b = 0; b < n_branches; ++b) {
        const auto& br = blk.branches[b];
        const Tensor q_in = n_branches == 1 ? query : slice_cols(query, b * w, w);
        const Tensor m_in = n_branches == 1 ? memory : slice_cols(memory, b * w, w);
        const Tensor q = add_bias(matmul(q_in, br.wq), br.bq);
        const Tensor k = add_bias(matmul(m_in, br.wk), br.bk);
        const Tensor v = add_bias(matmul(m_in, br.wv), br.bv);
        std::vector<Tensor> heads;
        for (std::size_t h = 0; h < n_heads; ++h) {
            const Tensor qh = n_heads == 1 ? q : slice_cols(q, h * hw, hw);
            const Tensor kh = n_heads == 1 ? k : slice_cols(k, h * hw, hw);
            const Tensor vh = n_heads == 1 ? v : slice_cols(v, h * hw, hw);
            const Tensor probs = softmax_rows(scale(matmul_bt(qh, kh), inv_sqrt), allowed);
            if (mean_weights) weight_sum = weight_sum.defined() ? add(weight_sum, probs) : probs;
            heads.push_back(matmul(probs, vh));
        }
        const Tensor merged = n_heads == 1 ? heads.front() : concat_cols(heads);
        branch_out.push_back(add_bias(matmul(merged, br.wo), br.bo));
    }
    if (mean_weights) *mean_weights = scale(weight_sum, 1.0 / static_cast<double>(n_branches * n_heads));
    const Tensor y = n_branches == 1 ? branch_out.front() : concat_cols(branch_out);
    return layer_norm(add(query, y), blk.norm_gain, blk.norm_bias);
}

// Block-diagonal position-wise FFN (one per branch), residual + layer norm.
inline Tensor ffn_sublayer(const Tensor& x, const FfnBlock& blk) {
    const std::size_t n_branches = blk.branches.size();
    const std::size_t w = x.cols() / n_branches;
    std::vector<Tensor> outs;
    for (std::size_t b = 0; b < n_branches; ++b) {
        const auto& br = blk.branches[b];
        const Tensor xb = n_branches == 1 ? x : slice_cols(x, b * w, w);
        const Tensor h = relu(add_bias(matmul(xb, br.w1), br.b1));
        outs.push_back(add_bias(matmul(h, br.w2), br.b2));
    }
    const Tensor y = n_branches == 1 ? outs.front() : concat_cols(outs);
    return layer_norm(add(x, y), blk.norm_gain, blk.norm_bias);
}

// One encoder block: multibranch self-attention then the branch FFN.
inline Tensor multibranch_attention(const Tensor& x, const EncoderLayer& layer, std::size_t n_heads,
                                    std::span<const std::uint8_t> allowed = {}) {
    return ffn_sublayer(attention_sublayer(x, x, layer.self_attn, n_heads, allowed), layer.ffn);
}

inline std::vector<std::uint8_t> key_mask(std::size_t queries, const std::vector<std::uint8_t>& key_valid) {
    std::vector<std::uint8_t> m(queries * key_valid.size());
    for (std::size_t i = 0; i < queries; ++i)
        std::copy(key_valid.begin(), key_valid.end(), m.begin() + static_cast<std::ptrdiff_t>(i * key_valid.size()));
    return m;
}

inline std::vector<std::uint8_t> causal_mask(std::size_t n) {
    std::vector<std::uint8_t> m(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) m[i * n + j] = 1;
    return m;
}

// ---------------------------------------------------------------------------
// Encoder

struct EncoderState {
    Tensor states;                     // [S x d]
    std::vector<std::uint8_t> valid;   // 1 = real token, 0 = padding
    std::vector<std::uint8_t> flags;   // word-boundary flags (as encoded)
    Tensor pooled;                     // [1 x d], mean of valid rows
    std::size_t length = 0;            // number of valid rows
    bool truncated = false;
};

inline Tensor stitch_boundaries(const Tensor& x, std::span<const std::uint8_t> flags, const Tensor& seg_embedding,
                                const Tensor& stitch_w, const Tensor& stitch_b) {
    std::vector<std::size_t> f(flags.begin(), flags.end());
    for (auto& v : f) v = v ? 1 : 0;
    const Tensor seg = gather_rows(seg_embedding, f);
    return add_bias(matmul(concat_cols({x, seg}), stitch_w), stitch_b);
}

// Character embeddings [L x d] are concatenated with boundary-flag embeddings
// [L x d_seg], projected back to d, offset by sinusoidal positions and run
// through the encoder blocks. Inputs longer than max_len are truncated.
inline EncoderState encode(const ModelParams& p, const ModelConfig& c, std::span<const int> ids,
                           std::span<const std::uint8_t> flags) {
    if (ids.size() != flags.size()) throw DimensionError("encode: ids and boundary flags differ in length");
    EncoderState enc;
    std::size_t len = ids.size();
    if (len > c.max_len) {
        len = c.max_len;
        enc.truncated = true;
    }
    std::vector<std::size_t> idx(len);
    enc.valid.resize(len);
    enc.flags.assign(flags.begin(), flags.begin() + static_cast<std::ptrdiff_t>(len));
    for (std::size_t i = 0; i < len; ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= c.vocab_size)
            throw DimensionError("encode: token id " + std::to_string(ids[i]) + " outside the vocabulary");
        idx[i] = static_cast<std::size_t>(ids[i]);
        enc.valid[i] = ids[i] != kPadId;
        enc.length += enc.valid[i];
    }
    if (enc.length == 0) throw EmptyInputError("encode: input has no unpadded positions");
    Tensor x = gather_rows(p.embedding, idx);
    if (!c.seg_on_decoder) x = stitch_boundaries(x, enc.flags, p.seg_embedding, p.stitch_w, p.stitch_b);
    x = add(x, sinusoidal_positions(len, c.d_model));
    const auto mask = key_mask(len, enc.valid);
    for (const auto& layer : p.encoder) x = multibranch_attention(x, layer, c.n_heads, mask);
    enc.states = x;
    enc.pooled = mean_rows(x, enc.valid);
    return enc;
}

// ---------------------------------------------------------------------------
// Length prediction

inline Tensor length_logits(const ModelParams& p, const EncoderState& enc) {
    if (!p.length_w.defined()) throw ConfigError("model has no length predictor");
    return add_bias(matmul(enc.pooled, p.length_w), p.length_b);
}

// Picks the offset class with the largest logit; ties go to the smaller
// |offset| (then the negative one). Result is clamped to [1, max_len].
inline std::size_t length_from_logits(std::span<const double> logits, std::size_t src_len, std::size_t k,
                                      std::size_t max_len) {
    if (logits.size() != 2 * k + 1) throw DimensionError("length logits must have 2K+1 entries");
    std::ptrdiff_t best = 0;
    double best_v = logits[k];
    for (std::size_t mag = 1; mag <= k; ++mag)
        for (std::ptrdiff_t sign : {-1, 1}) {
            const std::ptrdiff_t delta = sign * static_cast<std::ptrdiff_t>(mag);
            const double v = logits[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(k) + delta)];
            if (v > best_v) {
                best_v = v;
                best = delta;
            }
        }
    const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(src_len) + best;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(len, 1, static_cast<std::ptrdiff_t>(max_len)));
}

inline std::size_t predict_length(const ModelParams& p, const ModelConfig& c, const EncoderState& enc) {
    NoGradScope ng;
    const Tensor l = length_logits(p, enc);
    return length_from_logits(l.values(), enc.length, c.length_offset_range, c.max_len);
}

// Gold class index for a (source, target) length pair.
inline std::size_t length_class(std::size_t src_len, std::size_t tgt_len, std::size_t k) {
    const auto delta = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(tgt_len) - static_cast<std::ptrdiff_t>(src_len),
                                                  -static_cast<std::ptrdiff_t>(k), static_cast<std::ptrdiff_t>(k));
    return static_cast<std::size_t>(delta + static_cast<std::ptrdiff_t>(k));
}

// ---------------------------------------------------------------------------
// Decoder

inline std::vector<std::size_t> uniform_copy_index(std::size_t src_len, std::size_t tgt_len) {
    std::vector<std::size_t> idx(tgt_len);
    for (std::size_t t = 0; t < tgt_len; ++t) idx[t] = t * src_len / tgt_len;
    return idx;
}

// Position t takes encoder state floor(t*S/T) plus the target positional encoding.
inline Tensor init_decoder_inputs(const ModelParams& p, const ModelConfig& c, const EncoderState& enc,
                                  std::size_t tgt_len) {
    if (tgt_len < 1 || tgt_len > c.max_len)
        throw DimensionError("init_decoder_inputs: target length " + std::to_string(tgt_len) + " outside [1, " +
                             std::to_string(c.max_len) + "]");
    const auto idx = uniform_copy_index(enc.length, tgt_len);
    Tensor x = gather_rows(enc.states, idx);
    if (c.seg_on_decoder) {
        std::vector<std::uint8_t> f(tgt_len);
        for (std::size_t t = 0; t < tgt_len; ++t) f[t] = enc.flags[idx[t]];
        x = stitch_boundaries(x, f, p.seg_embedding, p.stitch_w, p.stitch_b);
    }
    return add(x, sinusoidal_positions(tgt_len, c.d_model));
}

struct DecodeOutput {
    Tensor logits;           // [T x V]
    Tensor cross_attention;  // [T x S], mean over heads and branches of the last layer
    std::vector<int> predicted_ids;
};

inline std::vector<int> argmax_rows(const Tensor& logits) {
    std::vector<int> out(logits.rows());
    const std::size_t v = logits.cols();
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* r = logits.data() + i * v;
        out[i] = static_cast<int>(std::max_element(r, r + v) - r);
    }
    return out;
}

// Decoder blocks (self-attention, cross-attention, FFN) over all target
// positions at once. Self-attention is unmasked unless `causal`.
inline DecodeOutput decode_parallel(const ModelParams& p, const ModelConfig& c, const Tensor& dec_inputs,
                                    const EncoderState& enc, bool causal = false) {
    if (dec_inputs.rank() != 2 || dec_inputs.cols() != c.d_model)
        throw DimensionError("decode_parallel: decoder inputs must be [T x d_model], got " + shape_str(dec_inputs.shape()));
    const std::size_t t_len = dec_inputs.rows();
    const auto self_mask = causal ? causal_mask(t_len) : std::vector<std::uint8_t>{};
    const auto cross_mask = key_mask(t_len, enc.valid);
    DecodeOutput out;
    Tensor x = dec_inputs;
    for (std::size_t l = 0; l < p.decoder.size(); ++l) {
        const auto& layer = p.decoder[l];
        x = attention_sublayer(x, x, layer.self_attn, c.n_heads, self_mask);
        Tensor weights;
        x = attention_sublayer(x, enc.states, layer.cross_attn, c.n_heads, cross_mask,
                               l + 1 == p.decoder.size() ? &weights : nullptr);
        if (weights.defined()) out.cross_attention = weights;
        x = ffn_sublayer(x, layer.ffn);
    }
    out.logits = matmul_bt(x, p.embedding);
    out.predicted_ids = argmax_rows(out.logits);
    return out;
}

// Drops immediate repeats of the same token.
inline std::vector<int> collapse_repeats(const std::vector<int>& ids) {
    std::vector<int> out;
    for (int id : ids)
        if (out.empty() || out.back() != id) out.push_back(id);
    return out;
}

struct InferenceOutput {
    std::vector<int> ids;
    std::size_t predicted_length = 0;
    Tensor cross_attention;
    bool truncated = false;
};

// Single parallel pass: encode, predict length, uniform copy, decode, argmax.
// `forced_length` (when non-zero) replaces the predicted length.
inline InferenceOutput infer_nat(const ModelParams& p, const ModelConfig& c, std::span<const int> ids,
                                 std::span<const std::uint8_t> flags, bool collapse = true,
                                 std::size_t forced_length = 0) {
    NoGradScope ng;
    InferenceOutput r;
    const EncoderState enc = encode(p, c, ids, flags);
    r.truncated = enc.truncated;
    r.predicted_length = forced_length ? forced_length : predict_length(p, c, enc);
    const DecodeOutput dec = decode_parallel(p, c, init_decoder_inputs(p, c, enc, r.predicted_length), enc);
    r.ids = collapse ? collapse_repeats(dec.predicted_ids) : dec.predicted_ids;
    r.cross_attention = dec.cross_attention;
    return r;
}

// ---------------------------------------------------------------------------
// Autoregressive decoding (baseline / augmentation teacher)

// Decoder input for teacher forcing and greedy steps: <bos> followed by the prefix.
inline Tensor at_decoder_inputs(const ModelParams& p, const ModelConfig& c, const std::vector<int>& prefix) {
    std::vector<std::size_t> idx{static_cast<std::size_t>(kBosId)};
    for (int id : prefix) idx.push_back(static_cast<std::size_t>(id));
    return add(gather_rows(p.embedding, idx), sinusoidal_positions(idx.size(), c.d_model));
}

struct GreedyOptions {
    std::size_t max_len = 256;
    bool ignore_eos = false;  // never stop early; used for fixed-length timing
};

// Starts from <bos>, appends the argmax token after a full causal decoder pass
// over the current prefix, stops at <eos> or max_len.
inline std::vector<int> decode_greedy(const ModelParams& p, const ModelConfig& c, const EncoderState& enc,
                                      const GreedyOptions& opt) {
    NoGradScope ng;
    std::vector<int> out;
    const std::size_t cap = std::min(opt.max_len, c.max_len);
    while (out.size() < cap) {
        const DecodeOutput d = decode_parallel(p, c, at_decoder_inputs(p, c, out), enc, /*causal=*/true);
        const std::size_t v = d.logits.cols();
        const double* last = d.logits.data() + (d.logits.rows() - 1) * v;
        int best = -1;
        for (std::size_t j = 0; j < v; ++j) {
            if (opt.ignore_eos && static_cast<int>(j) == kEosId) continue;
            if (best < 0 || last[j] > last[best]) best = static_cast<int>(j);
        }
        if (best == kEosId) break;
        out.push_back(best);
    }
    return out;
}

inline std::vector<int> infer_at(const ModelParams& p, const ModelConfig& c, std::span<const int> ids,
                                 std::span<const std::uint8_t> flags, const GreedyOptions& opt) {
    NoGradScope ng;
    const EncoderState enc = encode(p, c, ids, flags);
    return decode_greedy(p, c, enc, opt);
}

}  // namespace dnat
