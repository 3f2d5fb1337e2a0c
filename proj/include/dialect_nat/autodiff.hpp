#pragma once

// Minimal reverse-mode differentiation over dense row-major float64 tensors.
//
// Ops append a backward closure to the active Tape when any input requires a
// gradient. Tape::backward replays the closures in exact reverse creation
// order, accumulating (summing) into each input's grad buffer, so a value that
// feeds several consumers receives the sum of their contributions.
//
// Numerics: layer_norm uses epsilon 1e-5 inside the square root; softmax
// subtracts the row max before exponentiation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace dnat {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {
struct TensorData {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
};
}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : p_(std::make_shared<detail::TensorData>()) {
        p_->value.assign(shape_numel(shape), fill);
        p_->shape = std::move(shape);
    }

    Tensor(Shape shape, std::vector<double> values) : p_(std::make_shared<detail::TensorData>()) {
        if (shape_numel(shape) != values.size())
            throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                                 std::to_string(values.size()) + " values");
        p_->shape = std::move(shape);
        p_->value = std::move(values);
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        return Tensor({rows, cols}, std::move(values));
    }
    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

    bool defined() const noexcept { return static_cast<bool>(p_); }
    const Shape& shape() const { return p_->shape; }
    std::size_t rank() const { return p_->shape.size(); }
    std::size_t size() const { return p_->value.size(); }
    std::size_t rows() const { return p_->shape.size() == 2 ? p_->shape[0] : 1; }
    std::size_t cols() const { return p_->shape.back(); }

    std::span<double> values() { return p_->value; }
    std::span<const double> values() const { return p_->value; }
    double* data() { return p_->value.data(); }
    const double* data() const { return p_->value.data(); }

    double& at(std::size_t r, std::size_t c) { return p_->value[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return p_->value[r * cols() + c]; }
    double item() const {
        if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
        return p_->value[0];
    }

    bool requires_grad() const noexcept { return p_ && p_->requires_grad; }
    Tensor& set_requires_grad(bool on) {
        p_->requires_grad = on;
        return *this;
    }

    bool has_grad() const noexcept { return p_ && !p_->grad.empty(); }
    // Allocates a zero buffer on first access. The gradient is shared handle
    // state, so it stays writable through const handles.
    std::span<double> grad() const {
        if (p_->grad.empty()) p_->grad.assign(p_->value.size(), 0.0);
        return p_->grad;
    }
    void zero_grad() const {
        if (!p_->grad.empty()) std::fill(p_->grad.begin(), p_->grad.end(), 0.0);
    }
    void clear_grad() const { p_->grad.clear(); }

    // Deep copy without graph history or gradient.
    Tensor clone() const {
        Tensor t(shape(), std::vector<double>(p_->value));
        return t;
    }

    bool same_storage(const Tensor& o) const noexcept { return p_ == o.p_; }

private:
    std::shared_ptr<detail::TensorData> p_;
};

// Record-then-reverse tape. One tape per training step; not thread safe.
class Tape {
public:
    struct Node {
        const char* op;
        std::function<void()> backward;
    };

    void record(const char* op, std::function<void()> fn) { nodes_.push_back({op, std::move(fn)}); }
    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }

    // Seeds d(loss)/d(loss) = 1 for a scalar loss.
    void backward(Tensor loss) {
        if (loss.size() != 1)
            throw DimensionError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
        loss.grad()[0] += 1.0;
        replay();
    }

    // Seeds the output gradient with an explicit cotangent (vector-Jacobian product).
    void backward(Tensor out, std::span<const double> seed) {
        if (seed.size() != out.size()) throw DimensionError("backward seed size mismatch");
        auto g = out.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
        replay();
    }

    void clear() { nodes_.clear(); }

private:
    void replay() {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
    }

    std::vector<Node> nodes_;
};

namespace detail {
inline thread_local Tape* active_tape = nullptr;
}

// Makes `tape` the recording target for ops on this thread.
class TapeScope {
public:
    explicit TapeScope(Tape& tape) : prev_(detail::active_tape) { detail::active_tape = &tape; }
    ~TapeScope() { detail::active_tape = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// Suspends recording; ops inside produce plain values.
class NoGradScope {
public:
    NoGradScope() : prev_(detail::active_tape) { detail::active_tape = nullptr; }
    ~NoGradScope() { detail::active_tape = prev_; }
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* prev_;
};

inline bool recording() noexcept { return detail::active_tape != nullptr; }

namespace detail {

template <typename... Ts>
bool any_requires_grad(const Ts&... ts) {
    return (ts.requires_grad() || ...);
}

// Returns true (and marks `out`) when the op must be recorded.
template <typename... Ts>
bool track(Tensor& out, const Ts&... inputs) {
    if (!recording() || !any_requires_grad(inputs...)) return false;
    out.set_requires_grad(true);
    return true;
}

inline void require_2d(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

// [m x k] . [k x n] -> [m x n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_2d(a, "matmul");
    detail::require_2d(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k)
        throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    Tensor c({m, n});
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            const double* bp = B + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    if (detail::track(c, a, b)) {
        detail::active_tape->record("matmul", [a, b, c, m, k, n]() mutable {
            const double* dC = c.grad().data();
            if (a.requires_grad()) {
                double* dA = a.grad().data();
                const double* B = b.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double* bp = B + p * n;
                        const double* dci = dC + i * n;
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j) s += dci[j] * bp[j];
                        dA[i * k + p] += s;
                    }
            }
            if (b.requires_grad()) {
                double* dB = b.grad().data();
                const double* A = a.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = A[i * k + p];
                        double* dbp = dB + p * n;
                        const double* dci = dC + i * n;
                        for (std::size_t j = 0; j < n; ++j) dbp[j] += aip * dci[j];
                    }
            }
        });
    }
    return c;
}

// [m x k] . [n x k]^T -> [m x n]
inline Tensor matmul_bt(const Tensor& a, const Tensor& b) {
    detail::require_2d(a, "matmul_bt");
    detail::require_2d(b, "matmul_bt");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
    if (b.shape()[1] != k)
        throw DimensionError("matmul_bt: inner dimensions disagree for " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + "^T");
    Tensor c({m, n});
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double* ai = A + i * k;
            const double* bj = B + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            C[i * n + j] = s;
        }
    if (detail::track(c, a, b)) {
        detail::active_tape->record("matmul_bt", [a, b, c, m, k, n]() mutable {
            const double* dC = c.grad().data();
            if (a.requires_grad()) {
                double* dA = a.grad().data();
                const double* B = b.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double g = dC[i * n + j];
                        const double* bj = B + j * k;
                        double* dai = dA + i * k;
                        for (std::size_t p = 0; p < k; ++p) dai[p] += g * bj[p];
                    }
            }
            if (b.requires_grad()) {
                double* dB = b.grad().data();
                const double* A = a.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double g = dC[i * n + j];
                        const double* ai = A + i * k;
                        double* dbj = dB + j * k;
                        for (std::size_t p = 0; p < k; ++p) dbj[p] += g * ai[p];
                    }
            }
        });
    }
    return c;
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
    Tensor c(a.shape());
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] = a.data()[i] + b.data()[i];
    if (detail::track(c, a, b)) {
        detail::active_tape->record("add", [a, b, c]() mutable {
            auto g = c.grad();
            for (const Tensor* t : {&a, &b}) {
                if (!t->requires_grad()) continue;
                auto d = t->grad();
                for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
            }
        });
    }
    return c;
}

// [m x n] + bias[n] broadcast over rows.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
    detail::require_2d(a, "add_bias");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    if (bias.size() != n)
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs matrix " + shape_str(a.shape()));
    Tensor c(a.shape());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) c.data()[i * n + j] = a.data()[i * n + j] + bias.data()[j];
    if (detail::track(c, a, bias)) {
        detail::active_tape->record("add_bias", [a, bias, c, m, n]() mutable {
            auto g = c.grad();
            if (a.requires_grad()) {
                auto d = a.grad();
                for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
            }
            if (bias.requires_grad()) {
                auto d = bias.grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) d[j] += g[i * n + j];
            }
        });
    }
    return c;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor c(a.shape());
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] = a.data()[i] * s;
    if (detail::track(c, a)) {
        detail::active_tape->record("scale", [a, c, s]() mutable {
            auto g = c.grad();
            auto d = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += s * g[i];
        });
    }
    return c;
}

inline Tensor relu(const Tensor& a) {
    Tensor c(a.shape());
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] = std::max(0.0, a.data()[i]);
    if (detail::track(c, a)) {
        detail::active_tape->record("relu", [a, c]() mutable {
            auto g = c.grad();
            auto d = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (a.data()[i] > 0.0) d[i] += g[i];
        });
    }
    return c;
}

inline Tensor sum(const Tensor& a) {
    Tensor c = Tensor::scalar(std::accumulate(a.values().begin(), a.values().end(), 0.0));
    if (detail::track(c, a)) {
        detail::active_tape->record("sum", [a, c]() mutable {
            const double g = c.grad()[0];
            for (double& d : a.grad()) d += g;
        });
    }
    return c;
}

// ---------------------------------------------------------------------------
// Normalisation

// Row-wise softmax. `allowed`, when non-empty, is an m*n 0/1 mask; disallowed
// entries get probability exactly 0. Every row needs at least one allowed entry.
inline Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> allowed = {}) {
    detail::require_2d(x, "softmax_rows");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (!allowed.empty() && allowed.size() != m * n)
        throw DimensionError("softmax_rows: mask size does not match " + shape_str(x.shape()));
    Tensor y(x.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.data() + i * n;
        double* yi = y.data() + i * n;
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < n; ++j)
            if (allowed.empty() || allowed[i * n + j]) {
                any = true;
                if (!std::isfinite(xi[j])) throw InstabilityError("softmax_rows: non-finite input in row " + std::to_string(i));
                mx = std::max(mx, xi[j]);
            }
        if (!any) throw DimensionError("softmax_rows: row " + std::to_string(i) + " fully masked");
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double e = (allowed.empty() || allowed[i * n + j]) ? std::exp(xi[j] - mx) : 0.0;
            yi[j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < n; ++j) yi[j] /= z;
    }
    if (detail::track(y, x)) {
        detail::active_tape->record("softmax_rows", [x, y, m, n]() mutable {
            const double* dy = y.grad().data();
            double* dx = x.grad().data();
            for (std::size_t i = 0; i < m; ++i) {
                const double* yi = y.data() + i * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += dy[i * n + j] * yi[j];
                for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += yi[j] * (dy[i * n + j] - dot);
            }
        });
    }
    return y;
}

inline constexpr double kLayerNormEps = 1e-5;

// Normalises the last axis of [m x d] then applies gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    const std::size_t d = x.cols();
    if (d < 2) throw DimensionError("layer_norm: degenerate feature dimension " + std::to_string(d));
    if (gain.size() != d || bias.size() != d)
        throw DimensionError("layer_norm: gain/bias size must equal " + std::to_string(d));
    const std::size_t m = x.size() / d;
    Tensor y(x.shape());
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto inv_std = std::make_shared<std::vector<double>>(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.data() + i * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv_std)[i] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (xi[j] - mean) * is;
            (*xhat)[i * d + j] = h;
            y.data()[i * d + j] = h * gain.data()[j] + bias.data()[j];
        }
    }
    if (detail::track(y, x, gain, bias)) {
        detail::active_tape->record("layer_norm", [x, gain, bias, y, xhat, inv_std, m, d]() mutable {
            const double* dy = y.grad().data();
            const double* H = xhat->data();
            if (gain.requires_grad()) {
                double* dg = gain.grad().data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < d; ++j) dg[j] += dy[i * d + j] * H[i * d + j];
            }
            if (bias.requires_grad()) {
                double* db = bias.grad().data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < d; ++j) db[j] += dy[i * d + j];
            }
            if (x.requires_grad()) {
                double* dx = x.grad().data();
                const double inv_d = 1.0 / static_cast<double>(d);
                for (std::size_t i = 0; i < m; ++i) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gh = dy[i * d + j] * gain.data()[j];
                        s1 += gh;
                        s2 += gh * H[i * d + j];
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gh = dy[i * d + j] * gain.data()[j];
                        dx[i * d + j] += (*inv_std)[i] * (gh - inv_d * s1 - H[i * d + j] * inv_d * s2);
                    }
                }
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Shape plumbing

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t m = parts.front().rows();
    std::size_t n = 0;
    for (const auto& p : parts) {
        detail::require_2d(p, "concat_cols");
        if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
        n += p.cols();
    }
    Tensor c({m, n});
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.cols();
        for (std::size_t i = 0; i < m; ++i) std::copy_n(p.data() + i * w, w, c.data() + i * n + off);
        off += w;
    }
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (recording() && any) {
        c.set_requires_grad(true);
        detail::active_tape->record("concat_cols", [parts, c, m, n]() mutable {
            const double* g = c.grad().data();
            std::size_t off = 0;
            for (auto& p : parts) {
                const std::size_t w = p.cols();
                if (p.requires_grad()) {
                    double* d = p.grad().data();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < w; ++j) d[i * w + j] += g[i * n + off + j];
                }
                off += w;
            }
        });
    }
    return c;
}

inline Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t width) {
    detail::require_2d(x, "slice_cols");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (start + width > n)
        throw DimensionError("slice_cols: columns [" + std::to_string(start) + "," + std::to_string(start + width) +
                             ") exceed " + shape_str(x.shape()));
    Tensor c({m, width});
    for (std::size_t i = 0; i < m; ++i) std::copy_n(x.data() + i * n + start, width, c.data() + i * width);
    if (detail::track(c, x)) {
        detail::active_tape->record("slice_cols", [x, c, m, n, start, width]() mutable {
            const double* g = c.grad().data();
            double* d = x.grad().data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < width; ++j) d[i * n + start + j] += g[i * width + j];
        });
    }
    return c;
}

// Row gather: out[i] = table[ids[i]]. Serves both embedding lookup and row copies.
inline Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
    detail::require_2d(table, "gather_rows");
    const std::size_t v = table.shape()[0], d = table.shape()[1];
    Tensor c({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= v)
            throw DimensionError("gather_rows: index " + std::to_string(ids[i]) + " out of range for " +
                                 shape_str(table.shape()));
        std::copy_n(table.data() + ids[i] * d, d, c.data() + i * d);
    }
    if (detail::track(c, table)) {
        std::vector<std::size_t> idx(ids.begin(), ids.end());
        detail::active_tape->record("gather_rows", [table, c, idx = std::move(idx), d]() mutable {
            const double* g = c.grad().data();
            double* dt = table.grad().data();
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < d; ++j) dt[idx[i] * d + j] += g[i * d + j];
        });
    }
    return c;
}

// out[i] = take_first[i] ? a[i] : b[i]
inline Tensor where_rows(std::span<const std::uint8_t> take_first, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("where_rows: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
    detail::require_2d(a, "where_rows");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    if (take_first.size() != m) throw DimensionError("where_rows: mask length does not match row count");
    Tensor c(a.shape());
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n((take_first[i] ? a : b).data() + i * n, n, c.data() + i * n);
    if (detail::track(c, a, b)) {
        std::vector<std::uint8_t> mask(take_first.begin(), take_first.end());
        detail::active_tape->record("where_rows", [a, b, c, mask = std::move(mask), m, n]() mutable {
            const double* g = c.grad().data();
            for (std::size_t i = 0; i < m; ++i) {
                const Tensor& t = mask[i] ? a : b;
                if (!t.requires_grad()) continue;
                double* d = t.grad().data();
                for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[i * n + j];
            }
        });
    }
    return c;
}

// Mean over the rows flagged in `keep` (all rows when empty) -> [1 x n].
inline Tensor mean_rows(const Tensor& x, std::span<const std::uint8_t> keep = {}) {
    detail::require_2d(x, "mean_rows");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (!keep.empty() && keep.size() != m) throw DimensionError("mean_rows: mask length does not match row count");
    std::size_t count = 0;
    for (std::size_t i = 0; i < m; ++i) count += keep.empty() || keep[i];
    if (count == 0) throw EmptyInputError("mean_rows: no rows selected");
    Tensor c({1, n});
    const double w = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < m; ++i)
        if (keep.empty() || keep[i])
            for (std::size_t j = 0; j < n; ++j) c.data()[j] += w * x.data()[i * n + j];
    if (detail::track(c, x)) {
        std::vector<std::uint8_t> k(keep.begin(), keep.end());
        detail::active_tape->record("mean_rows", [x, c, k = std::move(k), m, n, w]() mutable {
            const double* g = c.grad().data();
            double* d = x.grad().data();
            for (std::size_t i = 0; i < m; ++i)
                if (k.empty() || k[i])
                    for (std::size_t j = 0; j < n; ++j) d[i * n + j] += w * g[j];
        });
    }
    return c;
}

// ---------------------------------------------------------------------------
// Losses

// Mean negative log-softmax of the target column over rows whose ignore flag is 0.
inline Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                            std::span<const std::uint8_t> ignore = {}) {
    detail::require_2d(logits, "cross_entropy");
    const std::size_t m = logits.shape()[0], v = logits.shape()[1];
    if (targets.size() != m) throw DimensionError("cross_entropy: target count does not match logits rows");
    if (!ignore.empty() && ignore.size() != m) throw DimensionError("cross_entropy: ignore mask length mismatch");
    std::size_t active = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (!ignore.empty() && ignore[i]) continue;
        if (targets[i] >= v)
            throw DimensionError("cross_entropy: target " + std::to_string(targets[i]) + " >= vocab " +
                                 std::to_string(v));
        ++active;
    }
    if (active == 0) throw EmptyInputError("cross_entropy: every position is masked");
    auto probs = std::make_shared<std::vector<double>>(m * v, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (!ignore.empty() && ignore[i]) continue;
        const double* li = logits.data() + i * v;
        const double mx = *std::max_element(li, li + v);
        double z = 0.0;
        for (std::size_t j = 0; j < v; ++j) z += std::exp(li[j] - mx);
        const double logz = mx + std::log(z);
        loss += logz - li[targets[i]];
        for (std::size_t j = 0; j < v; ++j) (*probs)[i * v + j] = std::exp(li[j] - logz);
    }
    const double inv = 1.0 / static_cast<double>(active);
    Tensor out = Tensor::scalar(loss * inv);
    if (detail::track(out, logits)) {
        std::vector<std::size_t> tg(targets.begin(), targets.end());
        std::vector<std::uint8_t> ig(ignore.begin(), ignore.end());
        detail::active_tape->record("cross_entropy", [logits, out, probs, tg = std::move(tg), ig = std::move(ig), m,
                                                      v, inv]() mutable {
            const double g = out.grad()[0] * inv;
            double* d = logits.grad().data();
            for (std::size_t i = 0; i < m; ++i) {
                if (!ig.empty() && ig[i]) continue;
                for (std::size_t j = 0; j < v; ++j) d[i * v + j] += g * (*probs)[i * v + j];
                d[i * v + tg[i]] -= g;
            }
        });
    }
    return out;
}

// Mean of (x_n - y_n)^2. Cells with keep == 0 are excluded from both the sum
// and the count when a mask is supplied.
inline Tensor mse_loss(const Tensor& x, const Tensor& y, std::span<const std::uint8_t> keep = {}) {
    if (x.shape() != y.shape())
        throw DimensionError("mse_loss: shapes " + shape_str(x.shape()) + " and " + shape_str(y.shape()) + " differ");
    if (!keep.empty() && keep.size() != x.size()) throw DimensionError("mse_loss: mask size mismatch");
    std::size_t count = 0;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!keep.empty() && !keep[i]) continue;
        const double diff = x.data()[i] - y.data()[i];
        s += diff * diff;
        ++count;
    }
    if (count == 0) throw EmptyInputError("mse_loss: no cells");
    const double inv = 1.0 / static_cast<double>(count);
    Tensor out = Tensor::scalar(s * inv);
    if (detail::track(out, x, y)) {
        std::vector<std::uint8_t> k(keep.begin(), keep.end());
        detail::active_tape->record("mse_loss", [x, y, out, k = std::move(k), inv]() mutable {
            const double g = out.grad()[0] * 2.0 * inv;
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (!k.empty() && !k[i]) continue;
                const double diff = x.data()[i] - y.data()[i];
                if (x.requires_grad()) x.grad()[i] += g * diff;
                if (y.requires_grad()) y.grad()[i] -= g * diff;
            }
        });
    }
    return out;
}

}  // namespace dnat
