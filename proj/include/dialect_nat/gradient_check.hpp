#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "autodiff.hpp"

namespace dnat {

struct GradientCheckReport {
    double max_relative_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    bool passed = false;
};

using DifferentiableOp = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradientCheckOptions {
    double tolerance = 1e-4;
    double eps = 1e-5;
    std::uint64_t seed = 0;
    // Relative error denominator floor, so gradients that are ~0 on both
    // sides compare in absolute terms.
    double denominator_floor = 1e-4;
};

// Compares analytic gradients of sum(op(inputs) * R), for a fixed random
// cotangent R, against central differences. Inputs are drawn N(0, 1) from
// `seed`; pass explicit `inputs` to control the evaluation point.
inline GradientCheckReport gradient_check(const DifferentiableOp& op, std::vector<Tensor> inputs,
                                          const GradientCheckOptions& opt = {}) {
    std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<double> cotangent;
    {
        NoGradScope ng;
        Tensor probe = op(inputs);
        cotangent.resize(probe.size());
        for (double& c : cotangent) c = normal(rng);
    }
    auto objective = [&](const std::vector<Tensor>& in) {
        NoGradScope ng;
        Tensor out = op(in);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (!std::isfinite(out.data()[i])) throw InstabilityError("gradient_check: non-finite op output");
            s += out.data()[i] * cotangent[i];
        }
        return s;
    };

    for (Tensor& t : inputs) {
        t.clear_grad();
        t.set_requires_grad(true);
    }
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor out = op(inputs);
        tape.backward(out, cotangent);
    }

    GradientCheckReport report;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor& t = inputs[k];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = t.data()[i];
            t.data()[i] = saved + opt.eps;
            const double up = objective(inputs);
            t.data()[i] = saved - opt.eps;
            const double down = objective(inputs);
            t.data()[i] = saved;
            const double numeric = (up - down) / (2.0 * opt.eps);
            const double analytic = t.has_grad() ? t.grad()[i] : 0.0;
            if (!std::isfinite(numeric) || !std::isfinite(analytic))
                throw InstabilityError("gradient_check: non-finite gradient");
            const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.denominator_floor});
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel > report.max_relative_error) {
                report.max_relative_error = rel;
                report.worst_input = k;
                report.worst_index = i;
            }
        }
    }
    report.passed = report.max_relative_error < opt.tolerance;
    return report;
}

inline std::vector<Tensor> random_inputs(const std::vector<Shape>& shapes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Tensor> out;
    for (const auto& s : shapes) {
        Tensor t(s);
        for (double& v : t.values()) v = normal(rng);
        out.push_back(t);
    }
    return out;
}

inline GradientCheckReport gradient_check(const DifferentiableOp& op, const std::vector<Shape>& input_shapes,
                                          const GradientCheckOptions& opt = {}) {
    return gradient_check(op, random_inputs(input_shapes, opt.seed), opt);
}

}  // namespace dnat
