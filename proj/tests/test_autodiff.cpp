#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dialect_nat/autodiff.hpp"
#include "dialect_nat/gradient_check.hpp"
#include "support/gradient_suite.hpp"

using namespace dnat;

namespace {

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor::matrix(r, c, std::move(v)); }

void expect_values(const Tensor& t, const std::vector<double>& want, double tol = 1e-12) {
    ASSERT_EQ(t.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t.data()[i], want[i], tol) << "index " << i;
}

}  // namespace

TEST(Matmul, IdentityRightFactor) {
    expect_values(matmul(mat(2, 2, {1, 2, 3, 4}), mat(2, 2, {1, 0, 0, 1})), {1, 2, 3, 4});
}

TEST(Matmul, HandArithmetic) {
    expect_values(matmul(mat(2, 2, {1, 0, 0, 0}), mat(2, 2, {0, 1, 1, 0})), {0, 1, 0, 0});
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    try {
        matmul(Tensor({2, 3}), Tensor({2, 3}));
        FAIL() << "expected a dimension error";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
        EXPECT_EQ(e.category(), "dimension");
    }
}

TEST(Matmul, RandomGradientsMatchFiniteDifferences) {
    GradientCheckOptions opt;
    opt.tolerance = 1e-6;
    opt.seed = 3;
    auto r = gradient_check([](const auto& in) { return matmul(in[0], in[1]); }, std::vector<Shape>{{3, 4}, {4, 2}}, opt);
    EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(Softmax, UniformRow) { expect_values(softmax_rows(mat(1, 3, {0, 0, 0})), {1.0 / 3, 1.0 / 3, 1.0 / 3}); }

TEST(Softmax, LargeLogitDoesNotOverflow) {
    const Tensor y = softmax_rows(mat(1, 3, {1000, 0, 0}));
    for (double v : y.values()) EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(y.data()[0], 1.0, 1e-12);
    EXPECT_NEAR(y.data()[1], 0.0, 1e-12);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x({4, 6});
        for (double& v : x.values()) v = nd(rng);
        Tensor shifted = x.clone();
        for (std::size_t j = 0; j < 6; ++j) shifted.at(2, j) += 17.5;
        const Tensor a = softmax_rows(x), b = softmax_rows(shifted);
        for (std::size_t i = 0; i < 4; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 6; ++j) s += a.at(i, j);
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
        for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a.data()[k], b.data()[k], 1e-12);
    }
}

TEST(Softmax, JvpMatchesFiniteDifferences) {
    GradientCheckOptions opt;
    opt.tolerance = 1e-6;
    auto r = gradient_check([](const auto& in) { return softmax_rows(in[0]); }, std::vector<Shape>{{4, 5}}, opt);
    EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(Softmax, FullyMaskedRowIsRejected) {
    const std::vector<std::uint8_t> allowed = {1, 1, 0, 0};
    EXPECT_THROW(softmax_rows(Tensor({2, 2}), allowed), DimensionError);
}

TEST(LayerNorm, ConstantRowMapsToZero) {
    expect_values(layer_norm(mat(1, 4, {1, 1, 1, 1}), Tensor({4}, 1.0), Tensor({4}, 0.0)), {0, 0, 0, 0});
}

TEST(LayerNorm, UnitVariancePair) {
    const double k = 1.0 / std::sqrt(1.0 + kLayerNormEps);
    expect_values(layer_norm(mat(1, 2, {1, -1}), Tensor({2}, 1.0), Tensor({2}, 0.0)), {k, -k});
}

TEST(LayerNorm, DegenerateWidthRejected) {
    EXPECT_THROW(layer_norm(Tensor({3, 1}), Tensor({1}, 1.0), Tensor({1}, 0.0)), DimensionError);
}

TEST(LayerNorm, GradientsMatchFiniteDifferences) {
    GradientCheckOptions opt;
    opt.tolerance = 1e-5;
    auto r = gradient_check([](const auto& in) { return layer_norm(in[0], in[1], in[2]); },
                            std::vector<Shape>{{3, 6}, {6}, {6}}, opt);
    EXPECT_TRUE(r.passed) << r.max_relative_error;
}

TEST(CrossEntropy, UniformLogitsGiveLogV) {
    const std::vector<std::size_t> t = {2};
    EXPECT_NEAR(cross_entropy(Tensor({1, 4}, 0.0), t).item(), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, PeakedLogitTendsToZero) {
    const std::vector<std::size_t> t = {1};
    EXPECT_LT(cross_entropy(mat(1, 3, {0, 60, 0}), t).item(), 1e-20);
}

TEST(CrossEntropy, MaskedPositionExcludedFromMean) {
    const Tensor logits = mat(3, 2, {0, 1, 2, 0, 5, 5});
    const std::vector<std::size_t> t = {1, 1, 0};
    const std::vector<std::uint8_t> ignore = {0, 1, 0};
    const double row0 = std::log(1.0 + std::exp(1.0)) - 1.0;
    const double row2 = std::log(2.0);
    EXPECT_NEAR(cross_entropy(logits, t, ignore).item(), 0.5 * (row0 + row2), 1e-12);
}

TEST(CrossEntropy, AllMaskedIsEmptyInput) {
    const std::vector<std::size_t> t = {0, 0};
    const std::vector<std::uint8_t> ignore = {1, 1};
    EXPECT_THROW(cross_entropy(Tensor({2, 3}), t, ignore), EmptyInputError);
}

TEST(MseLoss, IdenticalInputsGiveExactZero) {
    const Tensor x = mat(2, 2, {0.3, -1.25, 7, 1e-3});
    EXPECT_EQ(mse_loss(x, x).item(), 0.0);
}

TEST(MseLoss, HandArithmetic) { EXPECT_DOUBLE_EQ(mse_loss(mat(1, 2, {1, 2}), mat(1, 2, {0, 0})).item(), 2.5); }

TEST(MseLoss, SymmetricInArguments) {
    auto in = random_inputs({{3, 4}, {3, 4}}, 9);
    EXPECT_EQ(mse_loss(in[0], in[1]).item(), mse_loss(in[1], in[0]).item());
}

TEST(MseLoss, ShapeMismatch) { EXPECT_THROW(mse_loss(Tensor({1, 2}), Tensor({2, 1})), DimensionError); }

TEST(MseLoss, GradientIsTwoDiffOverCount) {
    Tensor x = mat(1, 2, {1, 2}), y = mat(1, 2, {0, 0});
    x.set_requires_grad(true);
    Tape tape;
    {
        TapeScope s(tape);
        tape.backward(mse_loss(x, y));
    }
    expect_values(Tensor({2}, std::vector<double>(x.grad().begin(), x.grad().end())), {1.0, 2.0});
}

TEST(Tape, SharedNodeAccumulatesBothConsumers) {
    Tensor x = mat(1, 2, {3, -2});
    x.set_requires_grad(true);
    Tape tape;
    {
        TapeScope s(tape);
        const Tensor h = scale(x, 2.0);
        tape.backward(sum(add(h, scale(h, 3.0))));
    }
    EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], 8.0);
}

TEST(Tape, NoGradScopeRecordsNothing) {
    Tensor x = mat(1, 2, {1, 2});
    x.set_requires_grad(true);
    Tape tape;
    TapeScope s(tape);
    {
        NoGradScope ng;
        const Tensor y = scale(x, 2.0);
        EXPECT_FALSE(y.requires_grad());
    }
    EXPECT_EQ(tape.size(), 0u);
}

TEST(Tape, BackwardNeedsScalar) {
    Tape tape;
    EXPECT_THROW(tape.backward(Tensor({2, 2})), DimensionError);
}

TEST(TensorShape, ValueCountMustMatchShape) { EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError); }

TEST(GradientCheck, MatmulAndSoftmaxPassAtDefaultTolerance) {
    EXPECT_TRUE(gradient_check([](const auto& in) { return matmul(in[0], in[1]); }, std::vector<Shape>{{2, 3}, {3, 2}}).passed);
    EXPECT_TRUE(gradient_check([](const auto& in) { return softmax_rows(in[0]); }, std::vector<Shape>{{3, 3}}).passed);
}

TEST(GradientCheck, SignFlippedBackwardFails) {
    DifferentiableOp broken = [](const std::vector<Tensor>& in) {
        const Tensor& x = in[0];
        Tensor y = scale(x, 1.0);
        Tensor out(x.shape());
        std::copy(y.data(), y.data() + y.size(), out.data());
        if (detail::track(out, x)) {
            detail::active_tape->record("broken", [x, out]() {
                for (std::size_t i = 0; i < x.size(); ++i) x.grad()[i] -= out.grad()[i];
            });
        }
        return out;
    };
    EXPECT_FALSE(gradient_check(broken, std::vector<Shape>{{2, 3}}).passed);
}

TEST(GradientCheck, NonFiniteOutputIsInstability) {
    DifferentiableOp blowup = [](const std::vector<Tensor>& in) { return scale(in[0], std::numeric_limits<double>::infinity()); };
    EXPECT_THROW(gradient_check(blowup, std::vector<Shape>{{1, 2}}), InstabilityError);
}

class GradientSuite : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GradientSuite, EveryOpWithinTolerance) {
    for (const auto& c : testkit::gradient_suite()) {
        GradientCheckOptions opt;
        opt.seed = GetParam();
        const auto r = gradient_check(c.op, c.shapes, opt);
        EXPECT_TRUE(r.passed) << c.name << " seed " << GetParam() << " rel " << r.max_relative_error;
    }
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradientSuite, ::testing::Range<std::uint64_t>(0, 10));
