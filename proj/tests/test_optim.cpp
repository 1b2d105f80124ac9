#include "sosmc/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sosmc;

namespace {

OptState sgd(double lr, std::optional<double> clip = std::nullopt) {
    return OptState(OptimizerSpec{.method = OptMethod::sgd, .learning_rate = lr, .grad_clip_norm = clip});
}

OptState adam(double lr) { return OptState(OptimizerSpec{.method = OptMethod::adam, .learning_rate = lr}); }

Vector s(double a) { return Vector::Constant(1, a); }

}  // namespace

TEST(Sgd, OneStepQuadratic) {
    OptState st = sgd(1.0);
    EXPECT_EQ(sgd_step(st, s(5.0), s(5.0))[0], 0.0);
    EXPECT_EQ(st.step_count, 1);
}

TEST(Sgd, ZeroGradientLeavesTheta) {
    OptState st = sgd(0.3);
    const Vector t{{1.0, -2.0}};
    EXPECT_EQ(sgd_step(st, t, Vector::Zero(2)), t);
}

TEST(Sgd, ClipHalvesLongGradient) {
    OptState st = sgd(1.0, 10.0);
    const Vector g{{12.0, 16.0}};  // norm 20
    const Vector t = sgd_step(st, Vector::Zero(2), g);
    EXPECT_NEAR(t[0], -6.0, 1e-12);
    EXPECT_NEAR(t[1], -8.0, 1e-12);
    EXPECT_NEAR(clip_global_norm(g, 10.0).norm(), 10.0, 1e-12);
    EXPECT_EQ(clip_global_norm(g, 25.0), g);
}

TEST(Sgd, NonFiniteGradientThrows) {
    OptState st = sgd(0.1);
    EXPECT_THROW(sgd_step(st, s(0.0), s(std::nan(""))), Error);
    EXPECT_EQ(st.step_count, 0);
}

TEST(Adam, FirstStepHasMagnitudeLearningRate) {
    for (double g : {-3.0, 1e-3, 250.0}) {
        OptState st = adam(0.1);
        const double d = adam_step(st, s(2.0), s(g))[0] - 2.0;
        // Bias-corrected moments are g and g^2, so the step is eta |g| / (|g| + eps).
        const double expected = 0.1 * std::abs(g) / (std::abs(g) + 1e-8);
        EXPECT_NEAR(std::abs(d), expected, 1e-12 * expected);
        EXPECT_LT(d * g, 0.0);
    }
}

TEST(Adam, ZeroGradientAtStartLeavesTheta) {
    OptState st = adam(0.1);
    EXPECT_EQ(adam_step(st, s(4.0), s(0.0))[0], 4.0);
}

TEST(Adam, SecondStepNoLargerThanFirst) {
    for (double g : {0.5, -7.0}) {
        OptState st = adam(0.05);
        const Vector t1 = adam_step(st, s(0.0), s(g));
        const Vector t2 = adam_step(st, t1, s(g));
        EXPECT_LE(std::abs(t2[0] - t1[0]), std::abs(t1[0]) + 1e-12);
    }
}

TEST(Adam, MatchesClosedFormTwoSteps) {
    const double b1 = 0.9, b2 = 0.999, lr = 0.1, eps = 1e-8, g1 = 2.0, g2 = -1.0;
    OptState st = adam(lr);
    const Vector t1 = adam_step(st, s(0.0), s(g1));
    const Vector t2 = adam_step(st, t1, s(g2));
    const double m = b1 * (1 - b1) * g1 + (1 - b1) * g2;
    const double v = b2 * (1 - b2) * g1 * g1 + (1 - b2) * g2 * g2;
    const double step2 = lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);
    EXPECT_NEAR(t2[0] - t1[0], -step2, 1e-14);
    EXPECT_EQ(st.step_count, 2);
}

TEST(OptState, StartsEmpty) {
    const OptState st = adam(0.1);
    EXPECT_EQ(st.step_count, 0);
    EXPECT_EQ(st.m.size(), 0);
    EXPECT_THROW(OptState(OptimizerSpec{.learning_rate = 0.0}), ConfigError);
}

TEST(OptStep, Dispatch) {
    OptState a = sgd(0.5), b = adam(0.5);
    EXPECT_EQ(opt_step(a, s(1.0), s(1.0))[0], 0.5);
    EXPECT_NEAR(opt_step(b, s(1.0), s(10.0))[0], 0.5, 1e-6);
    EXPECT_EQ(opt_method_from_string(to_string(OptMethod::sgd)), OptMethod::sgd);
    EXPECT_THROW(opt_method_from_string("rmsprop"), ConfigError);
}

TEST(AdaptGamma, Examples) {
    const StepSizeAdapter a{0.2, 1.1, 0.95};
    EXPECT_NEAR(adapt_gamma(a, 970.0, 1000).gamma, 0.22, 1e-15);
    EXPECT_NEAR(adapt_gamma(a, 500.0, 1000).gamma, 0.2 / 1.1, 1e-15);
    EXPECT_EQ(adapt_gamma(StepSizeAdapter{0.2, 1.1, 0.5}, 500.0, 1000).gamma, 0.2);
}

TEST(AdaptGamma, StaysPositive) {
    StepSizeAdapter a{1e-3, 1.5, 0.95};
    for (int i = 0; i < 2000; ++i) {
        a = adapt_gamma(a, (i % 7 == 0) ? 100.0 : 1.0, 100);
        EXPECT_GT(a.gamma, 0.0);
    }
}

TEST(AdaptGamma, Validation) {
    EXPECT_THROW((StepSizeAdapter{0.1, 1.0, 0.95}.validate()), ConfigError);
    EXPECT_THROW((StepSizeAdapter{0.1, 1.1, 1.0}.validate()), ConfigError);
    EXPECT_THROW((StepSizeAdapter{0.0, 1.1, 0.5}.validate()), ConfigError);
}
