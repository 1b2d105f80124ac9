#include "sosmc/estimators.hpp"
#include "sosmc/kernels.hpp"
#include "sosmc/mlp.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace sosmc;

namespace {

Positions col(std::initializer_list<double> v) {
    Positions p(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double a : v) p(i++, 0) = a;
    return p;
}

GaussianLocation gauss1(double theta) { return GaussianLocation(Vector::Constant(1, theta)); }

WeightVector random_weights(Eigen::Index n, Rng& rng) {
    std::uniform_real_distribution<double> u(0.1, 1.0);
    Vector lw(n);
    for (auto& v : lw) v = std::log(u(rng));
    return normalize_weights(lw);
}

Reward smooth_reward() {
    Reward r;
    r.kind = RewardKind::smooth_gated;
    return r;
}

}  // namespace

TEST(GradientGeneric, UniformIdentity) {
    const auto est = gradient_generic(col({1.0, 3.0}), uniform_weights(2), [](const Vector& x) { return x; });
    EXPECT_DOUBLE_EQ(est.g[0], 2.0);
}

TEST(GradientGeneric, ConstantH) {
    Rng rng(1);
    const Positions x = standard_normal(50, 2, rng);
    const Vector c{{0.7, -3.0}};
    const auto est = gradient_generic(x, random_weights(50, rng), [&](const Vector&) { return c; });
    EXPECT_LE((est.g - c).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(GradientGeneric, MonteCarloQuadratic) {
    // Samples from N(m, 1) with H(x) = theta - x estimate theta - m.
    const double theta = 0.4, m = 1.0;
    Rng rng(2);
    const Positions x = gauss1(m).sample(100000, rng);
    const auto est = gradient_generic(x, uniform_weights(x.rows()),
                                      [&](const Vector& y) { return Vector::Constant(1, theta - y[0]); });
    EXPECT_NEAR(est.g[0], theta - m, 3.0 / std::sqrt(100000.0));
}

TEST(GradientGeneric, NonFiniteHReportsIndex) {
    try {
        gradient_generic(col({1.0, 2.0, 3.0}), uniform_weights(3), [](const Vector& x) {
            return Vector::Constant(1, x[0] == 2.0 ? std::nan("") : 0.0);
        });
        FAIL();
    } catch (const EstimatorError& e) {
        EXPECT_EQ(e.index(), 1u);
    }
}

TEST(GradientForwardKl, HandExample) {
    const auto est = gradient_forward_kl(col({-1.0, 1.0}), uniform_weights(2), gauss1(0.0),
                                         Reward::constant_value(0.0), 1.0, col({1.0}));
    EXPECT_DOUBLE_EQ(est.g[0], 1.0);
}

TEST(GradientForwardKl, ConstantRewardNoKlIsZero) {
    Rng rng(3);
    const Positions x = standard_normal(40, 1, rng);
    const auto est =
        gradient_forward_kl(x, random_weights(40, rng), gauss1(0.3), Reward::constant_value(2.5), 0.0, col({0.0}));
    EXPECT_NEAR(est.g[0], 0.0, 1e-14);
    EXPECT_DOUBLE_EQ(est.particle_reward, 2.5);
}

TEST(GradientForwardKl, EmptyReferenceIsConfigError) {
    EXPECT_THROW(gradient_forward_kl(col({0.0}), uniform_weights(1), gauss1(0.0), Reward::constant_value(0.0), 1.0,
                                     Positions(0, 1)),
                 ConfigError);
}

TEST(GradientForwardKl, SelfReferenceVanishes) {
    const GaussianLocation model = gauss1(0.5);
    Rng rng(4);
    const Positions x = model.sample(10000, rng);
    const Positions ref = model.sample(10000, rng);
    const auto est = gradient_forward_kl(x, uniform_weights(x.rows()), model, Reward::constant_value(0.0), 1.0, ref);
    // g = mean_x(theta - x) - mean_ref(theta - x): difference of two unit-variance means.
    EXPECT_NEAR(est.g[0], 0.0, 3.0 * std::sqrt(2.0 / 10000.0));
}

TEST(GradientReverseKl, IdenticalModelsConstantRewardIsZero) {
    Rng rng(5);
    const MlpEnergy m = MlpEnergy::initialised({2, 8, 4}, rng, 0.4);
    const Positions x = standard_normal(30, 2, rng);
    const auto est = gradient_reverse_kl(x, random_weights(30, rng), m, m, Reward::constant_value(1.0), 0.7);
    EXPECT_LE(est.g.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(GradientReverseKl, BetaZeroMatchesForwardKl) {
    Rng rng(6);
    const MlpEnergy m = MlpEnergy::initialised({2, 8, 4}, rng, 0.4);
    const MlpEnergy m0 = MlpEnergy::initialised({2, 8, 4}, rng, 0.4);
    const Positions x = 1.5 * standard_normal(40, 2, rng);
    const WeightVector w = random_weights(40, rng);
    const Reward r = smooth_reward();
    const auto rev = gradient_reverse_kl(x, w, m, m0, r, 0.0);
    const auto fwd = gradient_forward_kl(x, w, m, r, 0.0, x);
    EXPECT_LE((rev.g - fwd.g).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_DOUBLE_EQ(rev.particle_reward, fwd.particle_reward);
}

TEST(GradientReverseKl, ExpandedEqualsConcise) {
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        const MlpEnergy m = MlpEnergy::initialised({2, 8, 4}, rng, 0.5);
        const MlpEnergy m0 = MlpEnergy::initialised({2, 8, 4}, rng, 0.5);
        const Positions x = 1.5 * standard_normal(25, 2, rng);
        const WeightVector w = random_weights(25, rng);
        const Reward r = rep % 2 ? smooth_reward() : Reward::half_plane(RewardKind::half_plane_lower);
        const double beta = 0.1 * rep;
        const auto a = gradient_reverse_kl(x, w, m, m0, r, beta);
        const auto b = gradient_reverse_kl_expanded(x, w, m, m0, r, beta);
        EXPECT_LE((a.g - b.g).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(GradientReverseKl, SignAgainstGaussianClosedForm) {
    // N(theta,1) vs N(0,1), R = 0: l = -beta theta^2 / 2, so grad l = -beta theta.
    const double theta = 0.8, beta = 0.5;
    Rng rng(8);
    const GaussianLocation m = gauss1(theta);
    const Positions x = m.sample(200000, rng);
    const auto est = gradient_reverse_kl(x, uniform_weights(x.rows()), m, gauss1(0.0), Reward::constant_value(0.0), beta);
    EXPECT_NEAR(est.g[0], -beta * theta, 0.01);
}

TEST(GradientReverseKl, QuadratureFiniteDifferenceOracle) {
    // l(theta) = P_theta(x < 0) - beta theta^2 / 2 for pi_theta = N(theta, 1), pi_0 = N(0, 1).
    const double theta = 1.0, beta = 0.25;
    const auto ell = [&](double t) {
        // Fixed grid: a grid moving with t would shift the cell edges past x = 0.
        const int n = 40000;
        const double lo = -16.0, h = 32.0 / n;
        double mass = 0.0, kl = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = lo + (i + 0.5) * h;
            const double p = std::exp(-0.5 * (x - t) * (x - t)) / std::sqrt(2.0 * M_PI) * h;
            if (x < 0.0) mass += p;
            kl += p * (0.5 * x * x - 0.5 * (x - t) * (x - t));
        }
        return mass - beta * kl;
    };
    const double fd = (ell(theta + 1e-4) - ell(theta - 1e-4)) / 2e-4;
    Rng rng(9);
    const GaussianLocation m = gauss1(theta);
    const Positions x = m.sample(100000, rng);
    const auto est = gradient_reverse_kl(x, uniform_weights(x.rows()), m, gauss1(0.0),
                                         Reward::half_plane(RewardKind::half_plane_left), beta);
    EXPECT_LT(std::abs(est.g[0] - fd) / std::abs(fd), 1e-2);
}

TEST(Estimators, RewardShiftInvariance) {
    Rng rng(10);
    const MlpEnergy m = MlpEnergy::initialised({2, 8, 4}, rng, 0.5);
    const MlpEnergy m0 = MlpEnergy::initialised({2, 8, 4}, rng, 0.5);
    const Positions x = 1.5 * standard_normal(30, 2, rng);
    const Positions ref = standard_normal(10, 2, rng);
    const WeightVector w = random_weights(30, rng);
    for (double c : {-3.0, 7.5}) {
        const auto a = gradient_reverse_kl(x, w, m, m0, Reward::constant_value(0.0), 0.3);
        const auto b = gradient_reverse_kl(x, w, m, m0, Reward::constant_value(c), 0.3);
        EXPECT_LE((a.g - b.g).cwiseAbs().maxCoeff(), 1e-10);
        const auto fa = gradient_forward_kl(x, w, m, Reward::constant_value(0.0), 0.3, ref);
        const auto fb = gradient_forward_kl(x, w, m, Reward::constant_value(c), 0.3, ref);
        EXPECT_LE((fa.g - fb.g).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Estimators, NonConstantRewardShiftInvariance) {
    // R_right = 1 - R_left almost surely; centring removes the 1, leaving a sign flip.
    Rng rng(11);
    const GaussianLocation m = gauss1(0.2);
    const Positions x = m.sample(500, rng);
    const WeightVector w = random_weights(500, rng);
    const auto left = gradient_forward_kl(x, w, m, Reward::half_plane(RewardKind::half_plane_left), 0.0, x);
    const auto right = gradient_forward_kl(x, w, m, Reward::half_plane(RewardKind::half_plane_right), 0.0, x);
    EXPECT_NEAR(left.g[0], -right.g[0], 1e-12);
}

TEST(Estimators, PermutationInvariance) {
    Rng rng(12);
    const MlpEnergy m = MlpEnergy::initialised({2, 8, 4}, rng, 0.5);
    const MlpEnergy m0 = MlpEnergy::initialised({2, 8, 4}, rng, 0.5);
    const Positions x = 1.5 * standard_normal(40, 2, rng);
    const WeightVector w = random_weights(40, rng);
    std::vector<Eigen::Index> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Positions xp(40, 2);
    WeightVector wp{Vector(40)};
    for (Eigen::Index i = 0; i < 40; ++i) {
        xp.row(i) = x.row(perm[i]);
        wp.values[i] = w.values[perm[i]];
    }
    const Reward r = smooth_reward();
    EXPECT_LE((gradient_reverse_kl(x, w, m, m0, r, 0.4).g - gradient_reverse_kl(xp, wp, m, m0, r, 0.4).g)
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
    EXPECT_LE((gradient_forward_kl(x, w, m, r, 0.4, x).g - gradient_forward_kl(xp, wp, m, r, 0.4, x).g)
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
    const auto h = [](const Vector& y) { return Vector(y.array().sin()); };
    EXPECT_LE((gradient_generic(x, w, h).g - gradient_generic(xp, wp, h).g).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Estimators, WeightScaleInvariance) {
    Rng rng(13);
    const MlpEnergy m = MlpEnergy::initialised({2, 8, 4}, rng, 0.5);
    const MlpEnergy m0 = MlpEnergy::initialised({2, 8, 4}, rng, 0.5);
    const Positions x = 1.5 * standard_normal(40, 2, rng);
    std::normal_distribution<double> n(0.0, 1.0);
    Vector lw(40);
    for (auto& v : lw) v = n(rng);
    const WeightVector a = normalize_weights(lw);
    const WeightVector b = normalize_weights((lw.array() + std::log(123.4)).matrix());
    const Reward r = smooth_reward();
    EXPECT_LE((gradient_reverse_kl(x, a, m, m0, r, 0.2).g - gradient_reverse_kl(x, b, m, m0, r, 0.2).g)
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
    EXPECT_LE((gradient_forward_kl(x, a, m, r, 0.2, x).g - gradient_forward_kl(x, b, m, r, 0.2, x).g)
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
}

TEST(Estimators, ParticleRewardWithinRange) {
    Rng rng(14);
    const GaussianLocation m(Vector::Zero(2));
    const Positions x = 2.0 * standard_normal(60, 2, rng);
    const WeightVector w = random_weights(60, rng);
    const Reward r = smooth_reward();
    const Vector rv = r.evaluate_batch(x);
    const auto est = gradient_forward_kl(x, w, m, r, 0.1, x);
    EXPECT_GE(est.particle_reward, rv.minCoeff());
    EXPECT_LE(est.particle_reward, rv.maxCoeff());
    EXPECT_TRUE(est.g.allFinite());
}

TEST(Surrogate, ConstantRewardSameModelIsZero) {
    Rng rng(15);
    const MlpEnergy m = MlpEnergy::initialised({2, 8, 4}, rng, 0.5);
    const Positions x = standard_normal(20, 2, rng);
    const auto s = surrogate_loss_values(x, random_weights(20, rng), m, m, Reward::constant_value(3.0), 0.5);
    EXPECT_NEAR(s.reward_surrogate, 0.0, 1e-14);
    EXPECT_NEAR(s.kl_surrogate, 0.0, 1e-14);
}

TEST(Surrogate, SingleParticleIsZero) {
    Rng rng(16);
    const MlpEnergy m = MlpEnergy::initialised({2, 8, 4}, rng, 0.5);
    const MlpEnergy m0 = MlpEnergy::initialised({2, 8, 4}, rng, 0.5);
    const auto s = surrogate_loss_values(standard_normal(1, 2, rng), uniform_weights(1), m, m0, smooth_reward(), 0.5);
    EXPECT_EQ(s.reward_surrogate, 0.0);
    EXPECT_EQ(s.kl_surrogate, 0.0);
}

TEST(Surrogate, GradientIsNegatedReverseKl) {
    Rng rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        const MlpEnergy m = MlpEnergy::initialised({2, 8, 4}, rng, 0.4);
        const MlpEnergy m0 = MlpEnergy::initialised({2, 8, 4}, rng, 0.4);
        const Positions x = 1.5 * standard_normal(30, 2, rng);
        const WeightVector w = random_weights(30, rng);
        const auto g = gradient_reverse_kl(x, w, m, m0, smooth_reward(), 0.25).g;
        const Vector s = surrogate_gradient(x, w, m, m0, smooth_reward(), 0.25);
        EXPECT_LE((s + g).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Surrogate, GradientMatchesFiniteDifferenceOfValues) {
    // Differentiate the surrogate value with centred factors frozen at the base parameters.
    Rng rng(18);
    const MlpEnergy m = MlpEnergy::initialised({2, 4, 4}, rng, 0.6);
    const MlpEnergy m0 = MlpEnergy::initialised({2, 4, 4}, rng, 0.6);
    const Positions x = standard_normal(12, 2, rng);
    const WeightVector w = random_weights(12, rng);
    const Reward r = smooth_reward();
    const double beta = 0.3;
    const Vector rv = r.evaluate_batch(x);
    const Vector d = m.potential_batch(x) - m0.potential_batch(x);
    const Vector c = (w.values.array() * (rv.array() - w.values.dot(rv)) +
                      beta * w.values.array() * (d.array() - w.values.dot(d)))
                         .matrix();
    const auto f = [&](const Vector& t) {
        MlpEnergy mm = m;
        mm.set_params(t);
        return c.dot(mm.potential_batch(x));
    };
    const Vector fd = finite_difference(f, m.params(), 1e-6);
    const Vector an = surrogate_gradient(x, w, m, m0, r, beta);
    EXPECT_LE((fd - an).cwiseAbs().maxCoeff(), 1e-7);
    const auto s = surrogate_loss_values(x, w, m, m0, r, beta);
    EXPECT_NEAR(s.total(), f(m.params()), 1e-12);
}

TEST(SoulEstimate, ConstantChain) {
    const Positions chain = Positions::Constant(10, 1, 2.5);
    const auto est = soul_estimate(chain, 3, [](const Vector& x) { return Vector(x.array().square()); });
    EXPECT_DOUBLE_EQ(est.g[0], 6.25);
}

TEST(SoulEstimate, LastStateOnly) {
    const auto est = soul_estimate(col({1.0, 2.0, 3.0, 4.0}), 3, [](const Vector& x) { return x; });
    EXPECT_DOUBLE_EQ(est.g[0], 4.0);
}

TEST(SoulEstimate, BurnInOutOfRange) {
    const auto h = [](const Vector& x) { return x; };
    EXPECT_THROW(soul_estimate(col({1.0, 2.0}), 2, h), ConfigError);
    EXPECT_THROW(soul_estimate(col({1.0, 2.0}), -1, h), ConfigError);
}

TEST(SoulEstimate, ErgodicAverageOfSecondMoment) {
    // ULA on U = x^2 / 2 is stationary at N(0, 1 / (1 - gamma / 2)).
    const GaussianLocation m = gauss1(0.0);
    const UlaKernel k{0.05, 1.0};
    Rng rng(19);
    std::normal_distribution<double> n(0.0, 1.0);
    const Eigen::Index t = 100000;
    Positions chain(t, 1);
    Vector x = Vector::Zero(1);
    for (Eigen::Index s = 0; s < t; ++s) {
        x = ula_step(x, m.grad_x(x), k, Vector::Constant(1, n(rng)));
        chain(s, 0) = x[0];
    }
    const auto est = soul_estimate(chain, 50000, [](const Vector& y) { return Vector(y.array().square()); });
    EXPECT_NEAR(est.g[0], 1.0, 0.05);
}
