#pragma once

// Numerical self-checks against closed forms and independent computations.
// Each check returns its measured values so reports are machine-readable.

#include "sosmc/core.hpp"
#include "sosmc/diagnostics.hpp"
#include "sosmc/estimators.hpp"
#include "sosmc/io.hpp"
#include "sosmc/kernels.hpp"
#include "sosmc/mlp.hpp"
#include "sosmc/models.hpp"
#include "sosmc/tuning.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

namespace sosmc {

struct CheckResult {
    std::string name;
    bool passed = false;
    json measured = json::object();
    std::string message;
    double seconds = 0.0;
};

namespace checks {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline Matrix random_spd(Eigen::Index d, Rng& rng) {
    const Matrix a = standard_normal(d, d, rng);
    return a * a.transpose() / static_cast<double>(d) + 0.5 * Matrix::Identity(d, d);
}

/// Compact and direct log-weights agree on random instances of all three model
/// families, with x_curr drawn from the forward kernel.
inline CheckResult weight_identity(int instances = 1000, std::uint64_t seed = 1) {
    CheckResult r{"weight_identity"};
    Rng rng = make_stream(seed, "check_weight_identity");
    std::uniform_real_distribution<double> loggamma(std::log(1e-4), std::log(1e-1));
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
        const UlaKernel k{std::exp(loggamma(rng)), 1.0};
        auto run = [&](const auto& prev, const auto& curr) {
            const Vector xp = 1.5 * standard_normal(1, prev.dim(), rng).row(0).transpose();
            const Vector noise = standard_normal(1, prev.dim(), rng).row(0).transpose();
            const Vector xc = ula_step(xp, prev.grad_x(xp), k, noise);
            const double a = incremental_log_weight(prev, curr, xp, xc, k);
            const double b = incremental_log_weight_direct(prev, curr, xp, xc, k);
            worst = std::max(worst, std::abs(a - b));
        };
        switch (i % 3) {
            case 0: {
                const Matrix s = random_spd(2, rng);
                GaussianLocation prev(standard_normal(1, 2, rng).row(0).transpose(), s);
                GaussianLocation curr(standard_normal(1, 2, rng).row(0).transpose(), s);
                run(prev, curr);
                break;
            }
            case 1: {
                const Matrix means = 2.0 * Matrix(standard_normal(3, 2, rng));
                MixturePotential prev(standard_normal(1, 3, rng).row(0).transpose(), means, 0.8);
                MixturePotential curr(standard_normal(1, 3, rng).row(0).transpose(), means, 0.8);
                run(prev, curr);
                break;
            }
            default: {
                MlpEnergy prev = MlpEnergy::initialised({2, 8, 4}, rng, 0.5);
                MlpEnergy curr = prev;
                curr.set_params(prev.params() + 0.05 * Vector(standard_normal(1, prev.num_params(), rng).row(0).transpose()));
                run(prev, curr);
            }
        }
    }
    r.passed = worst <= 1e-9;
    r.measured = {{"instances", instances}, {"max_abs_diff", worst}, {"tolerance", 1e-9}};
    return r;
}

/// Weighted estimate of E[x] after three reweighted ULA moves along a theta
/// schedule, against the final mean.
inline CheckResult feynman_kac(Eigen::Index n = 100000, std::uint64_t seed = 2) {
    CheckResult r{"feynman_kac"};
    Rng rng = make_stream(seed, "check_feynman_kac");
    const std::vector<double> schedule{0.0, 0.5, 1.0, 1.5};
    const UlaKernel k{0.1, 1.0};
    GaussianLocation prev(Vector::Constant(1, schedule[0]));
    Positions x = prev.sample(n, rng);
    Vector lw = Vector::Zero(n);
    for (std::size_t s = 1; s < schedule.size(); ++s) {
        GaussianLocation curr(Vector::Constant(1, schedule[s]));
        Vector e, en;
        Positions g, gn;
        prev.energy_and_grad_x(x, e, g);
        const Positions xn = ula_step(x, g, k, standard_normal(n, 1, rng));
        curr.energy_and_grad_x(xn, en, gn);
        lw += alpha_batch(e, g, x, xn, k.gamma) - alpha_batch(en, gn, xn, x, k.gamma);
        x = xn;
        prev = curr;
    }
    const WeightVector w = normalize_weights(lw);
    const double est = w.values.dot(x.col(0));
    const double se = std::sqrt((w.values.array().square() * (x.col(0).array() - est).square()).sum());
    const double target = schedule.back();
    r.passed = std::abs(est - target) <= 3.0 * se;
    r.measured = {{"estimate", est}, {"target", target}, {"standard_error", se}, {"ess", ess(w)}, {"n", n}};
    return r;
}

/// Mean squared error of the SOSMC gradient for N(theta, 1) with
/// H(x) = theta - x - b, whose exact expectation is -b, for growing N.
inline CheckResult gradient_mse_slope(int replicates = 100, std::uint64_t seed = 3) {
    CheckResult r{"gradient_mse_slope"};
    const double b = 1.0;
    const std::vector<Eigen::Index> sizes{100, 1000, 10000};
    std::vector<double> mse;
    for (const Eigen::Index n : sizes) {
        double acc = 0.0;
        long count = 0;
        for (int rep = 0; rep < replicates; ++rep) {
            TuningConfig cfg;
            cfg.objective = Objective::generic;
            cfg.n_particles = n;
            cfg.k_outer = 10;
            cfg.kernel = UlaKernel{0.1, 1.0};
            cfg.optimizer = OptimizerSpec{OptMethod::sgd, 0.1};
            cfg.tau_resample = 0.5;
            cfg.seed = derive_seed(seed, "mse_slope", static_cast<std::uint64_t>(n) * 1000 + static_cast<std::uint64_t>(rep));
            TuningProblem<GaussianLocation> p{GaussianLocation(Vector::Zero(1))};
            p.h_theta = [b](const GaussianLocation& m, const Vector& x) { return Vector(m.params() - x - Vector::Constant(1, b)); };
            p.initial_sampler = [](Eigen::Index m, Rng& rng) { return GaussianLocation(Vector::Zero(1)).sample(m, rng); };
            p.observer = [&](long k, const Vector&, const GradientEstimate& est) {
                if (k == 0) return;  // k = 0 uses exact draws
                acc += (est.g[0] + b) * (est.g[0] + b);
                ++count;
            };
            sosmc_run(cfg, p);
        }
        mse.push_back(acc / static_cast<double>(count));
    }
    // least-squares slope of log mse on log N
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        mx += std::log(static_cast<double>(sizes[i]));
        my += std::log(mse[i]);
    }
    mx /= static_cast<double>(sizes.size());
    my /= static_cast<double>(sizes.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        const double dx = std::log(static_cast<double>(sizes[i])) - mx;
        sxy += dx * (std::log(mse[i]) - my);
        sxx += dx * dx;
    }
    const double slope = sxy / sxx;
    r.passed = std::abs(slope + 1.0) <= 0.3;
    r.measured = {{"sizes", sizes}, {"mse", mse}, {"slope", slope}, {"replicates", replicates}};
    return r;
}

/// Exact-gradient descent on 0.5 mu theta^2 contracts at rate (1 - gamma mu).
inline CheckResult descent_rate() {
    CheckResult r{"descent_rate"};
    r.passed = true;
    json cases = json::array();
    for (const auto& [mu, gamma] : std::vector<std::pair<double, double>>{{1.0, 0.5}, {1.0, 1.0}, {0.5, 1.0}}) {
        const auto gaps = idealized_gd_check(mu, mu, gamma, 60, 5.0);
        double worst = -1e300;
        for (std::size_t k = 0; k < gaps.size(); ++k)
            worst = std::max(worst, gaps[k] - std::pow(1.0 - gamma * mu, static_cast<double>(k)) * gaps[0]);
        const bool ok = worst <= 1e-12;
        r.passed = r.passed && ok;
        cases.push_back({{"mu", mu}, {"gamma", gamma}, {"max_excess", worst}, {"passed", ok}});
    }
    r.measured = {{"cases", cases}};
    return r;
}

/// Empirical ESS/N after one exact reweight against N exp(-gamma^2 g'S^-1 g).
inline CheckResult ess_infinity(Eigen::Index n = 100000, std::uint64_t seed = 5) {
    CheckResult r{"ess_infinity"};
    Matrix s(2, 2);
    s << 1.0, 0.3, 0.3, 0.5;
    const GaussianLocation model(Vector{{0.5, -0.5}}, s);
    const Vector g{{1.0, -1.5}};
    r.passed = true;
    json cases = json::array();
    for (const double gamma : {0.05, 0.1, 0.2}) {
        Rng rng = make_stream(seed, "check_ess_infinity", static_cast<std::uint64_t>(gamma * 1000));
        const double emp = reweight_ess_fraction(model, -gamma * g, n, rng);
        const double formula = ess_infinity_gaussian(1.0, gamma, g, model.precision());
        const double rel = std::abs(emp - formula) / formula;
        const bool ok = rel < 0.05;
        r.passed = r.passed && ok;
        cases.push_back({{"gamma", gamma}, {"empirical", emp}, {"formula", formula}, {"rel_error", rel}, {"passed", ok}});
    }
    r.measured = {{"cases", cases}, {"n", n}};
    return r;
}

/// Exact chi^2 over its Fisher-quadratic approximation tends to one.
inline CheckResult chi2_small_gamma() {
    CheckResult r{"chi2_small_gamma"};
    const GaussianLocation model(Vector::Zero(2));
    const Vector g{{1.0, 0.0}};
    const Chi2Check at = chi2_small_gamma_check(model, 0.1, g);
    const double expected = std::expm1(0.01) / 0.01;
    bool monotone = true;
    double last = 1e300;
    json ratios = json::array();
    for (const double gamma : {0.4, 0.2, 0.1, 0.05, 0.025}) {
        const double q = chi2_small_gamma_check(model, gamma, g).ratio();
        monotone = monotone && q < last && q > 1.0;
        last = q;
        ratios.push_back({{"gamma", gamma}, {"ratio", q}});
    }
    r.passed = std::abs(at.ratio() - expected) <= 1e-4 && std::abs(at.ratio() - 1.00502) <= 1e-4 && monotone;
    r.measured = {{"ratio_at_0.01", at.ratio()}, {"closed_form", expected}, {"exact", at.exact},
                  {"quadratic", at.quadratic_approx}, {"ratios", ratios}, {"monotone_to_one", monotone}};
    return r;
}

/// Quadrature KL of two unit Gaussians against the closed form 0.5 dmu^2.
inline CheckResult kl_quadrature_check() {
    CheckResult r{"kl_quadrature"};
    const GaussianLocation p(Vector::Zero(1)), q(Vector::Ones(1));
    const double kl = kl_quadrature(p, q, QuadratureGrid::box(1, -10.0, 10.0, 4096));
    const double self = kl_quadrature(p, p, QuadratureGrid::box(1, -10.0, 10.0, 4096));
    const GaussianLocation p2(Vector{{0.3, -0.2}}), q2(Vector{{-0.5, 0.4}});
    const double kl2 = kl_quadrature(p2, q2, QuadratureGrid::box(2, -10.0, 10.0, 256));
    const double exact2 = 0.5 * (p2.params() - q2.params()).squaredNorm();
    r.passed = std::abs(kl - 0.5) <= 1e-4 && std::abs(self) <= 1e-10 && std::abs(kl2 - exact2) <= 1e-4;
    r.measured = {{"kl_1d", kl}, {"kl_self", self}, {"kl_2d", kl2}, {"kl_2d_exact", exact2}};
    return r;
}

/// Tilted optimum decreases in beta and increases in pi_0(H) on a 20 x 20 grid.
inline CheckResult tilted_monotonicity() {
    CheckResult r{"tilted_monotonicity"};
    bool ok = true;
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 20; ++j) {
            const double p = 0.025 + 0.95 * i / 19.0, beta = 0.05 + 4.95 * j / 19.0;
            const double v = tilted_optimum(p, beta);
            if (j > 0) ok = ok && v < tilted_optimum(p, 0.05 + 4.95 * (j - 1) / 19.0);
            if (i > 0) ok = ok && v > tilted_optimum(0.025 + 0.95 * (i - 1) / 19.0, beta);
        }
    }
    r.passed = ok && std::abs(tilted_optimum(0.5, 1.0) - std::exp(1.0) / (std::exp(1.0) + 1.0)) < 1e-12;
    r.measured = {{"grid", 400}, {"monotone", ok}};
    return r;
}

/// 1-d oracle l(theta) = E[R] - beta KL by quadrature on a wide grid.
struct QuadratureObjective {
    double beta = 0.25;
    bool forward = false;
    double theta_ref = 0.0;
    double operator()(double theta) const {
        const GaussianLocation m(Vector::Constant(1, theta)), ref(Vector::Constant(1, theta_ref));
        const QuadratureGrid grid = QuadratureGrid::box(1, -14.0, 14.0, 28000);
        const double reward = quadrature_expectation(m, grid, [](const Vector& x) { return x[0] < 0.0 ? 1.0 : 0.0; });
        const double kl = forward ? kl_quadrature(ref, m, grid) : kl_quadrature(m, ref, grid);
        return reward - beta * kl;
    }
};

/// Particle gradients at N exact draws against central differences of the
/// quadrature objective, for both KL directions.
inline CheckResult gradient_oracles(Eigen::Index n = 100000, std::uint64_t seed = 7) {
    CheckResult r{"gradient_oracles"};
    const double theta = 1.0, beta = 0.25, h = 1e-3;
    Reward reward = Reward::half_plane(RewardKind::half_plane_left);
    const GaussianLocation model(Vector::Constant(1, theta)), frozen(Vector::Zero(1));
    Rng rng = make_stream(seed, "check_gradient_oracles");
    const Positions x = model.sample(n, rng);
    const WeightVector w = uniform_weights(n);

    const QuadratureObjective rev{beta, false, 0.0};
    const double fd_rev = (rev(theta + h) - rev(theta - h)) / (2.0 * h);
    const double est_rev = gradient_reverse_kl(x, w, model, frozen, reward, beta).g[0];
    const double rel_rev = std::abs(est_rev - fd_rev) / std::abs(fd_rev);

    const double theta_ref = -1.0;
    const GaussianLocation ref(Vector::Constant(1, theta_ref));
    const Positions refs = ref.sample(n, rng);
    const QuadratureObjective fwd{beta, true, theta_ref};
    const double fd_fwd = (fwd(theta + h) - fwd(theta - h)) / (2.0 * h);
    const double est_fwd = gradient_forward_kl(x, w, model, reward, beta, refs).g[0];
    const double rel_fwd = std::abs(est_fwd - fd_fwd) / std::abs(fd_fwd);

    // closed forms for reference: d/dtheta [Phi(-theta)] = -phi(theta)
    const double phi = std::exp(-0.5 * theta * theta) / std::sqrt(2.0 * std::numbers::pi);
    r.passed = rel_rev < 1e-2 && rel_fwd < 1e-2;
    r.measured = {{"reverse", {{"estimate", est_rev}, {"finite_difference", fd_rev}, {"closed_form", -phi - beta * theta}, {"rel_error", rel_rev}}},
                  {"forward", {{"estimate", est_fwd}, {"finite_difference", fd_fwd}, {"closed_form", -phi - beta * (theta - theta_ref)}, {"rel_error", rel_fwd}}},
                  {"n", n}};
    return r;
}

/// Batched-backprop gradient of the total surrogate equals minus the
/// reverse-KL estimator (concise and per-sample expanded forms) on random MLPs.
inline CheckResult surrogate_equality(int instances = 50, std::uint64_t seed = 8) {
    CheckResult r{"surrogate_equality"};
    Rng rng = make_stream(seed, "check_surrogate");
    std::uniform_real_distribution<double> unif(0.05, 1.0);
    const RewardKind kinds[] = {RewardKind::hard_gated, RewardKind::smooth_gated, RewardKind::multi_modal,
                                RewardKind::half_plane_left, RewardKind::half_plane_lower};
    double worst = 0.0, worst_expanded = 0.0;
    for (int i = 0; i < instances; ++i) {
        const MlpEnergy trainable = MlpEnergy::initialised({2, 8, 4}, rng, 0.4);
        MlpEnergy frozen = trainable;
        frozen.set_params(trainable.params() + 0.1 * Vector(standard_normal(1, trainable.num_params(), rng).row(0).transpose()));
        const Positions x = 2.0 * Positions(standard_normal(64, 2, rng));
        const WeightVector w = normalize_weights(standard_normal(1, 64, rng).row(0).transpose());
        Reward reward;
        reward.kind = kinds[i % 5];
        const double beta = unif(rng);
        const Vector sg = surrogate_gradient(x, w, trainable, frozen, reward, beta);
        const Vector g = gradient_reverse_kl(x, w, trainable, frozen, reward, beta).g;
        const Vector ge = gradient_reverse_kl_expanded(x, w, trainable, frozen, reward, beta).g;
        worst = std::max(worst, (sg + g).cwiseAbs().maxCoeff());
        worst_expanded = std::max(worst_expanded, (sg + ge).cwiseAbs().maxCoeff());
    }
    r.passed = worst < 1e-9 && worst_expanded < 1e-9;
    r.measured = {{"instances", instances}, {"max_abs_diff_concise", worst}, {"max_abs_diff_expanded", worst_expanded}};
    return r;
}

struct NamedCheck {
    std::string name;
    std::function<CheckResult()> run;
};

/// The fast suite run by the `check` command.
inline std::vector<NamedCheck> default_suite() {
    return {
        {"weight_identity", [] { return weight_identity(); }},
        {"feynman_kac", [] { return feynman_kac(); }},
        {"gradient_mse_slope", [] { return gradient_mse_slope(); }},
        {"descent_rate", [] { return descent_rate(); }},
        {"ess_infinity", [] { return ess_infinity(); }},
        {"chi2_small_gamma", [] { return chi2_small_gamma(); }},
        {"kl_quadrature", [] { return kl_quadrature_check(); }},
        {"tilted_monotonicity", [] { return tilted_monotonicity(); }},
        {"gradient_oracles", [] { return gradient_oracles(); }},
        {"surrogate_equality", [] { return surrogate_equality(); }},
    };
}

inline CheckResult timed(const NamedCheck& c) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
        r = c.run();
    } catch (const std::exception& e) {
        r.name = c.name;
        r.passed = false;
        r.message = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline json to_json(const CheckResult& r) {
    return {{"name", r.name}, {"status", r.passed ? "pass" : "fail"}, {"measured", r.measured},
            {"message", r.message}, {"seconds", r.seconds}};
}

}  // namespace checks
}  // namespace sosmc
