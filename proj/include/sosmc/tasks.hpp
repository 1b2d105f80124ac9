#pragma once

// Ready-made tuning problems: the mixture-potential reward task, a Gaussian
// location task, and reward tuning of a pretrained 2-d energy model.

#include "sosmc/core.hpp"
#include "sosmc/diagnostics.hpp"
#include "sosmc/kernels.hpp"
#include "sosmc/mlp.hpp"
#include "sosmc/models.hpp"
#include "sosmc/rewards.hpp"
#include "sosmc/tuning.hpp"

#include <cmath>
#include <string>

namespace sosmc {

// --- mixture task --------------------------------------------------------------

enum class MixtureLayout { sparse, dual };

inline MixtureLayout mixture_layout_from_string(const std::string& s) {
    if (s == "sparse") return MixtureLayout::sparse;
    if (s == "dual") return MixtureLayout::dual;
    throw ConfigError("unknown mixture layout: " + s);
}

/// Four components on the axes at distance 2. The sparse reference gives the
/// component at (2, 0) mass 0.02; the dual one splits mass between (-2, 0)
/// and (2, 0).
inline MixturePotential mixture_reference(MixtureLayout layout, double sigma_sq = 0.5) {
    Matrix means(4, 2);
    means << 2.0, 0.0, -2.0, 0.0, 0.0, 2.0, 0.0, -2.0;
    Vector w(4);
    if (layout == MixtureLayout::sparse)
        w << 0.02, 0.49, 0.245, 0.245;
    else
        w << 0.45, 0.45, 0.05, 0.05;
    return MixturePotential(w.array().log().matrix(), means, sigma_sq);
}

/// Gated reward centred on the (2, 0) component.
inline Reward mixture_reward(RewardKind kind = RewardKind::hard_gated) {
    Reward r;
    r.kind = kind;
    r.centre = Vector{{2.0, 0.0}};
    r.temperature = 1.0;
    r.smoothing = 0.1;
    return r;
}

/// Forward-KL problem: theta starts at the reference logits, particles are
/// exact reference draws, reference batches are exact draws.
inline TuningProblem<MixturePotential> mixture_problem(MixtureLayout layout, const Reward& reward,
                                                       double sigma_sq = 0.5) {
    const MixturePotential ref = mixture_reference(layout, sigma_sq);
    TuningProblem<MixturePotential> p{ref};
    p.frozen = ref;
    p.reward = reward;
    p.reference_sampler = [ref](Eigen::Index n, Rng& rng) { return ref.sample(n, rng); };
    p.initial_sampler = [ref](Eigen::Index n, Rng& rng) { return ref.sample(n, rng); };
    return p;
}

inline TuningConfig mixture_config(Method m) {
    TuningConfig c;
    c.objective = Objective::forward_kl;
    c.beta_kl = 0.1;
    c.n_particles = 1000;
    c.k_outer = 200;
    c.kernel = UlaKernel{0.1, 1.0};
    c.optimizer = OptimizerSpec{OptMethod::adam, 0.1};
    c.tau_resample = 0.9;
    c.reference_batch = 1000;
    (void)m;
    return c;
}

// --- Gaussian location task ----------------------------------------------------

/// 1-d N(theta, 1) started at theta = 0 with reverse KL to N(0, 1).
inline TuningProblem<GaussianLocation> gaussian_problem(const Reward& reward) {
    const GaussianLocation ref(Vector::Zero(1));
    TuningProblem<GaussianLocation> p{ref};
    p.frozen = ref;
    p.reward = reward;
    p.reference_sampler = [ref](Eigen::Index n, Rng& rng) { return ref.sample(n, rng); };
    p.initial_sampler = [ref](Eigen::Index n, Rng& rng) { return ref.sample(n, rng); };
    return p;
}

// --- energy-model task -----------------------------------------------------------

struct BurnInConfig {
    long steps = 2000;
    double gamma = 5e-3;
    double box_lower = -6.0;
    double box_upper = 6.0;
};

/// Approximate draws from a frozen model: ULA chains started uniformly on the box.
template <GibbsModel M>
Positions ula_burn_in(const M& model, Eigen::Index n, const BurnInConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> u(cfg.box_lower, cfg.box_upper);
    Positions x(n, model.dim());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = u(rng);
    const UlaKernel k{cfg.gamma, 1.0};
    Vector e;
    Positions g;
    for (long s = 0; s < cfg.steps; ++s) {
        model.energy_and_grad_x(x, e, g);
        x = ula_step(x, g, k, standard_normal(n, x.cols(), rng));
    }
    return x;
}

/// Reverse-KL reward tuning of a pretrained energy, started at theta_0.
inline TuningProblem<MlpEnergy> ebm_problem(const MlpEnergy& pretrained, const Reward& reward,
                                            BurnInConfig burn = {}) {
    TuningProblem<MlpEnergy> p{pretrained};
    p.frozen = pretrained;
    p.reward = reward;
    p.initial_sampler = [pretrained, burn](Eigen::Index n, Rng& rng) { return ula_burn_in(pretrained, n, burn, rng); };
    p.reference_sampler = p.initial_sampler;
    return p;
}

inline TuningConfig ebm_config() {
    TuningConfig c;
    c.objective = Objective::reverse_kl;
    c.beta_kl = 0.25;
    c.n_particles = 2000;
    c.k_outer = 1000;
    c.kernel = UlaKernel{5e-3, 1.0};
    c.optimizer = OptimizerSpec{OptMethod::adam, 2e-4};
    c.tau_resample = 0.9;
    c.tau_adapt = 0.95;
    c.eval_every = 100;
    return c;
}

/// Checkpoint evaluator: fresh reward and KL to the reference on a grid.
inline std::function<void(long, const MlpEnergy&, TraceRow&)> ebm_evaluator(const MlpEnergy& reference,
                                                                             const Reward& reward,
                                                                             FreshEvalConfig fresh, UlaKernel kernel,
                                                                             std::uint64_t seed,
                                                                             Eigen::Index grid_points = 256) {
    return [=](long k, const MlpEnergy& model, TraceRow& row) {
        row.fresh_reward = fresh_reward(model, reward, fresh, kernel, derive_seed(seed, "eval", static_cast<std::uint64_t>(k)));
        row.kl_quadrature = kl_quadrature(model, reference, QuadratureGrid::box(2, -6.0, 6.0, grid_points));
    };
}

}  // namespace sosmc
