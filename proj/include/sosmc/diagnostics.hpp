#pragma once

// Closed-form Gaussian oracles, grid quadrature on a bounded box, and
// evaluation of a frozen model by long Langevin chains.

#include "sosmc/core.hpp"
#include "sosmc/kernels.hpp"
#include "sosmc/models.hpp"
#include "sosmc/rewards.hpp"

#include <cmath>
#include <vector>

namespace sosmc {

// --- Gaussian closed forms ----------------------------------------------------

/// N exp(-gamma^2 g' Sigma^-1 g).
inline double ess_infinity_gaussian(double n, double gamma, const Vector& grad_l, const Matrix& sigma_inv) {
    return n * std::exp(-gamma * gamma * grad_l.dot(sigma_inv * grad_l));
}

/// chi^2(N(theta + delta, Sigma) || N(theta, Sigma)) = exp(delta' Sigma^-1 delta) - 1.
inline double chi2_gaussian_shift(const Vector& delta, const Matrix& sigma_inv) {
    return std::expm1(delta.dot(sigma_inv * delta));
}

/// Empirical ESS/N after reweighting exact draws of pi_theta towards
/// pi_{theta + delta} (weights pi_{theta+delta} / pi_theta).
inline double reweight_ess_fraction(const GaussianLocation& model, const Vector& delta, Eigen::Index n, Rng& rng) {
    GaussianLocation shifted = model;
    shifted.set_params(model.params() + delta);
    const Positions x = model.sample(n, rng);
    const Vector lw = model.potential_batch(x) - shifted.potential_batch(x);
    const double m = lw.maxCoeff();
    const Vector w = (lw.array() - m).exp().matrix();
    return w.sum() * w.sum() / w.squaredNorm() / static_cast<double>(n);
}

// --- quadrature --------------------------------------------------------------

/// Midpoint grid: each dimension split into `points` equal cells.
struct QuadratureGrid {
    Vector lower;
    Vector upper;
    Eigen::Index points = 256;

    static QuadratureGrid box(Eigen::Index d, double lo, double hi, Eigen::Index points) {
        return {Vector::Constant(d, lo), Vector::Constant(d, hi), points};
    }

    Eigen::Index dim() const { return lower.size(); }
    Eigen::Index size() const {
        Eigen::Index s = 1;
        for (Eigen::Index j = 0; j < dim(); ++j) s *= points;
        return s;
    }
    Vector spacing() const { return (upper - lower) / static_cast<double>(points); }
    /// log of the cell measure prod_j Delta_j.
    double log_cell_measure() const { return spacing().array().log().sum(); }

    void validate() const {
        if (lower.size() != upper.size() || lower.size() == 0) throw ConfigError("grid: bad bounds");
        if (points < 1) throw ConfigError("grid: need at least one point per dimension");
        if (!((upper - lower).array() > 0.0).all()) throw ConfigError("grid: upper must exceed lower");
    }

    /// Cell midpoints, first dimension varying slowest.
    Positions nodes() const {
        validate();
        const Vector h = spacing();
        Positions out(size(), dim());
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            Eigen::Index rem = r;
            for (Eigen::Index j = dim(); j-- > 0;) {
                const Eigen::Index idx = rem % points;
                rem /= points;
                out(r, j) = lower[j] + (static_cast<double>(idx) + 0.5) * h[j];
            }
        }
        return out;
    }
};

inline double log_sum_exp(const Vector& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

/// log sum_g exp(-U(x_g)) + log Delta^d.
template <GibbsModel M>
double quadrature_log_z(const M& model, const QuadratureGrid& grid) {
    return log_sum_exp(-model.potential_batch(grid.nodes())) + grid.log_cell_measure();
}

/// Normalised grid probabilities p_g (sum to one) of a model.
template <GibbsModel M>
Vector quadrature_probabilities(const M& model, const Positions& nodes) {
    const Vector lp = -model.potential_batch(nodes);
    const double lz = log_sum_exp(lp);
    return (lp.array() - lz).exp().matrix();
}

/// KL(p || q) by quadrature on the grid.
template <GibbsModel P, GibbsModel Q>
double kl_quadrature(const P& p, const Q& q, const QuadratureGrid& grid) {
    const Positions nodes = grid.nodes();
    const Vector lp_raw = -p.potential_batch(nodes);
    const Vector lq_raw = -q.potential_batch(nodes);
    const Vector lp = lp_raw.array() - log_sum_exp(lp_raw);
    const Vector lq = lq_raw.array() - log_sum_exp(lq_raw);
    double kl = 0.0;
    for (Eigen::Index g = 0; g < lp.size(); ++g) {
        const double pg = std::exp(lp[g]);
        if (pg > 0.0) kl += pg * (lp[g] - lq[g]);
    }
    return kl;
}

/// E_pi[f] by quadrature for a scalar function f.
template <GibbsModel M, class F>
double quadrature_expectation(const M& model, const QuadratureGrid& grid, F&& f) {
    const Positions nodes = grid.nodes();
    const Vector p = quadrature_probabilities(model, nodes);
    double acc = 0.0;
    for (Eigen::Index g = 0; g < nodes.rows(); ++g) acc += p[g] * f(Vector(nodes.row(g).transpose()));
    return acc;
}

/// Mean parameter gradient E_pi[grad_theta U] by quadrature.
template <GibbsModel M>
Vector quadrature_mean_grad_theta(const M& model, const QuadratureGrid& grid) {
    const Positions nodes = grid.nodes();
    const Vector p = quadrature_probabilities(model, nodes);
    return model.grad_theta_weighted(nodes, p).col(0);
}

/// Fisher information Cov_pi(grad_theta U) by quadrature.
template <GibbsModel M>
Matrix fisher_information_quadrature(const M& model, const QuadratureGrid& grid) {
    const Positions nodes = grid.nodes();
    const Vector p = quadrature_probabilities(model, nodes);
    const Matrix gt = model.grad_theta_batch(nodes);
    const Vector mean = gt.transpose() * p;
    const Matrix centred = gt.rowwise() - mean.transpose();
    return centred.transpose() * p.asDiagonal() * centred;
}

struct Chi2Check {
    double exact = 0.0;
    double quadratic_approx = 0.0;
    double ratio() const { return exact / quadratic_approx; }
};

/// Exact chi^2 of the shift gamma g against gamma^2 g' I g, with the Fisher
/// matrix I obtained by quadrature on a box of +-10 standard deviations.
inline Chi2Check chi2_small_gamma_check(const GaussianLocation& model, double gamma, const Vector& grad_l,
                                        Eigen::Index points_per_dim = 0) {
    if (model.dim() > 2) throw ConfigError("chi2_small_gamma_check: quadrature limited to d <= 2");
    const Vector sd = model.covariance().diagonal().cwiseSqrt();
    QuadratureGrid grid{model.params() - 10.0 * sd, model.params() + 10.0 * sd,
                        points_per_dim > 0 ? points_per_dim : (model.dim() == 1 ? 4000 : 400)};
    const Matrix fisher = fisher_information_quadrature(model, grid);
    Chi2Check c;
    c.exact = chi2_gaussian_shift(gamma * grad_l, model.precision());
    c.quadratic_approx = gamma * gamma * grad_l.dot(fisher * grad_l);
    return c;
}

// --- tilted optimum ----------------------------------------------------------

/// Reward mass of exp(R / beta) pi_0 for a {0,1} reward with pi_0(H) = p.
inline double tilted_optimum(double pi0_mass, double beta_kl) {
    if (!(pi0_mass >= 0.0 && pi0_mass <= 1.0)) throw ConfigError("tilted_optimum: mass must lie in [0, 1]");
    if (!(beta_kl > 0.0)) throw ConfigError("tilted_optimum: beta must be positive");
    if (pi0_mass == 0.0) return 0.0;
    if (pi0_mass == 1.0) return 1.0;
    return 1.0 / (1.0 + (1.0 - pi0_mass) / pi0_mass * std::exp(-1.0 / beta_kl));
}

// --- fresh-chain evaluation ----------------------------------------------------

struct FreshEvalConfig {
    Eigen::Index m_eval = 50;
    long b_eval = 2000;
    long t_eval = 2000;
    double box_lower = -6.0;
    double box_upper = 6.0;

    void validate() const {
        if (m_eval < 1) throw ConfigError("fresh eval: need at least one chain");
        if (b_eval < 0) throw ConfigError("fresh eval: burn-in must be non-negative");
        if (t_eval < 1) throw ConfigError("fresh eval: need at least one post-burn-in step");
        if (!(box_upper > box_lower)) throw ConfigError("fresh eval: empty box");
    }
};

/// Average reward over the states after ULA steps b+1 .. b+t of m chains
/// started uniformly on the box.
template <GibbsModel M>
double fresh_reward(const M& model, const Reward& reward, const FreshEvalConfig& cfg, const UlaKernel& kernel,
                    std::uint64_t seed) {
    cfg.validate();
    kernel.validate();
    Rng init = make_stream(seed, "eval_init");
    Rng prop = make_stream(seed, "eval_propagate");
    std::uniform_real_distribution<double> unif(cfg.box_lower, cfg.box_upper);
    Positions x(cfg.m_eval, model.dim());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = unif(init);
    double acc = 0.0;
    Vector e;
    Positions g;
    for (long s = 0; s < cfg.b_eval + cfg.t_eval; ++s) {
        model.energy_and_grad_x(x, e, g);
        x = ula_step(x, g, kernel, standard_normal(x.rows(), x.cols(), prop));
        if (s >= cfg.b_eval) acc += reward.evaluate_batch(x).sum();
    }
    return acc / (static_cast<double>(cfg.m_eval) * static_cast<double>(cfg.t_eval));
}

// --- idealised descent -------------------------------------------------------

/// Exact gradient descent on l(theta) = 0.5 mu theta^2; returns l(theta_k) for
/// k = 0..k_steps (the infimum is 0).
inline std::vector<double> idealized_gd_check(double mu, double l_smooth, double gamma, long k_steps, double theta0) {
    if (!(mu > 0.0) || !(l_smooth >= mu)) throw ConfigError("idealized_gd_check: need 0 < mu <= L");
    if (!(gamma > 0.0) || gamma > 1.0 / l_smooth) throw ConfigError("idealized_gd_check: gamma must lie in (0, 1/L]");
    if (k_steps < 0) throw ConfigError("idealized_gd_check: negative step count");
    std::vector<double> gaps;
    gaps.reserve(static_cast<std::size_t>(k_steps) + 1);
    double theta = theta0;
    for (long k = 0; k <= k_steps; ++k) {
        gaps.push_back(0.5 * mu * theta * theta);
        theta -= gamma * mu * theta;
    }
    return gaps;
}

}  // namespace sosmc
