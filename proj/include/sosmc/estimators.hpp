#pragma once

// Gradient estimators built from weighted particles.
//
// Reward-tuning estimators return the gradient of the maximised objective
// l(theta) = E_pi[R] - beta KL(.), so ascent on l means descent along -g.
// Particles, weights, rewards and energy differences are constants: only
// grad_theta U is differentiated.

#include "sosmc/core.hpp"
#include "sosmc/models.hpp"
#include "sosmc/particle.hpp"
#include "sosmc/rewards.hpp"

#include <cmath>
#include <limits>

namespace sosmc {

struct GradientEstimate {
    Vector g;
    double particle_reward = std::numeric_limits<double>::quiet_NaN();
    double ess = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline void check_sizes(const Positions& x, const WeightVector& w) {
    if (x.rows() != w.size()) throw ConfigError("estimator: particle/weight count mismatch");
    if (x.rows() == 0) throw ConfigError("estimator: no particles");
}

inline void check_finite(const Vector& v, const char* what) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!std::isfinite(v[i])) throw EstimatorError(what, static_cast<std::size_t>(i));
}

}  // namespace detail

/// sum_i w_i H(X_i).
template <class H>
GradientEstimate gradient_generic(const Positions& x, const WeightVector& w, H&& h_theta) {
    detail::check_sizes(x, w);
    GradientEstimate out;
    out.g = weighted_mean(x, w, std::forward<H>(h_theta));
    out.ess = ess(w);
    return out;
}

/// Forward-KL reward objective E[R] - beta KL(pi_ref || pi_theta):
///   -Cov_w(R, grad U) - beta (mean_ref grad U - sum_i w_i grad U(X_i)).
template <GibbsModel M>
GradientEstimate gradient_forward_kl(const Positions& x, const WeightVector& w, const M& model, const Reward& reward,
                                     double beta_kl, const Positions& reference_batch) {
    detail::check_sizes(x, w);
    if (reference_batch.rows() == 0) throw ConfigError("gradient_forward_kl: empty reference batch");
    const Vector r = reward.evaluate_batch(x);
    const double rbar = w.values.dot(r);
    Matrix coeffs(x.rows(), 2);
    coeffs.col(0) = (w.values.array() * (r.array() - rbar)).matrix();
    coeffs.col(1) = w.values;
    const Matrix gp = model.grad_theta_weighted(x, coeffs);
    GradientEstimate out;
    out.g = -gp.col(0);
    if (beta_kl != 0.0) {
        const Matrix m = Matrix::Constant(reference_batch.rows(), 1, 1.0 / static_cast<double>(reference_batch.rows()));
        const Vector gref = model.grad_theta_weighted(reference_batch, m).col(0);
        out.g -= beta_kl * (gref - gp.col(1));
    }
    detail::check_finite(out.g, "gradient_forward_kl: non-finite gradient");
    out.particle_reward = rbar;
    out.ess = ess(w);
    return out;
}

/// Reverse-KL advantage A = R - beta log(pi_theta / pi_0) = R + beta (U_theta - U_0) + const.
template <GibbsModel M>
Vector reverse_kl_advantage(const Positions& x, const M& trainable, const M& frozen, const Vector& rewards,
                            double beta_kl) {
    const Vector d = trainable.potential_batch(x) - frozen.potential_batch(x);
    detail::check_finite(d, "reverse_kl: non-finite energy difference");
    return rewards + beta_kl * d;
}

/// Reverse-KL reward objective E[R] - beta KL(pi_theta || pi_0), concise form
///   -(sum_i w_i A_i grad U_i - (sum_i w_i A_i)(sum_i w_i grad U_i)).
template <GibbsModel M>
GradientEstimate gradient_reverse_kl(const Positions& x, const WeightVector& w, const M& trainable, const M& frozen,
                                     const Reward& reward, double beta_kl) {
    detail::check_sizes(x, w);
    const Vector r = reward.evaluate_batch(x);
    const Vector a = reverse_kl_advantage(x, trainable, frozen, r, beta_kl);
    const double abar = w.values.dot(a);
    const Matrix coeffs = (w.values.array() * (a.array() - abar)).matrix();
    GradientEstimate out;
    out.g = -trainable.grad_theta_weighted(x, coeffs).col(0);
    detail::check_finite(out.g, "gradient_reverse_kl: non-finite gradient");
    out.particle_reward = w.values.dot(r);
    out.ess = ess(w);
    return out;
}

/// Same estimator written term by term from per-sample gradient rows:
///   -sum w R gU + (sum w R)(sum w gU) - beta sum w D gU + beta (sum w D)(sum w gU),
/// with D = U_theta - U_0.
template <GibbsModel M>
GradientEstimate gradient_reverse_kl_expanded(const Positions& x, const WeightVector& w, const M& trainable,
                                              const M& frozen, const Reward& reward, double beta_kl) {
    detail::check_sizes(x, w);
    const Vector r = reward.evaluate_batch(x);
    const Vector d = trainable.potential_batch(x) - frozen.potential_batch(x);
    detail::check_finite(d, "reverse_kl: non-finite energy difference");
    const Matrix gu = trainable.grad_theta_batch(x);
    const Vector mean_gu = gu.transpose() * w.values;
    const Vector wr = (w.values.array() * r.array()).matrix();
    const Vector wd = (w.values.array() * d.array()).matrix();
    GradientEstimate out;
    out.g = -(gu.transpose() * wr) + w.values.dot(r) * mean_gu - beta_kl * (gu.transpose() * wd) +
            beta_kl * w.values.dot(d) * mean_gu;
    detail::check_finite(out.g, "gradient_reverse_kl: non-finite gradient");
    out.particle_reward = w.values.dot(r);
    out.ess = ess(w);
    return out;
}

struct SurrogateValues {
    double reward_surrogate = 0.0;
    double kl_surrogate = 0.0;
    double total() const { return reward_surrogate + kl_surrogate; }
};

/// Detached-weight surrogates
///   reward = sum_i w_i (R_i - Rbar) U_theta(X_i),
///   kl     = beta sum_i w_i (D_i - Dbar) U_theta(X_i).
/// Their theta-gradient (with the bracketed factors held fixed) is -g_reverse.
template <GibbsModel M>
SurrogateValues surrogate_loss_values(const Positions& x, const WeightVector& w, const M& trainable, const M& frozen,
                                      const Reward& reward, double beta_kl) {
    detail::check_sizes(x, w);
    const Vector r = reward.evaluate_batch(x);
    const Vector e = trainable.potential_batch(x);
    const Vector d = e - frozen.potential_batch(x);
    detail::check_finite(d, "surrogate: non-finite energy difference");
    const double rbar = w.values.dot(r), dbar = w.values.dot(d);
    SurrogateValues s;
    s.reward_surrogate = (w.values.array() * (r.array() - rbar) * e.array()).sum();
    s.kl_surrogate = beta_kl * (w.values.array() * (d.array() - dbar) * e.array()).sum();
    return s;
}

/// Gradient of the total surrogate by one batched reverse pass whose upstream
/// coefficients are the detached centred weights.
template <GibbsModel M>
Vector surrogate_gradient(const Positions& x, const WeightVector& w, const M& trainable, const M& frozen,
                          const Reward& reward, double beta_kl) {
    detail::check_sizes(x, w);
    const Vector r = reward.evaluate_batch(x);
    const Vector d = trainable.potential_batch(x) - frozen.potential_batch(x);
    const double rbar = w.values.dot(r), dbar = w.values.dot(d);
    // dL/dU_i for L = sum_i c_i U_theta(X_i)
    const Matrix upstream =
        (w.values.array() * (r.array() - rbar) + beta_kl * w.values.array() * (d.array() - dbar)).matrix();
    return trainable.grad_theta_weighted(x, upstream).col(0);
}

/// Unweighted mean of H over chain[burn_in:].
template <class H>
GradientEstimate soul_estimate(const Positions& chain, Eigen::Index burn_in, H&& h_theta) {
    if (burn_in < 0 || burn_in >= chain.rows()) throw ConfigError("soul_estimate: burn_in must lie in [0, T)");
    const Eigen::Index n = chain.rows() - burn_in;
    const Positions tail = chain.bottomRows(n);
    WeightVector w{Vector::Constant(n, 1.0 / static_cast<double>(n))};
    GradientEstimate out;
    out.g = weighted_mean(tail, w, std::forward<H>(h_theta));
    out.ess = static_cast<double>(n);
    return out;
}

inline WeightVector uniform_weights(Eigen::Index n) {
    return {Vector::Constant(n, 1.0 / static_cast<double>(n))};
}

}  // namespace sosmc
