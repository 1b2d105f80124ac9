#pragma once

// Unadjusted Langevin kernel, its reversal used as backward kernel, and the
// incremental importance weight of one SMC move.

#include "sosmc/core.hpp"
#include "sosmc/models.hpp"

#include <cmath>
#include <numbers>

namespace sosmc {

struct UlaKernel {
    double gamma = 1e-2;
    double sigma_noise = 1.0;

    void validate() const {
        if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("UlaKernel: gamma must be positive");
        if (!(sigma_noise > 0.0) || !std::isfinite(sigma_noise))
            throw ConfigError("UlaKernel: sigma_noise must be positive");
    }
    double noise_scale() const { return std::sqrt(2.0 * gamma) * sigma_noise; }
};

/// x - gamma grad + sqrt(2 gamma) sigma noise.
inline Vector ula_step(const Vector& x, const Vector& grad, const UlaKernel& k, const Vector& noise) {
    if (!grad.allFinite()) throw DivergenceError("ula_step: non-finite gradient", 0);
    return x - k.gamma * grad + k.noise_scale() * noise;
}

/// Batched ULA move: row i of xs is moved with grads.row(i) and noise.row(i).
inline Positions ula_step(const Positions& xs, const Positions& grads, const UlaKernel& k, const Positions& noise) {
    for (Eigen::Index i = 0; i < grads.rows(); ++i)
        if (!grads.row(i).allFinite()) throw DivergenceError("ula_step: non-finite gradient", static_cast<std::size_t>(i));
    Positions out = xs - k.gamma * grads + k.noise_scale() * noise;
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        if (!out.row(i).allFinite()) throw DivergenceError("ula_step: non-finite state", static_cast<std::size_t>(i));
    return out;
}

/// alpha_theta(x -> x'; sigma) from the potential and gradient at x.
inline double alpha(double u_x, const Vector& grad_x, const Vector& x, const Vector& x_prime, double gamma,
                    double sigma_noise = 1.0) {
    const double s2 = sigma_noise * sigma_noise;
    return u_x + (x_prime - x).dot(grad_x) / (2.0 * s2) + gamma * grad_x.squaredNorm() / (4.0 * s2);
}

template <GibbsModel M>
double alpha(const M& model, const Vector& x, const Vector& x_prime, double gamma, double sigma_noise = 1.0) {
    return alpha(model.potential(x), model.grad_x(x), x, x_prime, gamma, sigma_noise);
}

/// Vectorised alpha over rows: potentials u and gradients g evaluated at xs.
inline Vector alpha_batch(const Vector& u, const Positions& g, const Positions& xs, const Positions& xs_prime,
                          double gamma, double sigma_noise = 1.0) {
    const double s2 = sigma_noise * sigma_noise;
    const Vector lin = ((xs_prime - xs).array() * g.array()).rowwise().sum().matrix();
    const Vector sq = g.rowwise().squaredNorm();
    return u + lin / (2.0 * s2) + (gamma / (4.0 * s2)) * sq;
}

/// log G = -alpha_curr(x_curr -> x_prev) + alpha_prev(x_prev -> x_curr).
template <GibbsModel M>
double incremental_log_weight(const M& model_prev, const M& model_curr, const Vector& x_prev, const Vector& x_curr,
                              const UlaKernel& k) {
    const double v = -alpha(model_curr, x_curr, x_prev, k.gamma, k.sigma_noise) +
                     alpha(model_prev, x_prev, x_curr, k.gamma, k.sigma_noise);
    if (!std::isfinite(v)) throw NonFiniteError("incremental_log_weight: weight overflow", 0);
    return v;
}

/// log N(y; mean, 2 gamma sigma^2 I).
inline double ula_log_density(const Vector& y, const Vector& mean, const UlaKernel& k) {
    const double var = 2.0 * k.gamma * k.sigma_noise * k.sigma_noise;
    const double d = static_cast<double>(y.size());
    return -0.5 * (y - mean).squaredNorm() / var - 0.5 * d * std::log(2.0 * std::numbers::pi * var);
}

/// Same weight written as the direct ratio
/// [pi_curr(x_curr) L(x_curr -> x_prev)] / [pi_prev(x_prev) K(x_prev -> x_curr)],
/// with L the ULA kernel under theta_curr started at x_curr and K under theta_prev.
template <GibbsModel M>
double incremental_log_weight_direct(const M& model_prev, const M& model_curr, const Vector& x_prev,
                                     const Vector& x_curr, const UlaKernel& k) {
    const Vector fwd_mean = x_prev - k.gamma * model_prev.grad_x(x_prev);
    const Vector bwd_mean = x_curr - k.gamma * model_curr.grad_x(x_curr);
    const double v = -model_curr.potential(x_curr) + model_prev.potential(x_prev) +
                     ula_log_density(x_prev, bwd_mean, k) - ula_log_density(x_curr, fwd_mean, k);
    if (!std::isfinite(v)) throw NonFiniteError("incremental_log_weight_direct: weight overflow", 0);
    return v;
}

}  // namespace sosmc
