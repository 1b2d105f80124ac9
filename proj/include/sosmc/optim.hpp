#pragma once

#include "sosmc/core.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace sosmc {

enum class OptMethod { sgd, adam };

inline std::string to_string(OptMethod m) { return m == OptMethod::sgd ? "sgd" : "adam"; }
inline OptMethod opt_method_from_string(const std::string& s) {
    if (s == "sgd") return OptMethod::sgd;
    if (s == "adam") return OptMethod::adam;
    throw ConfigError("unknown optimiser: " + s);
}

struct OptimizerSpec {
    OptMethod method = OptMethod::adam;
    double learning_rate = 1e-1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::optional<double> grad_clip_norm;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("optimiser: learning rate must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("optimiser: Adam betas must lie in [0, 1)");
        if (!(epsilon > 0.0)) throw ConfigError("optimiser: epsilon must be positive");
        if (grad_clip_norm && !(*grad_clip_norm > 0.0)) throw ConfigError("optimiser: clip norm must be positive");
    }
};

/// Optimiser memory. Moments start at zero; step_count counts updates.
struct OptState {
    OptimizerSpec spec;
    Vector m;
    Vector v;
    long step_count = 0;

    OptState() = default;
    explicit OptState(OptimizerSpec s) : spec(s) { spec.validate(); }
};

/// Rescales g to have norm at most max_norm.
inline Vector clip_global_norm(const Vector& g, double max_norm) {
    const double n = g.norm();
    return n > max_norm ? Vector(g * (max_norm / n)) : g;
}

namespace detail {

inline Vector prepare_gradient(const OptState& s, const Vector& g) {
    if (!g.allFinite()) throw ConfigError("optimiser: non-finite gradient");
    return s.spec.grad_clip_norm ? clip_global_norm(g, *s.spec.grad_clip_norm) : g;
}

}  // namespace detail

/// theta - eta g.
inline Vector sgd_step(OptState& s, const Vector& theta, const Vector& g) {
    const Vector gc = detail::prepare_gradient(s, g);
    ++s.step_count;
    return theta - s.spec.learning_rate * gc;
}

/// Bias-corrected Adam.
inline Vector adam_step(OptState& s, const Vector& theta, const Vector& g) {
    const Vector gc = detail::prepare_gradient(s, g);
    if (s.m.size() != theta.size()) {
        s.m = Vector::Zero(theta.size());
        s.v = Vector::Zero(theta.size());
    }
    ++s.step_count;
    const auto& p = s.spec;
    s.m = p.beta1 * s.m + (1.0 - p.beta1) * gc;
    s.v = p.beta2 * s.v + (1.0 - p.beta2) * gc.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(s.step_count));
    const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(s.step_count));
    const Vector mhat = s.m / bc1;
    const Vector vhat = s.v / bc2;
    return theta - (p.learning_rate * mhat.array() / (vhat.array().sqrt() + p.epsilon)).matrix();
}

/// Dispatches on the configured method.
inline Vector opt_step(OptState& s, const Vector& theta, const Vector& g) {
    return s.spec.method == OptMethod::sgd ? sgd_step(s, theta, g) : adam_step(s, theta, g);
}

/// Multiplicative ESS-driven control of the kernel step size.
struct StepSizeAdapter {
    double gamma = 1e-2;
    double factor = 1.1;
    double tau_adapt = 0.95;

    void validate() const {
        if (!(gamma > 0.0)) throw ConfigError("adapter: gamma must be positive");
        if (!(factor > 1.0)) throw ConfigError("adapter: factor must exceed 1");
        if (!(tau_adapt > 0.0 && tau_adapt < 1.0)) throw ConfigError("adapter: tau_adapt must lie in (0, 1)");
    }
};

/// Grows gamma when ESS > tau N, shrinks it when ESS < tau N, keeps it on a tie.
inline StepSizeAdapter adapt_gamma(StepSizeAdapter a, double ess_value, Eigen::Index n_particles) {
    const double threshold = a.tau_adapt * static_cast<double>(n_particles);
    if (ess_value > threshold)
        a.gamma *= a.factor;
    else if (ess_value < threshold)
        a.gamma /= a.factor;
    return a;
}

}  // namespace sosmc
