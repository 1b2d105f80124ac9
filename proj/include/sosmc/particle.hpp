#pragma once

#include "sosmc/core.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace sosmc {

/// Normalised importance weights. Non-negative, sums to one.
struct WeightVector {
    Vector values;

    Eigen::Index size() const { return values.size(); }
    double operator[](Eigen::Index i) const { return values[i]; }
};

/// N particles in d dimensions with unnormalised log-weights.
struct ParticleSystem {
    Positions positions;
    Vector log_weights;
    std::size_t step_index = 0;

    ParticleSystem() = default;
    explicit ParticleSystem(Positions x)
        : positions(std::move(x)), log_weights(Vector::Zero(positions.rows())) {}
    ParticleSystem(Positions x, Vector lw, std::size_t k = 0)
        : positions(std::move(x)), log_weights(std::move(lw)), step_index(k) {
        if (positions.rows() != log_weights.size())
            throw ConfigError("ParticleSystem: positions/log_weights size mismatch");
    }

    Eigen::Index size() const { return positions.rows(); }
    Eigen::Index dim() const { return positions.cols(); }

    /// Shifts log-weights so that the largest equals zero.
    void recenter();
};

/// Softmax of log-weights, computed after subtracting the maximum.
inline WeightVector normalize_weights(const Vector& log_weights) {
    if (log_weights.size() == 0) throw ConfigError("normalize_weights: empty input");
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < log_weights.size(); ++i) {
        const double v = log_weights[i];
        if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
            throw DegenerateWeightsError("normalize_weights: non-finite log-weight at index " + std::to_string(i));
        m = std::max(m, v);
    }
    if (!std::isfinite(m)) throw DegenerateWeightsError("normalize_weights: all log-weights are -inf");
    Vector w = (log_weights.array() - m).exp().matrix();
    w /= w.sum();
    return {std::move(w)};
}

inline void ParticleSystem::recenter() {
    const double m = log_weights.maxCoeff();
    if (!std::isfinite(m)) throw DegenerateWeightsError("recenter: all log-weights are -inf");
    log_weights.array() -= m;
}

inline double ess(const WeightVector& w) { return 1.0 / w.values.squaredNorm(); }

inline double ess(const ParticleSystem& s) { return ess(normalize_weights(s.log_weights)); }

/// Draws N ancestor indices iid from Categorical(w).
inline std::vector<Eigen::Index> sample_ancestors(const WeightVector& w, Eigen::Index n, Rng& rng) {
    std::discrete_distribution<Eigen::Index> cat(w.values.data(), w.values.data() + w.values.size());
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (auto& a : idx) a = cat(rng);
    return idx;
}

/// Multinomial resampling. Offspring carry uniform (zero) log-weights.
inline ParticleSystem resample(const ParticleSystem& s, Rng& rng) {
    const WeightVector w = normalize_weights(s.log_weights);
    const auto anc = sample_ancestors(w, s.size(), rng);
    Positions out(s.size(), s.dim());
    for (Eigen::Index i = 0; i < s.size(); ++i) out.row(i) = s.positions.row(anc[static_cast<std::size_t>(i)]);
    return ParticleSystem(std::move(out), Vector::Zero(s.size()), s.step_index);
}

/// Σ w_i φ(X_i). φ maps a particle (row vector as Vector) to a Vector.
template <class Phi>
Vector weighted_mean(const Positions& x, const WeightVector& w, Phi&& phi) {
    if (x.rows() != w.size()) throw ConfigError("weighted_mean: size mismatch");
    Vector acc;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Vector xi = x.row(i).transpose();
        const Vector v = Vector(phi(xi));
        if (!v.allFinite()) throw EstimatorError("weighted_mean: non-finite test function", static_cast<std::size_t>(i));
        if (i == 0) acc = Vector::Zero(v.size());
        acc.noalias() += w[i] * v;
    }
    return acc;
}

template <class Phi>
Vector weighted_mean(const ParticleSystem& s, Phi&& phi) {
    return weighted_mean(s.positions, normalize_weights(s.log_weights), std::forward<Phi>(phi));
}

/// Weighted mean of the particle positions themselves.
inline Vector weighted_mean(const ParticleSystem& s) {
    const WeightVector w = normalize_weights(s.log_weights);
    return s.positions.transpose() * w.values;
}

}  // namespace sosmc
