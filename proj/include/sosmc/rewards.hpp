#pragma once

#include "sosmc/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace sosmc {

enum class RewardKind {
    hard_gated,
    smooth_gated,
    multi_modal,
    half_plane_left,
    half_plane_right,
    half_plane_lower,
    half_plane_upper,
    constant,
};

inline std::string to_string(RewardKind k) {
    switch (k) {
        case RewardKind::hard_gated: return "hard_gated";
        case RewardKind::smooth_gated: return "smooth_gated";
        case RewardKind::multi_modal: return "multi_modal";
        case RewardKind::half_plane_left: return "half_plane_left";
        case RewardKind::half_plane_right: return "half_plane_right";
        case RewardKind::half_plane_lower: return "half_plane_lower";
        case RewardKind::half_plane_upper: return "half_plane_upper";
        case RewardKind::constant: return "constant";
    }
    return "unknown";
}

inline RewardKind reward_kind_from_string(const std::string& s) {
    for (auto k : {RewardKind::hard_gated, RewardKind::smooth_gated, RewardKind::multi_modal,
                   RewardKind::half_plane_left, RewardKind::half_plane_right, RewardKind::half_plane_lower,
                   RewardKind::half_plane_upper, RewardKind::constant})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown reward kind: " + s);
}

/// Reward functions on R^d. Gated and half-plane rewards read the first one
/// or two coordinates; in one dimension "lower"/"upper" fall back to x_1.
struct Reward {
    RewardKind kind = RewardKind::hard_gated;
    Vector centre = Vector::Zero(0);          ///< c for gated rewards; empty means (1.5, 0, ...)
    double temperature = 1.0;                 ///< tau
    double smoothing = 0.1;                   ///< lambda
    std::vector<Vector> centres;              ///< c_j for the multi-modal reward
    double value = 0.0;                       ///< for the constant reward

    static Reward half_plane(RewardKind k) { return Reward{.kind = k}; }
    static Reward constant_value(double c) { return Reward{.kind = RewardKind::constant, .value = c}; }

    double operator()(const Vector& x) const { return evaluate(x); }

    double evaluate(const Vector& x) const {
        switch (kind) {
            case RewardKind::hard_gated: return x[0] >= 0.0 ? bump(x, gate_centre(x.size())) : 0.0;
            case RewardKind::smooth_gated: {
                const double s = 1.0 / (1.0 + std::exp(-x[0] / smoothing));
                return s * bump(x, gate_centre(x.size()));
            }
            case RewardKind::multi_modal: {
                double best = 0.0;
                for (const auto& c : multi_centres(x.size())) best = std::max(best, bump(x, c));
                return best;
            }
            case RewardKind::half_plane_left: return x[0] < 0.0 ? 1.0 : 0.0;
            case RewardKind::half_plane_right: return x[0] > 0.0 ? 1.0 : 0.0;
            case RewardKind::half_plane_lower: return x[second(x)] < 0.0 ? 1.0 : 0.0;
            case RewardKind::half_plane_upper: return x[second(x)] > 0.0 ? 1.0 : 0.0;
            case RewardKind::constant: return value;
        }
        return 0.0;
    }

    /// Row-wise evaluation; throws with the row index on non-finite output.
    Vector evaluate_batch(const Positions& xs) const {
        Vector r(xs.rows());
        for (Eigen::Index i = 0; i < xs.rows(); ++i) {
            r[i] = evaluate(xs.row(i).transpose());
            if (!std::isfinite(r[i])) throw EstimatorError("non-finite reward", static_cast<std::size_t>(i));
        }
        return r;
    }

    Vector gate_centre(Eigen::Index d) const {
        if (centre.size() == d) return centre;
        Vector c = Vector::Zero(d);
        c[0] = 1.5;
        return c;
    }

    std::vector<Vector> multi_centres(Eigen::Index d) const {
        if (!centres.empty()) return centres;
        Vector a = Vector::Zero(d), b = Vector::Zero(d);
        a[0] = b[0] = 1.5;
        if (d > 1) {
            a[1] = 1.5;
            b[1] = -1.5;
        }
        return {a, b};
    }

private:
    double bump(const Vector& x, const Vector& c) const { return std::exp(-(x - c).squaredNorm() / temperature); }
    static Eigen::Index second(const Vector& x) { return x.size() > 1 ? 1 : 0; }
};

}  // namespace sosmc
