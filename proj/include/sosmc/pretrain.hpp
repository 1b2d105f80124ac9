#pragma once

// Persistent contrastive divergence for 2-d MLP energies, plus the synthetic
// datasets it is trained on.

#include "sosmc/core.hpp"
#include "sosmc/kernels.hpp"
#include "sosmc/mlp.hpp"
#include "sosmc/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

namespace sosmc {

// --- datasets ----------------------------------------------------------------

enum class DatasetKind { two_moons, circles, blobs };

inline std::string to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::two_moons: return "two_moons";
        case DatasetKind::circles: return "circles";
        case DatasetKind::blobs: return "blobs";
    }
    return "unknown";
}
inline DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "two_moons" || s == "moons") return DatasetKind::two_moons;
    if (s == "circles") return DatasetKind::circles;
    if (s == "blobs") return DatasetKind::blobs;
    throw ConfigError("unknown dataset kind: " + s);
}

/// Raw generator parameters (before standardisation).
struct DatasetParams {
    double moons_noise = 0.1;
    double circles_noise = 0.05;
    double circles_factor = 0.5;
    double blob_std = 0.6;
    double blob_radius = 1.5;  ///< blob centres on a circle, first one at 90 degrees
    int blob_count = 3;
    double s_scale = 2.2;
};

struct Dataset2D {
    DatasetKind kind = DatasetKind::blobs;
    Positions samples;
    Vector raw_mean;  ///< mu_D
    Vector raw_std;   ///< sigma_D (population)
    double s_scale = 2.2;

    /// Maps a raw-coordinate point into the standardised, scaled frame.
    Vector transform(const Vector& raw) const {
        return (s_scale * (raw - raw_mean).array() / raw_std.array()).matrix();
    }
};

/// Raw blob centres for the given parameters.
inline std::vector<Vector> blob_centres_raw(const DatasetParams& p = {}) {
    std::vector<Vector> c;
    for (int i = 0; i < p.blob_count; ++i) {
        const double a = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * i / p.blob_count;
        c.emplace_back(Vector{{p.blob_radius * std::cos(a), p.blob_radius * std::sin(a)}});
    }
    return c;
}

inline Dataset2D generate_dataset(DatasetKind kind, Eigen::Index n, std::uint64_t seed, const DatasetParams& p = {}) {
    if (n < 2) throw ConfigError("generate_dataset: n must be at least 2");
    Rng rng = make_stream(seed, "dataset");
    std::normal_distribution<double> normal(0.0, 1.0);
    Positions raw(n, 2);
    switch (kind) {
        case DatasetKind::two_moons: {
            const Eigen::Index n_out = n / 2, n_in = n - n_out;
            for (Eigen::Index i = 0; i < n_out; ++i) {
                const double t = n_out > 1 ? std::numbers::pi * i / static_cast<double>(n_out - 1) : 0.0;
                raw.row(i) << std::cos(t), std::sin(t);
            }
            for (Eigen::Index i = 0; i < n_in; ++i) {
                const double t = n_in > 1 ? std::numbers::pi * i / static_cast<double>(n_in - 1) : 0.0;
                raw.row(n_out + i) << 1.0 - std::cos(t), 0.5 - std::sin(t);
            }
            for (Eigen::Index i = 0; i < n; ++i)
                for (int j = 0; j < 2; ++j) raw(i, j) += p.moons_noise * normal(rng);
            break;
        }
        case DatasetKind::circles: {
            const Eigen::Index n_out = n / 2, n_in = n - n_out;
            for (Eigen::Index i = 0; i < n_out; ++i) {
                const double t = 2.0 * std::numbers::pi * i / static_cast<double>(n_out);
                raw.row(i) << std::cos(t), std::sin(t);
            }
            for (Eigen::Index i = 0; i < n_in; ++i) {
                const double t = 2.0 * std::numbers::pi * i / static_cast<double>(n_in);
                raw.row(n_out + i) << p.circles_factor * std::cos(t), p.circles_factor * std::sin(t);
            }
            for (Eigen::Index i = 0; i < n; ++i)
                for (int j = 0; j < 2; ++j) raw(i, j) += p.circles_noise * normal(rng);
            break;
        }
        case DatasetKind::blobs: {
            const auto centres = blob_centres_raw(p);
            std::uniform_int_distribution<int> pick(0, p.blob_count - 1);
            for (Eigen::Index i = 0; i < n; ++i) {
                const Vector& c = centres[static_cast<std::size_t>(pick(rng))];
                raw.row(i) << c[0] + p.blob_std * normal(rng), c[1] + p.blob_std * normal(rng);
            }
            break;
        }
    }
    Dataset2D d;
    d.kind = kind;
    d.s_scale = p.s_scale;
    d.raw_mean = raw.colwise().mean().transpose();
    Matrix centred = raw.rowwise() - d.raw_mean.transpose();
    if (n == 2) {
        // Half-differences are exact negatives of each other; x - mean need not be.
        centred.row(0) = 0.5 * (raw.row(0) - raw.row(1));
        centred.row(1) = -centred.row(0);
    }
    d.raw_std = (centred.array().square().colwise().sum() / static_cast<double>(n)).sqrt().transpose();
    for (Eigen::Index j = 0; j < 2; ++j)
        if (!(d.raw_std[j] > 0.0)) d.raw_std[j] = 1.0;
    d.samples = (p.s_scale * (centred.array().rowwise() / d.raw_std.transpose().array())).matrix();
    return d;
}

// --- PCD ----------------------------------------------------------------------

/// Componentwise clamp of a ULA move into [lo, hi].
inline Vector clamped_ula_step(const Vector& x, const Vector& grad, double gamma, double lo, double hi,
                               const Vector& noise, double sigma_noise = 1.0) {
    return ula_step(x, grad, UlaKernel{gamma, sigma_noise}, noise).cwiseMax(lo).cwiseMin(hi);
}

inline Positions clamped_ula_step(const Positions& x, const Positions& grad, double gamma, double lo, double hi,
                                  const Positions& noise, double sigma_noise = 1.0) {
    return ula_step(x, grad, UlaKernel{gamma, sigma_noise}, noise).cwiseMax(lo).cwiseMin(hi);
}

/// Persistent negative samples kept inside the clamp box.
struct ReplayBuffer {
    Positions states;
    double clamp_min = -6.0;
    double clamp_max = 6.0;

    static ReplayBuffer uniform(Eigen::Index m, Eigen::Index d, double lo, double hi, Rng& rng) {
        std::uniform_real_distribution<double> u(lo, hi);
        ReplayBuffer b{Positions(m, d), lo, hi};
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < d; ++j) b.states(i, j) = u(rng);
        return b;
    }
    Eigen::Index capacity() const { return states.rows(); }
};

struct PcdConfig {
    Eigen::Index buffer_size = 20000;
    Eigen::Index batch_size = 512;
    double reinject = 0.05;  ///< rho
    long k_steps = 80;
    double gamma = 5e-3;
    double sigma_noise = 1.0;
    double clamp_min = -6.0;
    double clamp_max = 6.0;
    double lambda_e = 1e-3;
    double lambda_gp = 0.2;
    OptimizerSpec optimizer{OptMethod::adam, 2e-4, 0.9, 0.999, 1e-8, 10.0};
    long steps = 2000;  ///< optimisation steps; see steps_for_epochs
    std::uint64_t seed = 0;

    /// One epoch = ceil(n_data / B) steps.
    static long steps_for_epochs(long epochs, Eigen::Index n_data, Eigen::Index batch) {
        return epochs * static_cast<long>((n_data + batch - 1) / batch);
    }

    void validate() const {
        if (buffer_size < 1 || batch_size < 1) throw ConfigError("pcd: buffer and batch sizes must be positive");
        if (batch_size > buffer_size) throw ConfigError("pcd: batch larger than buffer");
        if (!(reinject >= 0.0 && reinject <= 1.0)) throw ConfigError("pcd: reinjection fraction must lie in [0, 1]");
        if (!(clamp_min < clamp_max)) throw ConfigError("pcd: clamp_min must be below clamp_max");
        if (k_steps < 0 || steps < 0) throw ConfigError("pcd: negative step count");
        if (!(gamma > 0.0)) throw ConfigError("pcd: gamma must be positive");
        optimizer.validate();
    }
};

struct PcdLoss {
    double total = 0.0;
    double contrastive = 0.0;
    double energy_reg = 0.0;
    double grad_penalty = 0.0;
};

/// Loss value and parameter gradient for fixed positive/negative batches.
inline PcdLoss pcd_loss(const MlpEnergy& model, const Positions& pos, const Positions& neg, double lambda_e,
                        double lambda_gp, Vector* grad = nullptr) {
    const double bp = static_cast<double>(pos.rows()), bn = static_cast<double>(neg.rows());
    const Vector ep = model.potential_batch(pos);
    const Vector en = model.potential_batch(neg);
    Vector norms;
    const Vector gp_grad = model.grad_penalty_gradient(pos, Vector::Constant(pos.rows(), lambda_gp / bp), &norms);
    PcdLoss l;
    l.contrastive = ep.mean() - en.mean();
    l.energy_reg = lambda_e * (ep.squaredNorm() / bp + en.squaredNorm() / bn);
    l.grad_penalty = lambda_gp * (norms.array() - 1.0).square().mean();
    l.total = l.contrastive + l.energy_reg + l.grad_penalty;
    if (grad) {
        const Matrix cp = ((1.0 + 2.0 * lambda_e * ep.array()) / bp).matrix();
        const Matrix cn = ((-1.0 + 2.0 * lambda_e * en.array()) / bn).matrix();
        *grad = model.grad_theta_weighted(pos, cp).col(0) + model.grad_theta_weighted(neg, cn).col(0) + gp_grad;
    }
    return l;
}

struct PcdResult {
    MlpEnergy model;
    ReplayBuffer buffer;
    std::vector<PcdLoss> history;
    double reinjected_fraction = 0.0;
};

inline PcdResult pcd_train(const Positions& data, MlpEnergy model, const PcdConfig& cfg) {
    cfg.validate();
    if (data.cols() != model.dim()) throw ConfigError("pcd: data dimension does not match model");
    if (data.rows() < 1) throw ConfigError("pcd: empty dataset");
    Rng buf_rng = make_stream(cfg.seed, "pcd_buffer");
    Rng batch_rng = make_stream(cfg.seed, "pcd_batch");
    Rng reinject_rng = make_stream(cfg.seed, "reinject");
    Rng prop_rng = make_stream(cfg.seed, "pcd_propagate");

    ReplayBuffer buffer = ReplayBuffer::uniform(cfg.buffer_size, model.dim(), cfg.clamp_min, cfg.clamp_max, buf_rng);
    OptState opt(cfg.optimizer);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(cfg.buffer_size));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::uniform_int_distribution<Eigen::Index> pick_data(0, data.rows() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> box(cfg.clamp_min, cfg.clamp_max);

    PcdResult res{model, buffer, {}, 0.0};
    long reinjected = 0;
    const Eigen::Index b = cfg.batch_size, d = model.dim();
    for (long step = 0; step < cfg.steps; ++step) {
        // B distinct buffer slots by partial Fisher-Yates.
        for (Eigen::Index i = 0; i < b; ++i) {
            std::uniform_int_distribution<Eigen::Index> u(i, cfg.buffer_size - 1);
            std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(u(batch_rng))]);
        }
        Positions neg(b, d);
        for (Eigen::Index i = 0; i < b; ++i) {
            if (unit(reinject_rng) < cfg.reinject) {
                for (Eigen::Index j = 0; j < d; ++j) neg(i, j) = box(reinject_rng);
                ++reinjected;
            } else {
                neg.row(i) = res.buffer.states.row(perm[static_cast<std::size_t>(i)]);
            }
        }
        Vector e;
        Positions g;
        for (long s = 0; s < cfg.k_steps; ++s) {
            res.model.energy_and_grad_x(neg, e, g);
            neg = clamped_ula_step(neg, g, cfg.gamma, cfg.clamp_min, cfg.clamp_max, standard_normal(b, d, prop_rng),
                                   cfg.sigma_noise);
        }
        for (Eigen::Index i = 0; i < b; ++i) res.buffer.states.row(perm[static_cast<std::size_t>(i)]) = neg.row(i);

        Positions pos(b, d);
        for (Eigen::Index i = 0; i < b; ++i) pos.row(i) = data.row(pick_data(batch_rng));

        Vector grad;
        const PcdLoss loss = pcd_loss(res.model, pos, neg, cfg.lambda_e, cfg.lambda_gp, &grad);
        if (!std::isfinite(loss.total) || !grad.allFinite())
            throw NonFiniteError("pcd: non-finite loss at step " + std::to_string(step), static_cast<std::size_t>(step));
        res.history.push_back(loss);
        res.model.set_params(opt_step(opt, res.model.params(), grad));
    }
    res.reinjected_fraction =
        cfg.steps > 0 ? static_cast<double>(reinjected) / static_cast<double>(cfg.steps * b) : 0.0;
    return res;
}

}  // namespace sosmc
