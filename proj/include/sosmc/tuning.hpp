#pragma once

// Outer optimisation loops: SOSMC (weighted particles moved by one SMC step
// per iteration), ImpDiff (unweighted persistent particles) and SOUL (one
// persistent chain, time-averaged).
//
// Loop order per iteration k: estimate g from the current weighted
// particles, update theta, then move the particles with the ULA kernel of the
// previous parameter and reweight against the new one.

#include "sosmc/core.hpp"
#include "sosmc/estimators.hpp"
#include "sosmc/kernels.hpp"
#include "sosmc/models.hpp"
#include "sosmc/optim.hpp"
#include "sosmc/particle.hpp"
#include "sosmc/rewards.hpp"

#include <chrono>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace sosmc {

enum class Objective { generic, forward_kl, reverse_kl };
enum class Method { sosmc, impdiff, soul };

inline std::string to_string(Objective o) {
    switch (o) {
        case Objective::generic: return "generic";
        case Objective::forward_kl: return "forward_kl";
        case Objective::reverse_kl: return "reverse_kl";
    }
    return "unknown";
}
inline Objective objective_from_string(const std::string& s) {
    if (s == "generic") return Objective::generic;
    if (s == "forward_kl") return Objective::forward_kl;
    if (s == "reverse_kl") return Objective::reverse_kl;
    throw ConfigError("unknown objective: " + s);
}
inline std::string to_string(Method m) {
    switch (m) {
        case Method::sosmc: return "sosmc";
        case Method::impdiff: return "impdiff";
        case Method::soul: return "soul";
    }
    return "unknown";
}
inline Method method_from_string(const std::string& s) {
    if (s == "sosmc") return Method::sosmc;
    if (s == "impdiff") return Method::impdiff;
    if (s == "soul") return Method::soul;
    throw ConfigError("unknown method: " + s);
}

struct TuningConfig {
    Objective objective = Objective::reverse_kl;
    double beta_kl = 0.1;
    Eigen::Index n_particles = 1000;  ///< particles (SOSMC, ImpDiff) or chain length (SOUL)
    long k_outer = 100;
    long k_inner = 1;
    UlaKernel kernel{};
    OptimizerSpec optimizer{};
    double tau_resample = 0.9;
    bool adapt_step = false;
    double tau_adapt = 0.95;
    double adapt_factor = 1.1;
    std::uint64_t seed = 0;
    Eigen::Index reference_batch = 5000;
    long eval_every = 0;  ///< 0 disables checkpoints
    bool record_wall_clock = false;

    void validate(Method m) const {
        kernel.validate();
        optimizer.validate();
        if (k_outer < 0) throw ConfigError("k_outer must be non-negative");
        if (k_inner < 1) throw ConfigError("k_inner must be at least 1");
        if (!(beta_kl >= 0.0)) throw ConfigError("beta_kl must be non-negative");
        if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
        if (m == Method::soul) {
            if (n_particles < 2 || n_particles % 2 != 0)
                throw ConfigError("soul: chain length N must be even and at least 2");
        } else if (n_particles < 1) {
            throw ConfigError("n_particles must be at least 1");
        }
        if (!(tau_resample >= 0.0 && tau_resample < 1.0)) throw ConfigError("tau_resample must lie in [0, 1)");
        if (adapt_step) StepSizeAdapter{kernel.gamma, adapt_factor, tau_adapt}.validate();
        if (objective == Objective::forward_kl && reference_batch < 1)
            throw ConfigError("forward_kl needs a non-empty reference batch");
    }
};

struct TraceRow {
    long k = 0;
    double particle_reward = std::numeric_limits<double>::quiet_NaN();
    double ess = 0.0;
    double gamma = 0.0;
    double grad_norm = 0.0;
    bool resampled = false;
    std::optional<double> wall_clock_s;
    std::optional<double> fresh_reward;
    std::optional<double> kl_quadrature;
};

struct TuningTrace {
    std::vector<TraceRow> rows;
};

/// Run failed part-way; the trace up to the failure is kept for diagnosis.
class TuningAborted : public Error {
public:
    TuningAborted(const std::string& what, TuningTrace partial) : Error(what), trace(std::move(partial)) {}
    TuningTrace trace;
};

/// Everything a loop needs besides the numeric configuration.
template <GibbsModel M>
struct TuningProblem {
    M model;                      ///< trainable model at theta_0
    std::optional<M> frozen;      ///< reverse-KL reference; defaults to a copy of `model`
    std::optional<Reward> reward;
    /// Draws forward-KL reference batches.
    std::function<Positions(Eigen::Index, Rng&)> reference_sampler;
    /// Generic objective: H_theta(x) for the model at the current theta.
    std::function<Vector(const M&, const Vector&)> h_theta;
    /// Initial particles X_0 (SOUL uses the first row as chain start).
    std::function<Positions(Eigen::Index, Rng&)> initial_sampler;
    /// Called on checkpoint rows with the model at theta_{k+1}.
    std::function<void(long, const M&, TraceRow&)> evaluator;
    /// Called after every gradient estimate with theta_k.
    std::function<void(long, const Vector&, const GradientEstimate&)> observer;
};

template <GibbsModel M>
struct TuningResult {
    Vector theta;
    TuningTrace trace;
    Positions particles;
    Vector log_weights;
};

namespace detail {

template <GibbsModel M>
GradientEstimate estimate(const TuningConfig& cfg, const TuningProblem<M>& p, const M& model, const M& frozen,
                          const Positions& x, const WeightVector& w, Rng& reference_rng) {
    switch (cfg.objective) {
        case Objective::generic: {
            if (!p.h_theta) throw ConfigError("generic objective needs h_theta");
            GradientEstimate est = gradient_generic(x, w, [&](const Vector& xi) { return p.h_theta(model, xi); });
            if (p.reward) est.particle_reward = w.values.dot(p.reward->evaluate_batch(x));
            return est;
        }
        case Objective::forward_kl: {
            if (!p.reference_sampler) throw ConfigError("forward_kl objective needs a reference sampler");
            if (!p.reward) throw ConfigError("forward_kl objective needs a reward");
            const Positions ref = p.reference_sampler(cfg.reference_batch, reference_rng);
            return gradient_forward_kl(x, w, model, *p.reward, cfg.beta_kl, ref);
        }
        case Objective::reverse_kl: {
            if (!p.reward) throw ConfigError("reverse_kl objective needs a reward");
            return gradient_reverse_kl(x, w, model, frozen, *p.reward, cfg.beta_kl);
        }
    }
    throw ConfigError("unknown objective");
}

/// Descent direction handed to the optimiser: reward objectives are maximised.
inline Vector descent_direction(Objective o, const Vector& g) { return o == Objective::generic ? g : Vector(-g); }

class WallClock {
public:
    explicit WallClock(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
    std::optional<double> elapsed() const {
        if (!enabled_) return std::nullopt;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    bool enabled_;
    std::chrono::steady_clock::time_point start_;
};

template <GibbsModel M>
void checkpoint(const TuningConfig& cfg, const TuningProblem<M>& p, long k, const M& model, TraceRow& row) {
    if (cfg.eval_every > 0 && p.evaluator && (k + 1) % cfg.eval_every == 0) p.evaluator(k, model, row);
}

/// Shared body of SOSMC (weighted) and ImpDiff (unweighted).
template <GibbsModel M>
TuningResult<M> particle_run(const TuningConfig& cfg, TuningProblem<M> p, bool weighted) {
    cfg.validate(weighted ? Method::sosmc : Method::impdiff);
    if (!p.initial_sampler) throw ConfigError("tuning needs an initial sampler");
    const M frozen = p.frozen ? *p.frozen : p.model;
    M model = p.model;

    Rng init_rng = make_stream(cfg.seed, "init");
    Rng prop_rng = make_stream(cfg.seed, "propagate");
    Rng res_rng = make_stream(cfg.seed, "resample");
    Rng ref_rng = make_stream(cfg.seed, "reference");

    const Eigen::Index n = cfg.n_particles;
    Positions x = p.initial_sampler(n, init_rng);
    if (x.rows() != n || x.cols() != model.dim()) throw ConfigError("initial sampler returned wrong shape");
    Vector lw = Vector::Zero(n);
    Vector e;
    Positions g;
    model.energy_and_grad_x(x, e, g);

    OptState opt(cfg.optimizer);
    UlaKernel kernel = cfg.kernel;
    StepSizeAdapter adapter{kernel.gamma, cfg.adapt_factor, cfg.tau_adapt};
    WallClock clock(cfg.record_wall_clock);
    TuningTrace trace;
    trace.rows.reserve(static_cast<std::size_t>(cfg.k_outer));

    try {
        for (long k = 0; k < cfg.k_outer; ++k) {
            const WeightVector w = weighted ? normalize_weights(lw) : uniform_weights(n);
            const GradientEstimate est = estimate(cfg, p, model, frozen, x, w, ref_rng);
            if (p.observer) p.observer(k, model.params(), est);

            const M model_prev = model;
            model.set_params(opt_step(opt, model.params(), descent_direction(cfg.objective, est.g)));

            TraceRow row;
            row.k = k;
            row.particle_reward = est.particle_reward;
            row.grad_norm = est.g.norm();
            row.gamma = kernel.gamma;
            row.ess = static_cast<double>(n);
            for (long j = 0; j < cfg.k_inner; ++j) {
                // e, g hold U and grad U at x under the kernel's parameter:
                // theta_{k-1} on the first inner step, theta_k afterwards.
                const Positions noise = standard_normal(n, model.dim(), prop_rng);
                Positions xn = ula_step(x, g, kernel, noise);
                Vector en;
                Positions gn;
                model.energy_and_grad_x(xn, en, gn);
                if (weighted) {
                    lw += alpha_batch(e, g, x, xn, kernel.gamma, kernel.sigma_noise) -
                          alpha_batch(en, gn, xn, x, kernel.gamma, kernel.sigma_noise);
                    const double m = lw.maxCoeff();
                    if (!std::isfinite(m)) throw DegenerateWeightsError("all log-weights are degenerate");
                    lw.array() -= m;
                }
                x = std::move(xn);
                e = std::move(en);
                g = std::move(gn);
                if (weighted) {
                    const double ess_now = ess(normalize_weights(lw));
                    row.ess = ess_now;
                    if (ess_now < cfg.tau_resample * static_cast<double>(n)) {
                        const auto anc = sample_ancestors(normalize_weights(lw), n, res_rng);
                        Positions xr(n, x.cols()), gr(n, g.cols());
                        Vector er(n);
                        for (Eigen::Index i = 0; i < n; ++i) {
                            const Eigen::Index a = anc[static_cast<std::size_t>(i)];
                            xr.row(i) = x.row(a);
                            gr.row(i) = g.row(a);
                            er[i] = e[a];
                        }
                        x = std::move(xr);
                        g = std::move(gr);
                        e = std::move(er);
                        lw.setZero();
                        row.resampled = true;
                    }
                    if (cfg.adapt_step) {
                        adapter.gamma = kernel.gamma;
                        kernel.gamma = adapt_gamma(adapter, ess_now, n).gamma;
                    }
                }
            }
            checkpoint(cfg, p, k, model, row);
            row.wall_clock_s = clock.elapsed();
            trace.rows.push_back(row);
        }
    } catch (const Error& err) {
        throw TuningAborted(std::string(weighted ? "sosmc" : "impdiff") + " aborted: " + err.what(), trace);
    }
    return {model.params(), std::move(trace), std::move(x), std::move(lw)};
}

}  // namespace detail

template <GibbsModel M>
TuningResult<M> sosmc_run(const TuningConfig& cfg, TuningProblem<M> problem) {
    return detail::particle_run(cfg, std::move(problem), true);
}

template <GibbsModel M>
TuningResult<M> impdiff_run(const TuningConfig& cfg, TuningProblem<M> problem) {
    return detail::particle_run(cfg, std::move(problem), false);
}

/// One persistent ULA chain; each iteration runs N steps under theta_k and
/// averages over the last N/2 states.
template <GibbsModel M>
TuningResult<M> soul_run(const TuningConfig& cfg, TuningProblem<M> p) {
    cfg.validate(Method::soul);
    if (!p.initial_sampler) throw ConfigError("tuning needs an initial sampler");
    const M frozen = p.frozen ? *p.frozen : p.model;
    M model = p.model;

    Rng init_rng = make_stream(cfg.seed, "init");
    Rng prop_rng = make_stream(cfg.seed, "propagate");
    Rng ref_rng = make_stream(cfg.seed, "reference");

    const Eigen::Index t = cfg.n_particles;
    const Eigen::Index burn = t / 2;
    const Positions start = p.initial_sampler(1, init_rng);
    if (start.rows() < 1 || start.cols() != model.dim()) throw ConfigError("initial sampler returned wrong shape");
    Vector state = start.row(0).transpose();

    OptState opt(cfg.optimizer);
    const UlaKernel kernel = cfg.kernel;
    detail::WallClock clock(cfg.record_wall_clock);
    TuningTrace trace;
    Positions chain(t, model.dim());

    try {
        for (long k = 0; k < cfg.k_outer; ++k) {
            for (Eigen::Index s = 0; s < t; ++s) {
                Vector noise(model.dim());
                std::normal_distribution<double> normal(0.0, 1.0);
                for (Eigen::Index j = 0; j < noise.size(); ++j) noise[j] = normal(prop_rng);
                const Vector grad = model.grad_x(state);
                if (!grad.allFinite()) throw DivergenceError("soul: non-finite gradient", static_cast<std::size_t>(s));
                state = ula_step(state, grad, kernel, noise);
                chain.row(s) = state.transpose();
            }
            const Positions tail = chain.bottomRows(t - burn);
            const GradientEstimate est =
                detail::estimate(cfg, p, model, frozen, tail, uniform_weights(tail.rows()), ref_rng);
            if (p.observer) p.observer(k, model.params(), est);
            model.set_params(opt_step(opt, model.params(), detail::descent_direction(cfg.objective, est.g)));

            TraceRow row;
            row.k = k;
            row.particle_reward = est.particle_reward;
            row.ess = static_cast<double>(tail.rows());
            row.gamma = kernel.gamma;
            row.grad_norm = est.g.norm();
            detail::checkpoint(cfg, p, k, model, row);
            row.wall_clock_s = clock.elapsed();
            trace.rows.push_back(row);
        }
    } catch (const Error& err) {
        throw TuningAborted(std::string("soul aborted: ") + err.what(), trace);
    }
    return {model.params(), std::move(trace), Positions(state.transpose()), Vector::Zero(1)};
}

template <GibbsModel M>
TuningResult<M> run_method(Method m, const TuningConfig& cfg, TuningProblem<M> problem) {
    switch (m) {
        case Method::sosmc: return sosmc_run(cfg, std::move(problem));
        case Method::impdiff: return impdiff_run(cfg, std::move(problem));
        case Method::soul: return soul_run(cfg, std::move(problem));
    }
    throw ConfigError("unknown method");
}

}  // namespace sosmc
