#pragma once

// Gibbs models pi_theta(x) = exp(-U_theta(x)) / Z_theta.
//
// Every model exposes single-sample and batched evaluation. Batched inputs
// are N x d position matrices (one particle per row). Parameter gradients
// come in two flavours: grad_theta_batch returns one row per particle, and
// grad_theta_weighted returns sum_i C(i, j) grad_theta U(x_i) for each column
// j of C, which is what the estimators need and is much cheaper for large
// parameter vectors.

#include "sosmc/core.hpp"

#include <cmath>
#include <concepts>
#include <numbers>

namespace sosmc {

template <class M>
concept GibbsModel = std::copy_constructible<M> && requires(const M& m, M& mut, const Vector& x, const Positions& xs,
                                                            const Matrix& c, Vector& e, Positions& g) {
    { m.dim() } -> std::convertible_to<Eigen::Index>;
    { m.num_params() } -> std::convertible_to<Eigen::Index>;
    { m.params() } -> std::convertible_to<Vector>;
    mut.set_params(x);
    { m.potential(x) } -> std::convertible_to<double>;
    { m.grad_x(x) } -> std::convertible_to<Vector>;
    { m.grad_theta(x) } -> std::convertible_to<Vector>;
    { m.potential_batch(xs) } -> std::convertible_to<Vector>;
    { m.grad_x_batch(xs) } -> std::convertible_to<Positions>;
    m.energy_and_grad_x(xs, e, g);
    { m.grad_theta_batch(xs) } -> std::convertible_to<Matrix>;
    { m.grad_theta_weighted(xs, c) } -> std::convertible_to<Matrix>;
};

/// Batched defaults built from the single-sample methods of Derived.
template <class Derived>
class GibbsModelBase {
public:
    Vector potential_batch(const Positions& xs) const {
        Vector out(xs.rows());
        for (Eigen::Index i = 0; i < xs.rows(); ++i) {
            out[i] = self().potential(xs.row(i).transpose());
            if (!std::isfinite(out[i])) throw NonFiniteError("non-finite potential", static_cast<std::size_t>(i));
        }
        return out;
    }

    Positions grad_x_batch(const Positions& xs) const {
        Positions out(xs.rows(), xs.cols());
        for (Eigen::Index i = 0; i < xs.rows(); ++i) {
            out.row(i) = self().grad_x(xs.row(i).transpose()).transpose();
            if (!out.row(i).allFinite()) throw NonFiniteError("non-finite spatial gradient", static_cast<std::size_t>(i));
        }
        return out;
    }

    void energy_and_grad_x(const Positions& xs, Vector& e, Positions& g) const {
        e = potential_batch(xs);
        g = grad_x_batch(xs);
    }

    Matrix grad_theta_batch(const Positions& xs) const {
        Matrix out(xs.rows(), self().num_params());
        for (Eigen::Index i = 0; i < xs.rows(); ++i) {
            out.row(i) = self().grad_theta(xs.row(i).transpose()).transpose();
            if (!out.row(i).allFinite()) throw NonFiniteError("non-finite parameter gradient", static_cast<std::size_t>(i));
        }
        return out;
    }

    Matrix grad_theta_weighted(const Positions& xs, const Matrix& coeffs) const {
        if (coeffs.rows() != xs.rows()) throw ConfigError("grad_theta_weighted: coefficient rows != particles");
        return self().grad_theta_batch(xs).transpose() * coeffs;
    }

private:
    const Derived& self() const { return static_cast<const Derived&>(*this); }
};

/// pi_theta = N(theta, Sigma); U = 0.5 (x - theta)' Sigma^-1 (x - theta).
class GaussianLocation : public GibbsModelBase<GaussianLocation> {
public:
    GaussianLocation(Vector theta, Matrix sigma) : theta_(std::move(theta)), sigma_(std::move(sigma)) {
        if (sigma_.rows() != theta_.size() || sigma_.cols() != theta_.size())
            throw ConfigError("GaussianLocation: covariance shape mismatch");
        Eigen::LLT<Matrix> llt(sigma_);
        if (llt.info() != Eigen::Success || !sigma_.isApprox(sigma_.transpose()))
            throw ConfigError("GaussianLocation: covariance must be symmetric positive definite");
        chol_ = llt.matrixL();
        precision_ = llt.solve(Matrix::Identity(dim(), dim()));
        log_det_ = 2.0 * chol_.diagonal().array().log().sum();
    }

    /// Isotropic unit covariance.
    explicit GaussianLocation(Vector theta)
        : GaussianLocation(theta, Matrix::Identity(theta.size(), theta.size())) {}

    Eigen::Index dim() const { return theta_.size(); }
    Eigen::Index num_params() const { return theta_.size(); }
    const Vector& params() const { return theta_; }
    void set_params(const Vector& theta) {
        if (theta.size() != theta_.size()) throw ConfigError("GaussianLocation: parameter size mismatch");
        theta_ = theta;
    }

    const Matrix& covariance() const { return sigma_; }
    const Matrix& precision() const { return precision_; }

    double potential(const Vector& x) const {
        const Vector r = x - theta_;
        return 0.5 * r.dot(precision_ * r);
    }
    Vector grad_x(const Vector& x) const { return precision_ * (x - theta_); }
    Vector grad_theta(const Vector& x) const { return precision_ * (theta_ - x); }

    Vector potential_batch(const Positions& xs) const {
        const Matrix r = xs.rowwise() - theta_.transpose();
        return 0.5 * ((r * precision_).array() * r.array()).rowwise().sum().matrix();
    }
    Positions grad_x_batch(const Positions& xs) const {
        return (xs.rowwise() - theta_.transpose()) * precision_;
    }
    void energy_and_grad_x(const Positions& xs, Vector& e, Positions& g) const {
        const Matrix r = xs.rowwise() - theta_.transpose();
        g = r * precision_;
        e = 0.5 * (g.array() * r.array()).rowwise().sum().matrix();
    }
    Matrix grad_theta_batch(const Positions& xs) const { return -grad_x_batch(xs); }

    /// log Z_theta = (d/2) log(2 pi) + 0.5 log |Sigma|.
    double log_normaliser() const {
        return 0.5 * static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi) + 0.5 * log_det_;
    }

    /// Exact draws theta + L z.
    Positions sample(Eigen::Index n, Rng& rng) const {
        Positions z = standard_normal(n, dim(), rng);
        Positions out = z * chol_.transpose();
        out.rowwise() += theta_.transpose();
        return out;
    }

private:
    Vector theta_;
    Matrix sigma_;
    Matrix chol_;
    Matrix precision_;
    double log_det_ = 0.0;
};

/// V(x, theta) = -log sum_i softmax(theta)_i exp(-||x - mu_i||^2 / sigma^2).
/// Each component has normaliser (pi sigma^2)^(d/2) regardless of theta, so
/// Z does not depend on theta.
class MixturePotential : public GibbsModelBase<MixturePotential> {
public:
    MixturePotential(Vector logits, Matrix means, double sigma_sq)
        : theta_(std::move(logits)), means_(std::move(means)), sigma_sq_(sigma_sq) {
        if (means_.rows() != theta_.size()) throw ConfigError("MixturePotential: one mean per logit required");
        if (!(sigma_sq_ > 0.0)) throw ConfigError("MixturePotential: sigma_sq must be positive");
    }

    Eigen::Index dim() const { return means_.cols(); }
    Eigen::Index num_params() const { return theta_.size(); }
    Eigen::Index num_components() const { return theta_.size(); }
    const Vector& params() const { return theta_; }
    void set_params(const Vector& theta) {
        if (theta.size() != theta_.size()) throw ConfigError("MixturePotential: parameter size mismatch");
        theta_ = theta;
    }
    const Matrix& means() const { return means_; }
    double sigma_sq() const { return sigma_sq_; }

    /// softmax(theta).
    Vector mixture_weights() const {
        const Vector e = (theta_.array() - theta_.maxCoeff()).exp().matrix();
        return e / e.sum();
    }

    double potential(const Vector& x) const {
        const Vector l = log_terms(x);
        const double m = l.maxCoeff();
        return -(m + std::log((l.array() - m).exp().sum()));
    }

    /// Posterior component responsibilities at x.
    Vector responsibilities(const Vector& x) const {
        const Vector l = log_terms(x);
        const Vector e = (l.array() - l.maxCoeff()).exp().matrix();
        return e / e.sum();
    }

    Vector grad_x(const Vector& x) const {
        const Vector r = responsibilities(x);
        Vector g = Vector::Zero(dim());
        for (Eigen::Index i = 0; i < num_components(); ++i)
            g += r[i] * (2.0 / sigma_sq_) * (x - means_.row(i).transpose());
        return g;
    }

    Vector grad_theta(const Vector& x) const { return mixture_weights() - responsibilities(x); }

    /// Exact draws: pick a component by softmax(theta), then mu_i + (sigma / sqrt 2) z.
    Positions sample(Eigen::Index n, Rng& rng) const {
        const Vector w = mixture_weights();
        std::discrete_distribution<Eigen::Index> cat(w.data(), w.data() + w.size());
        std::normal_distribution<double> normal(0.0, 1.0);
        const double sd = std::sqrt(sigma_sq_ / 2.0);
        Positions out(n, dim());
        for (Eigen::Index r = 0; r < n; ++r) {
            const Eigen::Index c = cat(rng);
            for (Eigen::Index j = 0; j < dim(); ++j) out(r, j) = means_(c, j) + sd * normal(rng);
        }
        return out;
    }

private:
    Vector log_terms(const Vector& x) const {
        const Vector logw = mixture_weights().array().log().matrix();
        Vector l(num_components());
        for (Eigen::Index i = 0; i < num_components(); ++i)
            l[i] = logw[i] - (x - means_.row(i).transpose()).squaredNorm() / sigma_sq_;
        return l;
    }

    Vector theta_;
    Matrix means_;
    double sigma_sq_;
};

/// Central finite-difference gradient of f at x.
template <class F>
Vector finite_difference(F&& f, const Vector& x, double h = 1e-5) {
    Vector g(x.size());
    Vector xp = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double orig = xp[j];
        xp[j] = orig + h;
        const double fp = f(xp);
        xp[j] = orig - h;
        const double fm = f(xp);
        xp[j] = orig;
        g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace sosmc
