#pragma once

// Fully connected energy network x -> SiLU hidden layers -> linear scalar.
// Gradients are hand-written reverse mode over batches stored column-wise
// (one sample per column), including the second-order pass needed for
// gradient penalties on the input gradient.

#include "sosmc/core.hpp"
#include "sosmc/models.hpp"

#include <cmath>
#include <vector>

namespace sosmc {

struct MlpArchitecture {
    Eigen::Index input_dim = 2;
    Eigen::Index hidden_width = 32;
    Eigen::Index hidden_layers = 4;

    /// Parameter count: per hidden layer W (out x in) + b, then the scalar head.
    Eigen::Index num_params() const {
        const Eigen::Index h = hidden_width;
        return h * input_dim + h + (hidden_layers - 1) * (h * h + h) + h + 1;
    }
    bool operator==(const MlpArchitecture&) const = default;
};

namespace detail {

inline Matrix sigmoid(const Matrix& z) {
    return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

// Products below accumulate over the inner index in a fixed order with
// rank-one (elementwise) updates, so a batch gives bit-identical results to
// single-sample calls (a blocked GEMM would not).

/// W * A
inline Matrix mul_cols(const Matrix& w, const Matrix& a) {
    Matrix out = Matrix::Zero(w.rows(), a.cols());
    for (Eigen::Index k = 0; k < w.cols(); ++k) out.noalias() += w.col(k) * a.row(k);
    return out;
}

/// W' * A
inline Matrix mul_transposed_cols(const Matrix& w, const Matrix& a) { return mul_cols(w.transpose(), a); }

}  // namespace detail

class MlpEnergy {
public:
    /// Per-layer forward quantities for one batch, samples in columns.
    struct Cache {
        std::vector<Matrix> z;    // pre-activations, one per layer (head included)
        std::vector<Matrix> a;    // a[0] = input, a[l] = silu(z[l-1]) for hidden layers
        std::vector<Matrix> sig;  // sigmoid(z) for hidden layers
        std::vector<Matrix> delta;  // dE/dz per hidden layer (filled by backward)
        Matrix grad_x;              // dE/dx, d x N
    };

    explicit MlpEnergy(MlpArchitecture arch = {}) : arch_(arch) {
        if (arch_.input_dim < 1 || arch_.hidden_width < 1 || arch_.hidden_layers < 1)
            throw ConfigError("MlpEnergy: dimensions must be positive");
        Eigen::Index in = arch_.input_dim;
        for (Eigen::Index l = 0; l < arch_.hidden_layers; ++l) {
            w_.emplace_back(Matrix::Zero(arch_.hidden_width, in));
            b_.emplace_back(Vector::Zero(arch_.hidden_width));
            in = arch_.hidden_width;
        }
        w_.emplace_back(Matrix::Zero(1, in));
        b_.emplace_back(Vector::Zero(1));
    }

    /// Weights ~ N(0, init_std^2), biases zero.
    static MlpEnergy initialised(MlpArchitecture arch, Rng& rng, double init_std = 0.02) {
        MlpEnergy m(arch);
        std::normal_distribution<double> normal(0.0, init_std);
        for (auto& w : m.w_)
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
        return m;
    }

    const MlpArchitecture& architecture() const { return arch_; }
    Eigen::Index dim() const { return arch_.input_dim; }
    Eigen::Index num_params() const { return arch_.num_params(); }
    std::size_t num_layers() const { return w_.size(); }
    const Matrix& weight(std::size_t l) const { return w_[l]; }
    const Vector& bias(std::size_t l) const { return b_[l]; }

    /// Flat layout: for each layer, W column-major then b.
    Vector params() const {
        Vector p(num_params());
        Eigen::Index o = 0;
        for (std::size_t l = 0; l < w_.size(); ++l) {
            p.segment(o, w_[l].size()) = Eigen::Map<const Vector>(w_[l].data(), w_[l].size());
            o += w_[l].size();
            p.segment(o, b_[l].size()) = b_[l];
            o += b_[l].size();
        }
        return p;
    }

    void set_params(const Vector& p) {
        if (p.size() != num_params()) throw ConfigError("MlpEnergy: parameter size mismatch");
        Eigen::Index o = 0;
        for (std::size_t l = 0; l < w_.size(); ++l) {
            Eigen::Map<Vector>(w_[l].data(), w_[l].size()) = p.segment(o, w_[l].size());
            o += w_[l].size();
            b_[l] = p.segment(o, b_[l].size());
            o += b_[l].size();
        }
    }

    // --- forward / backward --------------------------------------------------

    /// Forward pass on xs (N x d). Energies are returned; intermediates cached.
    Vector forward(const Positions& xs, Cache& c) const {
        if (xs.cols() != dim()) throw ConfigError("MlpEnergy: input dimension mismatch");
        const std::size_t hidden = w_.size() - 1;
        c.z.resize(w_.size());
        c.a.resize(w_.size());
        c.sig.resize(hidden);
        c.a[0] = xs.transpose();
        for (std::size_t l = 0; l < hidden; ++l) {
            c.z[l] = detail::mul_cols(w_[l], c.a[l]);
            c.z[l].colwise() += b_[l];
            c.sig[l] = detail::sigmoid(c.z[l]);
            c.a[l + 1] = (c.z[l].array() * c.sig[l].array()).matrix();
        }
        c.z[hidden] = detail::mul_cols(w_[hidden], c.a[hidden]);
        c.z[hidden].array() += b_[hidden][0];
        Vector e = c.z[hidden].row(0).transpose();
        for (Eigen::Index i = 0; i < e.size(); ++i)
            if (!std::isfinite(e[i])) throw NonFiniteError("non-finite energy", static_cast<std::size_t>(i));
        return e;
    }

    /// Backward pass from dE = 1 per sample: fills delta and grad_x.
    void backward(Cache& c) const {
        const std::size_t hidden = w_.size() - 1;
        c.delta.resize(hidden);
        // delta_top = w_head' (per column) * s'(z_top)
        {
            const std::size_t l = hidden - 1;
            const auto s = c.sig[l].array();
            c.delta[l] = ((s * (1.0 + c.z[l].array() * (1.0 - s))).colwise() *
                          w_[hidden].row(0).transpose().array()).matrix();
        }
        for (std::size_t l = hidden - 1; l-- > 0;) {
            c.delta[l] = detail::mul_transposed_cols(w_[l + 1], c.delta[l + 1]);
            const auto s = c.sig[l].array();
            c.delta[l].array() *= s * (1.0 + c.z[l].array() * (1.0 - s));
        }
        c.grad_x = detail::mul_transposed_cols(w_[0], c.delta[0]);
    }

    // --- GibbsModel interface -------------------------------------------------

    double potential(const Vector& x) const {
        Cache c;
        return forward(Positions(x.transpose()), c)[0];
    }
    Vector grad_x(const Vector& x) const {
        Cache c;
        forward(Positions(x.transpose()), c);
        backward(c);
        return c.grad_x.col(0);
    }
    Vector grad_theta(const Vector& x) const { return grad_theta_batch(Positions(x.transpose())).row(0).transpose(); }

    Vector potential_batch(const Positions& xs) const { return forward(xs, scratch()); }

    Positions grad_x_batch(const Positions& xs) const {
        Vector e;
        Positions g;
        energy_and_grad_x(xs, e, g);
        return g;
    }

    void energy_and_grad_x(const Positions& xs, Vector& e, Positions& g) const {
        Cache& c = scratch();
        e = forward(xs, c);
        backward(c);
        g = c.grad_x.transpose();
        check_rows(g, "non-finite spatial gradient");
    }

    /// Row i holds grad_theta U(x_i), accumulated per sample.
    Matrix grad_theta_batch(const Positions& xs) const {
        Cache c;
        forward(xs, c);
        backward(c);
        const std::size_t hidden = w_.size() - 1;
        Matrix out(xs.rows(), num_params());
        for (Eigen::Index i = 0; i < xs.rows(); ++i) {
            Eigen::Index o = 0;
            for (std::size_t l = 0; l <= hidden; ++l) {
                const Eigen::Index rows = w_[l].rows(), cols = w_[l].cols();
                for (Eigen::Index q = 0; q < cols; ++q)
                    for (Eigen::Index p = 0; p < rows; ++p)
                        out(i, o + q * rows + p) = (l < hidden ? c.delta[l](p, i) : 1.0) * c.a[l](q, i);
                o += rows * cols;
                for (Eigen::Index p = 0; p < rows; ++p) out(i, o + p) = l < hidden ? c.delta[l](p, i) : 1.0;
                o += rows;
            }
        }
        check_rows(out, "non-finite parameter gradient");
        return out;
    }

    /// Column j = sum_i coeffs(i, j) grad_theta U(x_i), by batched reverse mode.
    Matrix grad_theta_weighted(const Positions& xs, const Matrix& coeffs) const {
        if (coeffs.rows() != xs.rows()) throw ConfigError("grad_theta_weighted: coefficient rows != particles");
        Cache& c = scratch();
        forward(xs, c);
        backward(c);
        Matrix out(num_params(), coeffs.cols());
        for (Eigen::Index j = 0; j < coeffs.cols(); ++j) out.col(j) = weighted_from_cache(c, coeffs.col(j));
        if (!out.allFinite()) throw NonFiniteError("non-finite weighted parameter gradient", 0);
        return out;
    }

    /// sum_i coeffs_i grad_theta U(x_i) using an already back-propagated cache.
    Vector weighted_from_cache(const Cache& c, const Vector& coeffs) const {
        const std::size_t hidden = w_.size() - 1;
        Vector out(num_params());
        Eigen::Index o = 0;
        for (std::size_t l = 0; l < hidden; ++l) {
            const Matrix dz = c.delta[l] * coeffs.asDiagonal();
            Matrix gw = dz * c.a[l].transpose();
            out.segment(o, gw.size()) = Eigen::Map<const Vector>(gw.data(), gw.size());
            o += gw.size();
            out.segment(o, dz.rows()) = dz.rowwise().sum();
            o += dz.rows();
        }
        const Vector gv = c.a[hidden] * coeffs;
        out.segment(o, gv.size()) = gv;
        o += gv.size();
        out[o] = coeffs.sum();
        return out;
    }

    /// Gradient in theta of sum_i coeffs_i (||grad_x U(x_i)|| - 1)^2, via a
    /// second reverse pass through the input-gradient computation.
    /// Also returns the per-sample gradient norms in `norms`.
    Vector grad_penalty_gradient(const Positions& xs, const Vector& coeffs, Vector* norms = nullptr) const {
        Cache c;
        forward(xs, c);
        backward(c);
        const std::size_t hidden = w_.size() - 1;
        const Eigen::Index n = xs.rows();

        // seed: d/dg of coeffs_i (|g| - 1)^2
        Matrix ubar(c.grad_x.rows(), n);
        Vector nrm(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double g = c.grad_x.col(i).norm();
            nrm[i] = g;
            ubar.col(i) = g > 0.0 ? Vector(coeffs[i] * 2.0 * (g - 1.0) / g * c.grad_x.col(i)) : Vector::Zero(ubar.rows());
        }
        if (norms) *norms = nrm;

        std::vector<Matrix> dw(w_.size());
        std::vector<Vector> db(w_.size());
        for (std::size_t l = 0; l < w_.size(); ++l) {
            dw[l] = Matrix::Zero(w_[l].rows(), w_[l].cols());
            db[l] = Vector::Zero(b_[l].size());
        }
        std::vector<Matrix> zbar(hidden);

        // Reverse through u_{l-1} = W_l' delta_l and delta_l = u_l * s'(z_l).
        Matrix deltabar;
        for (std::size_t l = 0; l < hidden; ++l) {
            dw[l].noalias() += c.delta[l] * ubar.transpose();
            deltabar.noalias() = w_[l] * ubar;
            const Matrix sp = silu_prime(l, c);
            // u_l recovered from delta_l = u_l * s'(z_l) would divide by s'; recompute u_l instead.
            const Matrix u_l = upstream_u(l, c);
            zbar[l] = (deltabar.array() * u_l.array() * silu_second(l, c).array()).matrix();
            ubar = (deltabar.array() * sp.array()).matrix();
        }
        // u_hidden = head weights', replicated
        dw[hidden].noalias() += ubar.rowwise().sum().transpose();

        // Ordinary reverse pass through the forward graph with injected zbar.
        Matrix abar = Matrix::Zero(w_[hidden].cols(), n);
        for (std::size_t l = hidden; l-- > 0;) {
            const Matrix zt = (zbar[l].array() + abar.array() * silu_prime(l, c).array()).matrix();
            dw[l].noalias() += zt * c.a[l].transpose();
            db[l] += zt.rowwise().sum();
            if (l > 0) abar.noalias() = w_[l].transpose() * zt;
        }

        Vector out(num_params());
        Eigen::Index o = 0;
        for (std::size_t l = 0; l < w_.size(); ++l) {
            out.segment(o, dw[l].size()) = Eigen::Map<const Vector>(dw[l].data(), dw[l].size());
            o += dw[l].size();
            out.segment(o, db[l].size()) = db[l];
            o += db[l].size();
        }
        return out;
    }

private:
    /// Per-thread reusable buffers; avoids reallocating large blocks per call.
    static Cache& scratch() {
        thread_local Cache c;
        return c;
    }
    Matrix silu_prime(std::size_t l, const Cache& c) const {
        const auto s = c.sig[l].array();
        return (s * (1.0 + c.z[l].array() * (1.0 - s))).matrix();
    }
    Matrix silu_second(std::size_t l, const Cache& c) const {
        const auto s = c.sig[l].array();
        return (s * (1.0 - s) * (2.0 + c.z[l].array() * (1.0 - 2.0 * s))).matrix();
    }
    /// u_l = dE/da_{l+1}: W_{l+1}' delta_{l+1}, or the head weights at the top.
    Matrix upstream_u(std::size_t l, const Cache& c) const {
        const std::size_t hidden = w_.size() - 1;
        const Eigen::Index n = c.a[0].cols();
        if (l + 1 == hidden) return w_[hidden].transpose().replicate(1, n);
        return w_[l + 1].transpose() * c.delta[l + 1];
    }
    template <class M>
    static void check_rows(const M& m, const char* what) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            if (!m.row(i).allFinite()) throw NonFiniteError(what, static_cast<std::size_t>(i));
    }

    MlpArchitecture arch_;
    std::vector<Matrix> w_;
    std::vector<Vector> b_;
};

static_assert(GibbsModel<MlpEnergy>);
static_assert(GibbsModel<GaussianLocation>);
static_assert(GibbsModel<MixturePotential>);

}  // namespace sosmc
