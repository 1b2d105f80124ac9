#pragma once

// Shared vocabulary for the sosmc library: Eigen aliases, the error
// hierarchy, and deterministic named random streams.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sosmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Row-major so each particle (row) is contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// N x d particle positions, one particle per row.
using Positions = RowMatrix;
using VecRef = Eigen::Ref<const Vector>;

// --- errors -----------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every log-weight is -inf (or NaN): the particle population has collapsed.
class DegenerateWeightsError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or argument combination.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// An error tied to one particle / row / chain.
class IndexedError : public Error {
public:
    IndexedError(const std::string& what, std::size_t index)
        : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// Non-finite state or gradient during Langevin propagation.
class DivergenceError : public IndexedError {
public:
    using IndexedError::IndexedError;
};

/// Non-finite test-function value inside an estimator.
class EstimatorError : public IndexedError {
public:
    using IndexedError::IndexedError;
};

/// Non-finite potential / gradient returned by a model.
class NonFiniteError : public IndexedError {
public:
    using IndexedError::IndexedError;
};

// --- random streams ---------------------------------------------------------

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Seed for the substream `name` (and optional `index`) of a root seed.
/// Distinct names give statistically independent streams, so subsystems
/// (particles, resampling, reference batches, eval chains...) can be varied
/// independently while a run stays a pure function of the root seed.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
    return detail::splitmix64(detail::splitmix64(root ^ detail::fnv1a(name)) + detail::splitmix64(index + 1));
}

inline Rng make_stream(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
    return Rng(derive_seed(root, name, index));
}

/// Fills a matrix with iid standard normals, row by row.
template <class Derived>
void fill_standard_normal(Eigen::MatrixBase<Derived>& out, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = normal(rng);
}

inline Positions standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Positions out(rows, cols);
    fill_standard_normal(out, rng);
    return out;
}

/// 64-bit FNV-1a digest of a vector's raw float64 bytes, as 16 hex chars.
inline std::string digest(const Vector& v) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(v.size()) * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    return out;
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace sosmc
