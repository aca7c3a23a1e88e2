#pragma once

// Discrete fractional Fourier transform built from a real orthogonal
// eigenbasis of the unitary DFT.
//
// The eigenvectors come from the nearly tridiagonal matrix S that commutes
// with the DFT (diagonal 2cos(2*pi*n/N) - 4, unit off-diagonals and wrap-around
// corners). S also commutes with the parity permutation, so it is split into
// its even and odd invariant subspaces. Each block is an irreducible
// symmetric tridiagonal matrix and therefore has simple eigenvalues; sorting
// each block by decreasing eigenvalue yields Hermite indices 0, 2, 4, ... for
// the even block and 1, 3, 5, ... for the odd block. For even N the last even
// vector takes index N (index N-1 does not exist).
//
//   F^a = sum_k exp(-i*pi*a*k/2) v_k v_k^T

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "sffp/errors.hpp"

namespace sffp::frft {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

struct Eigenbasis {
    Eigen::MatrixXd vectors;           // column j is v_{hermite_indices[j]}
    Eigen::MatrixXcd complex_vectors;  // same, pre-cast for kernel products
    std::vector<int> hermite_indices;
};

/// Maps any order onto the canonical interval [-2, 2).
inline double canonical_order(double order) {
    double a = std::fmod(order + 2.0, 4.0);
    if (a < 0.0) a += 4.0;
    return a - 2.0;
}

/// Sign changes of the vector after centring index 0, ignoring entries below
/// `rel_tol` times the largest magnitude. Equals the Hermite index for the
/// low-order eigenvectors; high orders alias on a discrete grid.
inline int zero_crossings(const Eigen::VectorXd& v, double rel_tol = 1e-9) {
    const Eigen::Index n = v.size();
    if (n == 0) return 0;
    const double floor = rel_tol * v.cwiseAbs().maxCoeff();
    int count = 0;
    int last_sign = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double value = v((j + n - n / 2) % n);
        if (std::abs(value) <= floor) continue;
        const int sign = value > 0 ? 1 : -1;
        if (last_sign != 0 && sign != last_sign) ++count;
        last_sign = sign;
    }
    return count;
}

/// The commuting matrix S for length n.
inline Eigen::MatrixXd commuting_matrix(int n) {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        s(i, i) = 2.0 * std::cos(2.0 * std::numbers::pi * i / n) - 4.0;
        s(i, (i + 1) % n) += 1.0;
        s(i, (i + n - 1) % n) += 1.0;
    }
    return s;
}

namespace detail {

// Orthonormal bases of the even (x[j] = x[-j]) and odd subspaces.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> parity_bases(int n) {
    const int half = (n + 1) / 2;  // pairs j, n-j for 1 <= j < half
    const int n_even = n / 2 + 1;
    const int n_odd = (n - 1) / 2;
    Eigen::MatrixXd even = Eigen::MatrixXd::Zero(n, n_even);
    Eigen::MatrixXd odd = Eigen::MatrixXd::Zero(n, n_odd);
    const double r = 1.0 / std::numbers::sqrt2;
    even(0, 0) = 1.0;
    for (int j = 1; j < half; ++j) {
        even(j, j) = r;
        even(n - j, j) = r;
        odd(j, j - 1) = r;
        odd(n - j, j - 1) = -r;
    }
    if (n % 2 == 0) even(n / 2, n_even - 1) = 1.0;
    return {even, odd};
}

inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
    const double floor = 1e-10 * v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > floor) {
            if (v(i) < 0.0) v = -v;
            return;
        }
    }
}

}  // namespace detail

/// Real orthogonal basis diagonalising the unitary n-point DFT, with the
/// Hermite index assigned to each column.
inline Eigenbasis build_eigenbasis(int n) {
    if (n < 2) {
        throw InvalidLengthError("build_eigenbasis: length must be >= 2, got " +
                                 std::to_string(n));
    }
    const Eigen::MatrixXd s = commuting_matrix(n);
    const auto [even, odd] = detail::parity_bases(n);

    Eigenbasis basis;
    basis.vectors.resize(n, n);
    basis.hermite_indices.reserve(n);
    int column = 0;
    auto diagonalise = [&](const Eigen::MatrixXd& sub, int first_index) {
        if (sub.cols() == 0) return;
        const Eigen::MatrixXd block = sub.transpose() * s * sub;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(block);
        // Eigen sorts ascending; Hermite order is descending eigenvalue.
        for (Eigen::Index r = 0; r < block.cols(); ++r) {
            Eigen::VectorXd v = sub * solver.eigenvectors().col(block.cols() - 1 - r);
            v.normalize();
            detail::fix_sign(v);
            basis.vectors.col(column++) = v;
            int index = first_index + 2 * static_cast<int>(r);
            if (index == n - 1 && n % 2 == 0) index = n;  // even n skips n-1
            basis.hermite_indices.push_back(index);
        }
    };
    diagonalise(even, 0);
    diagonalise(odd, 1);
    basis.complex_vectors = basis.vectors.cast<Complex>();
    return basis;
}

/// Process-wide cache of eigenbases keyed by length. Readers share the lock;
/// a miss computes outside the lock and inserts under an exclusive lock.
inline std::shared_ptr<const Eigenbasis> cached_eigenbasis(int n) {
    static std::shared_mutex mutex;
    static std::map<int, std::shared_ptr<const Eigenbasis>> cache;
    {
        std::shared_lock lock(mutex);
        if (auto it = cache.find(n); it != cache.end()) return it->second;
    }
    auto fresh = std::make_shared<const Eigenbasis>(build_eigenbasis(n));
    std::unique_lock lock(mutex);
    auto [it, inserted] = cache.emplace(n, std::move(fresh));
    return it->second;
}

/// exp(-i*pi*order*k/2) for every Hermite index k. The exponent is reduced
/// modulo 4 before the trigonometric evaluation.
inline CVector eigen_phases(const Eigenbasis& basis, double order) {
    CVector phases(static_cast<Eigen::Index>(basis.hermite_indices.size()));
    for (std::size_t j = 0; j < basis.hermite_indices.size(); ++j) {
        const double turns = std::fmod(order * basis.hermite_indices[j], 4.0);
        const double angle = -0.5 * std::numbers::pi * turns;
        phases(static_cast<Eigen::Index>(j)) = Complex(std::cos(angle), std::sin(angle));
    }
    return phases;
}

/// F^order x computed in the eigen domain, O(n^2) without forming the kernel.
inline CVector apply_order(const Eigenbasis& basis, const CVector& x, double order) {
    const CVector coefficients = basis.complex_vectors.transpose() * x;
    return basis.complex_vectors * eigen_phases(basis, order).cwiseProduct(coefficients);
}

/// The n-point discrete fractional Fourier transform at a fixed order.
/// Immutable once built; safe to share between threads.
class FrftOperator {
public:
    FrftOperator(int n, double order)
        : basis_(cached_eigenbasis(n)), order_(order) {
        if (!std::isfinite(order)) {
            throw std::invalid_argument("FrftOperator: order must be finite");
        }
        const CVector phases = eigen_phases(*basis_, order_);
        kernel_ = (basis_->complex_vectors * phases.asDiagonal()) *
                  basis_->complex_vectors.transpose();
    }

    int n() const { return static_cast<int>(basis_->vectors.rows()); }
    double order() const { return order_; }
    const Eigen::MatrixXd& eigvecs() const { return basis_->vectors; }
    const std::vector<int>& hermite_indices() const { return basis_->hermite_indices; }
    const Eigenbasis& basis() const { return *basis_; }
    const CMatrix& kernel() const { return kernel_; }

    /// dF^a/da = sum_k (-i*pi*k/2) exp(-i*pi*a*k/2) v_k v_k^T
    CMatrix order_derivative() const {
        CVector scaled = eigen_phases(*basis_, order_);
        for (Eigen::Index j = 0; j < scaled.size(); ++j) {
            const double k = basis_->hermite_indices[static_cast<std::size_t>(j)];
            scaled(j) *= Complex(0.0, -0.5 * std::numbers::pi * k);
        }
        return (basis_->complex_vectors * scaled.asDiagonal()) *
               basis_->complex_vectors.transpose();
    }

private:
    std::shared_ptr<const Eigenbasis> basis_;
    double order_;
    CMatrix kernel_;
};

inline FrftOperator build_operator(int n, double order) { return FrftOperator(n, order); }

inline CVector frft(const CVector& x, const FrftOperator& op) {
    if (x.size() != op.n()) {
        throw ShapeError("frft: input length " + std::to_string(x.size()) +
                         " does not match operator length " + std::to_string(op.n()));
    }
    return op.kernel() * x;
}

/// Applies F^{-order}, i.e. the conjugate transpose of the kernel.
inline CVector ifrft(const CVector& x, const FrftOperator& op) {
    if (x.size() != op.n()) {
        throw ShapeError("ifrft: input length " + std::to_string(x.size()) +
                         " does not match operator length " + std::to_string(op.n()));
    }
    return op.kernel().adjoint() * x;
}

inline CMatrix operator_order_derivative(const FrftOperator& op) { return op.order_derivative(); }

/// Unitary DFT matrix, W[m, k] = exp(-2*pi*i*m*k/n) / sqrt(n).
inline CMatrix dft_matrix(int n) {
    CMatrix w(n, n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (int m = 0; m < n; ++m) {
        for (int k = 0; k < n; ++k) {
            const double angle = -2.0 * std::numbers::pi * ((static_cast<long>(m) * k) % n) / n;
            w(m, k) = std::polar(scale, angle);
        }
    }
    return w;
}

/// x[j] -> x[(-j) mod n]
inline Eigen::MatrixXd parity_matrix(int n) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j < n; ++j) p((n - j) % n, j) = 1.0;
    return p;
}

/// Shannon entropy of |x|^2 / ||x||^2 normalised by log(n); 0 log 0 = 0.
inline double spectral_entropy(const CVector& x) {
    const double energy = x.squaredNorm();
    if (!(energy > 0.0) || !std::isfinite(energy)) {
        throw UndefinedEntropyError("spectral_entropy: input has zero energy");
    }
    if (x.size() < 2) return 0.0;
    double h = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double p = std::norm(x(i)) / energy;
        if (p > 0.0) h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(x.size()));
}

/// Normalised spectral entropy of frft(x, a) for each order a. Lower values
/// mean the signal is more concentrated in that fractional domain.
inline std::vector<double> concentration_profile(const CVector& x, std::span<const double> orders) {
    if (orders.empty()) {
        throw std::invalid_argument("concentration_profile: orders must be non-empty");
    }
    if (x.size() < 2) {
        throw InvalidLengthError("concentration_profile: signal length must be >= 2");
    }
    if (!(x.squaredNorm() > 0.0)) {
        throw UndefinedEntropyError("concentration_profile: input has zero energy");
    }
    const auto basis = cached_eigenbasis(static_cast<int>(x.size()));
    std::vector<double> profile;
    profile.reserve(orders.size());
    for (double a : orders) profile.push_back(spectral_entropy(apply_order(*basis, x, a)));
    return profile;
}

/// Evenly spaced grid from `lo` to `hi` inclusive.
inline std::vector<double> order_grid(double lo, double hi, double step) {
    std::vector<double> grid;
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
    grid.reserve(static_cast<std::size_t>(std::max(count, 0L)));
    for (long i = 0; i < count; ++i) grid.push_back(lo + step * static_cast<double>(i));
    return grid;
}

/// Order of minimum entropy over `orders` (first on ties).
inline double most_concentrated_order(const CVector& x, std::span<const double> orders) {
    const auto profile = concentration_profile(x, orders);
    const auto it = std::min_element(profile.begin(), profile.end());
    return orders[static_cast<std::size_t>(it - profile.begin())];
}

}  // namespace sffp::frft
