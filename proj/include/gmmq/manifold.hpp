#pragma once

// Geometry of the manifold of symmetric positive-definite matrices: points,
// tangents, the affine-invariant and Bures-Wasserstein metrics, the Lyapunov
// operator and the exponential maps used as retractions.
//
// Matrix functions go through a symmetric eigendecomposition. The dimensions
// handled here are tiny (a handful of rows), so robustness wins over speed.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gmmq {

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotPositiveDefinite : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

inline void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": dimension " + std::to_string(a) +
                            " vs " + std::to_string(b));
  }
}

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) {
    throw DimensionMismatch("matrix is not square: " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()));
  }
  return 0.5 * (a + a.transpose());
}

// U f(diag) U^T, symmetrized on the way out.
template <class F>
Eigen::MatrixXd spectral_apply(const Eigen::MatrixXd& vectors, const Eigen::VectorXd& values,
                               F&& f) {
  const Eigen::VectorXd mapped = values.unaryExpr(std::forward<F>(f));
  Eigen::MatrixXd out = vectors * mapped.asDiagonal() * vectors.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace detail

/// Relative eigenvalue floor below which a matrix is not accepted as SPD.
inline constexpr double kSpdRelativeTolerance = 1e-12;
/// Absolute eigenvalue floor applied after every exponential-map step.
inline constexpr double kSpdClampFloor = 1e-10;

/// A symmetric positive-definite matrix. Immutable; the eigendecomposition and
/// the inverse are computed once at construction.
class SpdMatrix {
 public:
  /// Symmetrizes `a` and rejects it unless its smallest eigenvalue exceeds
  /// kSpdRelativeTolerance times the largest.
  explicit SpdMatrix(const Eigen::MatrixXd& a) : matrix_(detail::symmetrized(a)) {
    if (matrix_.rows() == 0) throw DimensionMismatch("SpdMatrix: empty matrix");
    if (!matrix_.allFinite()) throw NotPositiveDefinite("SpdMatrix: non-finite entries");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(matrix_);
    if (eig.info() != Eigen::Success) {
      throw NotPositiveDefinite("SpdMatrix: eigendecomposition failed");
    }
    values_ = eig.eigenvalues();
    vectors_ = eig.eigenvectors();
    const double lo = values_.minCoeff();
    const double hi = values_.maxCoeff();
    if (!(hi > 0.0) || !(lo > kSpdRelativeTolerance * hi)) {
      throw NotPositiveDefinite("SpdMatrix: eigenvalue range [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + "] is not positive definite");
    }
    inverse_ = detail::spectral_apply(vectors_, values_, [](double v) { return 1.0 / v; });
  }

  static SpdMatrix identity(Eigen::Index dim) {
    return SpdMatrix(Eigen::MatrixXd::Identity(dim, dim));
  }
  static SpdMatrix scaled_identity(Eigen::Index dim, double scale) {
    return SpdMatrix(scale * Eigen::MatrixXd::Identity(dim, dim));
  }

  Eigen::Index dim() const { return matrix_.rows(); }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  const Eigen::MatrixXd& inverse() const { return inverse_; }
  const Eigen::VectorXd& eigenvalues() const { return values_; }
  const Eigen::MatrixXd& eigenvectors() const { return vectors_; }

  Eigen::MatrixXd sqrt() const {
    return detail::spectral_apply(vectors_, values_, [](double v) { return std::sqrt(v); });
  }
  Eigen::MatrixXd inverse_sqrt() const {
    return detail::spectral_apply(vectors_, values_, [](double v) { return 1.0 / std::sqrt(v); });
  }

 private:
  Eigen::MatrixXd matrix_;
  Eigen::VectorXd values_;
  Eigen::MatrixXd vectors_;
  Eigen::MatrixXd inverse_;
};

/// A symmetric matrix, i.e. a tangent vector of the SPD manifold. Stored in
/// full; the constructor symmetrizes.
class SymTangent {
 public:
  SymTangent() = default;
  explicit SymTangent(const Eigen::MatrixXd& a) : matrix_(detail::symmetrized(a)) {}

  static SymTangent zero(Eigen::Index dim) {
    return SymTangent(Eigen::MatrixXd::Zero(dim, dim));
  }

  Eigen::Index dim() const { return matrix_.rows(); }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  bool is_zero() const { return (matrix_.array() == 0.0).all(); }

  SymTangent operator+(const SymTangent& o) const {
    detail::require_same_dim(dim(), o.dim(), "SymTangent +");
    return SymTangent(matrix_ + o.matrix_);
  }
  SymTangent operator-(const SymTangent& o) const {
    detail::require_same_dim(dim(), o.dim(), "SymTangent -");
    return SymTangent(matrix_ - o.matrix_);
  }
  SymTangent operator-() const { return SymTangent(-matrix_); }
  friend SymTangent operator*(double s, const SymTangent& t) { return SymTangent(s * t.matrix_); }

 private:
  Eigen::MatrixXd matrix_;
};

enum class MetricKind { AffineInvariant, BuresWasserstein };

inline std::string_view to_string(MetricKind m) {
  return m == MetricKind::AffineInvariant ? "affi" : "bw";
}

inline MetricKind metric_from_string(std::string_view s) {
  if (s == "affi") return MetricKind::AffineInvariant;
  if (s == "bw") return MetricKind::BuresWasserstein;
  throw std::invalid_argument("unknown metric '" + std::string(s) + "' (expected affi|bw)");
}

/// Solves c L + L c = g in the eigenbasis of c:
/// L = U [ (U^T g U)_ij / (lambda_i + lambda_j) ] U^T.
inline SymTangent lyapunov_solve(const SpdMatrix& c, const SymTangent& g) {
  detail::require_same_dim(c.dim(), g.dim(), "lyapunov_solve");
  const auto& u = c.eigenvectors();
  const auto& lam = c.eigenvalues();
  Eigen::MatrixXd rotated = u.transpose() * g.matrix() * u;
  for (Eigen::Index i = 0; i < rotated.rows(); ++i) {
    for (Eigen::Index j = 0; j < rotated.cols(); ++j) rotated(i, j) /= lam(i) + lam(j);
  }
  return SymTangent(u * rotated * u.transpose());
}

/// Riemannian inner product of two tangents at c.
/// AffineInvariant: tr(c^-1 g1 c^-1 g2). BuresWasserstein: tr(L_c(g1) g2) / 2.
inline double spd_inner(const SpdMatrix& c, const SymTangent& g1, const SymTangent& g2,
                        MetricKind metric) {
  detail::require_same_dim(c.dim(), g1.dim(), "spd_inner");
  detail::require_same_dim(c.dim(), g2.dim(), "spd_inner");
  if (metric == MetricKind::AffineInvariant) {
    const Eigen::MatrixXd a = c.inverse() * g1.matrix();
    const Eigen::MatrixXd b = c.inverse() * g2.matrix();
    // tr(A B) without forming the product.
    return (a.array() * b.transpose().array()).sum();
  }
  const SymTangent l = lyapunov_solve(c, g1);
  return 0.5 * (l.matrix().array() * g2.matrix().array()).sum();
}

struct SpdExpResult {
  SpdMatrix point;
  /// True when an eigenvalue had to be lifted to the floor to keep the result SPD.
  bool repaired = false;
};

/// Clamps the spectrum of a symmetric matrix to
/// max(kSpdClampFloor, 10 * kSpdRelativeTolerance * lambda_max).
inline SpdExpResult make_spd_clamped(const Eigen::MatrixXd& raw) {
  const Eigen::MatrixXd sym = detail::symmetrized(raw);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd& values = eig.eigenvalues();
  const double floor = std::max(kSpdClampFloor, 10.0 * kSpdRelativeTolerance * values.maxCoeff());
  if (values.minCoeff() >= floor) return {SpdMatrix(sym), false};
  return {SpdMatrix(detail::spectral_apply(eig.eigenvectors(), values,
                                           [floor](double v) { return std::max(v, floor); })),
          true};
}

/// Exponential map at c.
/// AffineInvariant: c^1/2 exp(c^-1/2 g c^-1/2) c^1/2.
/// BuresWasserstein: (L_c(g) + I) c (L_c(g) + I).
inline SpdExpResult spd_exp(const SpdMatrix& c, const SymTangent& g, MetricKind metric) {
  detail::require_same_dim(c.dim(), g.dim(), "spd_exp");
  if (g.is_zero()) return {c, false};
  const auto n = c.dim();
  if (metric == MetricKind::AffineInvariant) {
    const Eigen::MatrixXd half = c.sqrt();
    const Eigen::MatrixXd inv_half = c.inverse_sqrt();
    const Eigen::MatrixXd inner = detail::symmetrized(inv_half * g.matrix() * inv_half);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner);
    const Eigen::MatrixXd expd = detail::spectral_apply(
        eig.eigenvectors(), eig.eigenvalues(), [](double v) { return std::exp(v); });
    return make_spd_clamped(half * expd * half);
  }
  const Eigen::MatrixXd shift =
      lyapunov_solve(c, g).matrix() + Eigen::MatrixXd::Identity(n, n);
  return make_spd_clamped(shift * c.matrix() * shift);
}

}  // namespace gmmq
