#ifndef MANIFOLD_ILPR_LINALG_HPP
#define MANIFOLD_ILPR_LINALG_HPP

// Dense matrix primitives shared by every other module: structured matrix
// types, Kronecker products, half vectorization, symmetric matrix functions,
// Cholesky, and the regularized solve used by the local polynomial estimator.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "manifold_ilpr/errors.hpp"

namespace milpr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace detail {

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(what) + ": expected a square matrix, got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace detail

/// Smallest eigenvalue a matrix needs to count as positive definite.
///
/// The threshold is the working-precision rank tolerance n * eps * max(lambda_max, 1):
/// anything below it is indistinguishable from a singular matrix once the
/// eigenvalues have been computed in double precision.
inline double pd_tolerance(double lambda_max, Index n) {
  return static_cast<double>(std::max<Index>(n, 1)) * std::numeric_limits<double>::epsilon() *
         std::max(lambda_max, 1.0);
}

/// Symmetric matrix. Always constructed exactly symmetric; also used for
/// tangent vectors of the SPD manifold.
class SymMatrix {
 public:
  SymMatrix() = default;

  /// Symmetrizes `m` as (m + m^T) / 2.
  explicit SymMatrix(const Matrix& m) {
    detail::require_square(m, "SymMatrix");
    m_ = 0.5 * (m + m.transpose());
  }

  static SymMatrix zero(Index n) { return SymMatrix(Matrix::Zero(n, n)); }
  static SymMatrix identity(Index n) { return SymMatrix(Matrix::Identity(n, n)); }

  const Matrix& matrix() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

  friend SymMatrix operator+(const SymMatrix& a, const SymMatrix& b) {
    return SymMatrix(a.m_ + b.m_);
  }
  friend SymMatrix operator-(const SymMatrix& a, const SymMatrix& b) {
    return SymMatrix(a.m_ - b.m_);
  }
  friend SymMatrix operator*(double s, const SymMatrix& a) { return SymMatrix(s * a.m_); }

 private:
  Matrix m_;
};

/// Lower-triangular matrix; the strict upper triangle is zero by construction.
class LowerTriangular {
 public:
  LowerTriangular() = default;

  /// Keeps the lower triangle of `m` (diagonal included), discarding the rest.
  explicit LowerTriangular(const Matrix& m) {
    detail::require_square(m, "LowerTriangular");
    m_ = m.triangularView<Eigen::Lower>();
  }

  const Matrix& matrix() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

/// Symmetric positive-definite matrix.
class SpdMatrix {
 public:
  SpdMatrix() = default;

  /// Validating constructor. Rejects non-square, non-finite, visibly
  /// asymmetric, or non positive-definite input with DomainError. Never repairs.
  explicit SpdMatrix(const Matrix& m) {
    detail::require_square(m, "SpdMatrix");
    if (!detail::all_finite(m)) throw DomainError("SpdMatrix: non-finite entries");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
      throw DomainError("SpdMatrix: input is not symmetric");
    }
    m_ = 0.5 * (m + m.transpose());
    if (m_.rows() == 0) throw DomainError("SpdMatrix: empty matrix");
    Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues()(0);
    const double lmax = es.eigenvalues()(es.eigenvalues().size() - 1);
    if (!(lmin > pd_tolerance(lmax, m_.rows()))) {
      throw DomainError("SpdMatrix: matrix is not positive definite (min eigenvalue " +
                        std::to_string(lmin) + ")");
    }
  }

  /// For values that are positive definite by construction (exp of a
  /// symmetric matrix, L L^T with positive-diagonal L, ...). Symmetrizes only.
  static SpdMatrix trusted(const Matrix& m) {
    SpdMatrix out;
    out.m_ = 0.5 * (m + m.transpose());
    return out;
  }

  static SpdMatrix identity(Index n) { return trusted(Matrix::Identity(n, n)); }

  const Matrix& matrix() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

  SymMatrix as_sym() const { return SymMatrix(m_); }

 private:
  Matrix m_;
};

// ---------------------------------------------------------------------------
// Kronecker products

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// x^{(x)j}; the zeroth power is the scalar 1.
inline Vector kron_power(const Vector& x, int j) {
  if (j < 0) throw DimensionError("kron_power: negative exponent");
  Vector out = Vector::Ones(1);
  for (int k = 0; k < j; ++k) {
    Vector next(x.size() * out.size());
    for (Index a = 0; a < x.size(); ++a) next.segment(a * out.size(), out.size()) = x(a) * out;
    out = std::move(next);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Half vectorization (column-major lower triangle)

inline Index vech_length(Index n) { return n * (n + 1) / 2; }

/// Recovers n from a half-vectorized length, or -1 if the length is not triangular.
inline Index vech_dim(Index len) {
  const auto n = static_cast<Index>(std::llround((std::sqrt(8.0 * static_cast<double>(len) + 1.0) - 1.0) / 2.0));
  return vech_length(n) == len ? n : -1;
}

/// Stacks the lower triangle (diagonal included) column by column.
inline Vector vech_lower(const Matrix& m) {
  detail::require_square(m, "vech");
  const Index n = m.rows();
  Vector v(vech_length(n));
  Index k = 0;
  for (Index j = 0; j < n; ++j)
    for (Index i = j; i < n; ++i) v(k++) = m(i, j);
  return v;
}

inline Vector vech(const SymMatrix& s) { return vech_lower(s.matrix()); }

/// Places v into the lower triangle and mirrors it.
inline SymMatrix vech_inv(const Vector& v) {
  const Index n = vech_dim(v.size());
  if (n < 0) {
    throw DimensionError("vech_inv: length " + std::to_string(v.size()) +
                         " is not n(n+1)/2 for an integer n");
  }
  Matrix m(n, n);
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      m(i, j) = v(k);
      m(j, i) = v(k);
      ++k;
    }
  }
  return SymMatrix(m);
}

/// Inverse of vech_lower for lower-triangular representatives.
inline Matrix vech_lower_inv(const Vector& v) {
  const Index n = vech_dim(v.size());
  if (n < 0) throw DimensionError("vech_lower_inv: bad length " + std::to_string(v.size()));
  Matrix m = Matrix::Zero(n, n);
  Index k = 0;
  for (Index j = 0; j < n; ++j)
    for (Index i = j; i < n; ++i) m(i, j) = v(k++);
  return m;
}

// ---------------------------------------------------------------------------
// Triangular parts

/// Strictly lower triangular part.
inline Matrix strict_lower(const Matrix& m) {
  detail::require_square(m, "strict_lower");
  return m.triangularView<Eigen::StrictlyLower>();
}

inline Matrix diag_part(const Matrix& m) {
  detail::require_square(m, "diag_part");
  return m.diagonal().asDiagonal();
}

/// strict_lower(m) + diag_part(m) / 2
inline Matrix half_op(const Matrix& m) {
  detail::require_square(m, "half_op");
  Matrix out = m.triangularView<Eigen::StrictlyLower>();
  out.diagonal() = 0.5 * m.diagonal();
  return out;
}

// ---------------------------------------------------------------------------
// Symmetric matrix functions via eigendecomposition

namespace detail {

struct SymEigen {
  Vector values;
  Matrix vectors;
};

inline SymEigen sym_eigen(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

inline Matrix reconstruct(const SymEigen& e, const Vector& f_values) {
  return e.vectors * f_values.asDiagonal() * e.vectors.transpose();
}

/// Eigendecomposition of an SPD matrix, rejecting non-PD input.
inline SymEigen spd_eigen(const SpdMatrix& y, const char* what) {
  SymEigen e = sym_eigen(y.matrix());
  const double lmin = e.values(0);
  const double lmax = e.values(e.values.size() - 1);
  if (!(lmin > pd_tolerance(lmax, y.dim()))) {
    throw DomainError(std::string(what) + ": matrix is not positive definite (min eigenvalue " +
                      std::to_string(lmin) + ")");
  }
  return e;
}

}  // namespace detail

inline SpdMatrix sym_expm(const SymMatrix& s) {
  auto e = detail::sym_eigen(s.matrix());
  return SpdMatrix::trusted(detail::reconstruct(e, e.values.array().exp().matrix()));
}

inline LowerTriangular cholesky(const SpdMatrix& y);

/// Matrix logarithm. Widely graded input can fail the eigenvalue PD test and
/// still factor stably; its eigenvalues are then taken as the squared singular
/// values of the Cholesky factor, which keeps the small ones.
inline SymMatrix sym_logm(const SpdMatrix& y) {
  auto e = detail::sym_eigen(y.matrix());
  const double lmin = e.values(0);
  const double lmax = e.values(e.values.size() - 1);
  if (lmin > pd_tolerance(lmax, y.dim())) {
    return SymMatrix(detail::reconstruct(e, e.values.array().log().matrix()));
  }
  Matrix l;
  try {
    l = cholesky(y).matrix();
  } catch (const DomainError&) {
    throw DomainError("sym_logm: matrix is not positive definite (min eigenvalue " + std::to_string(lmin) + ")");
  }
  const Eigen::JacobiSVD<Matrix> svd(l, Eigen::ComputeFullU);
  const Matrix out = svd.matrixU() * (2.0 * svd.singularValues().array().log()).matrix().asDiagonal() *
                     svd.matrixU().transpose();
  return SymMatrix(0.5 * (out + out.transpose()));
}

/// exp(tau * log Y)
inline SpdMatrix pow_tau(const SpdMatrix& y, double tau) {
  auto e = detail::spd_eigen(y, "pow_tau");
  return SpdMatrix::trusted(detail::reconstruct(e, e.values.array().pow(tau).matrix()));
}

/// Y^{1/2} and Y^{-1/2} from a single eigendecomposition.
struct SqrtPair {
  Matrix sqrt;
  Matrix inv_sqrt;
};

inline SqrtPair sym_sqrt_pair(const SpdMatrix& y) {
  auto e = detail::spd_eigen(y, "sym_sqrt");
  const Vector s = e.values.array().sqrt();
  return {detail::reconstruct(e, s), detail::reconstruct(e, s.cwiseInverse())};
}

// ---------------------------------------------------------------------------
// Cholesky

/// Lower Cholesky factor with strictly positive diagonal.
inline LowerTriangular cholesky(const SpdMatrix& y) {
  const Matrix& m = y.matrix();
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw DomainError("cholesky: matrix is not positive definite");
  Matrix l = llt.matrixL();
  const double tol = pd_tolerance(m.diagonal().maxCoeff(), m.rows());
  if (!((l.diagonal().array().square() > tol).all())) {
    throw DomainError("cholesky: matrix is not positive definite (vanishing pivot)");
  }
  return LowerTriangular(l);
}

// ---------------------------------------------------------------------------
// Solves

/// Solves (a + lambda^2 I) u = b for symmetric positive semidefinite `a`.
/// With lambda = 0 the system must be nonsingular; a rank-deficient `a`
/// raises NumericError.
inline Matrix ridge_solve(const Matrix& a, double lambda, const Matrix& b) {
  detail::require_square(a, "ridge_solve");
  if (b.rows() != a.rows()) throw DimensionError("ridge_solve: right-hand side does not conform");
  if (lambda < 0.0 || !std::isfinite(lambda)) throw DomainError("ridge_solve: lambda must be >= 0");
  Matrix reg = a;
  reg.diagonal().array() += lambda * lambda;
  if (lambda > 0.0) {
    Eigen::LDLT<Matrix> ldlt(reg);
    if (ldlt.info() == Eigen::Success) {
      Matrix u = ldlt.solve(b);
      if (u.allFinite()) return u;
    }
    throw NumericError("ridge_solve: regularized system could not be solved");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(reg);
  if (!qr.isInvertible()) throw NumericError("ridge_solve: singular system with lambda = 0");
  return qr.solve(b);
}

inline Vector ridge_solve(const Matrix& a, double lambda, const Vector& b) {
  return ridge_solve(a, lambda, Matrix(b)).col(0);
}

/// Minimum-norm least-squares solution, i.e. pinv(a) * b.
inline Matrix pinv_solve(const Matrix& a, const Matrix& b) {
  if (b.rows() != a.rows()) throw DimensionError("pinv_solve: right-hand side does not conform");
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
  return cod.solve(b);
}

// ---------------------------------------------------------------------------
// Finite differences (test tooling)

using MatrixMap = std::function<Matrix(const Matrix&)>;

/// Central difference (fn(y + eps v) - fn(y - eps v)) / (2 eps).
inline Matrix finite_diff_directional(const MatrixMap& fn, const Matrix& y, const Matrix& v,
                                      double eps = 1e-5) {
  return (fn(y + eps * v) - fn(y - eps * v)) / (2.0 * eps);
}

}  // namespace milpr

#endif  // MANIFOLD_ILPR_LINALG_HPP
