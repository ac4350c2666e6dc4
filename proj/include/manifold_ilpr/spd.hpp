#ifndef MANIFOLD_ILPR_SPD_HPP
#define MANIFOLD_ILPR_SPD_HPP

// Geometry of the SPD manifold: the Euclidean pullback metrics (Log-Euclidean,
// Log-Cholesky, Cholesky, Power-Euclidean) through their inducing isometries,
// the Affine-Invariant metric, and Karcher means.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "manifold_ilpr/errors.hpp"
#include "manifold_ilpr/linalg.hpp"

namespace milpr {

enum class EpmKind { LogEuclidean, LogCholesky, Cholesky, PowerEuclidean };

/// Euclidean pullback metric, identified by its inducing isometry f.
class EpmMetric {
 public:
  static constexpr double kDefaultTau = 0.5;

  explicit EpmMetric(EpmKind kind = EpmKind::LogCholesky, double tau = kDefaultTau)
      : kind_(kind), tau_(tau) {
    if (kind_ == EpmKind::PowerEuclidean && !(tau_ > 0.0 && std::isfinite(tau_))) {
      throw DomainError("EpmMetric: Power-Euclidean requires tau > 0");
    }
  }

  static EpmMetric log_euclidean() { return EpmMetric(EpmKind::LogEuclidean); }
  static EpmMetric log_cholesky() { return EpmMetric(EpmKind::LogCholesky); }
  static EpmMetric cholesky() { return EpmMetric(EpmKind::Cholesky); }
  static EpmMetric power_euclidean(double tau = kDefaultTau) {
    return EpmMetric(EpmKind::PowerEuclidean, tau);
  }

  EpmKind kind() const noexcept { return kind_; }
  double tau() const noexcept { return tau_; }

  /// True when f maps into lower-triangular matrices (Cholesky, Log-Cholesky).
  bool triangular_codomain() const noexcept {
    return kind_ == EpmKind::Cholesky || kind_ == EpmKind::LogCholesky;
  }

  friend bool operator==(const EpmMetric&, const EpmMetric&) = default;

 private:
  EpmKind kind_;
  double tau_;
};

/// The Affine-Invariant metric g_Y(V, V) = tr((Y^{-1} V)^2). No parameters.
struct AiMetric {
  friend bool operator==(const AiMetric&, const AiMetric&) = default;
};

inline std::string to_string(EpmKind kind) {
  switch (kind) {
    case EpmKind::LogEuclidean: return "log-euclidean";
    case EpmKind::LogCholesky: return "log-cholesky";
    case EpmKind::Cholesky: return "cholesky";
    case EpmKind::PowerEuclidean: return "power-euclidean";
  }
  return "unknown";
}

inline EpmKind parse_epm_kind(std::string_view name) {
  if (name == "log-euclidean") return EpmKind::LogEuclidean;
  if (name == "log-cholesky") return EpmKind::LogCholesky;
  if (name == "cholesky") return EpmKind::Cholesky;
  if (name == "power-euclidean") return EpmKind::PowerEuclidean;
  throw DomainError("unknown metric '" + std::string(name) + "'");
}

namespace detail {

inline void require_same_dim(const SpdMatrix& a, const SpdMatrix& b, const char* what) {
  if (a.dim() != b.dim()) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a.dim()) +
                         " vs " + std::to_string(b.dim()) + ")");
  }
}

inline void require_conforming(const SpdMatrix& y, const SymMatrix& v, const char* what) {
  if (y.dim() != v.dim()) throw DimensionError(std::string(what) + ": tangent vector dimension mismatch");
}

/// Lower triangular L^{-1} M L^{-T}.
inline Matrix whiten(const Matrix& l, const Matrix& m) {
  Matrix t = l.triangularView<Eigen::Lower>().solve(m);
  return l.triangularView<Eigen::Lower>().solve(t.transpose()).transpose();
}

/// First divided differences of a scalar function on the spectrum, used for
/// the Daleckii-Krein formula of the derivative of a symmetric matrix function.
template <class F, class DF>
Matrix divided_differences(const Vector& lam, F f, DF df) {
  const Index n = lam.size();
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double d = lam(i) - lam(j);
      if (std::abs(d) <= 1e-12 * std::max(std::abs(lam(i)), std::abs(lam(j)))) {
        g(i, j) = df(0.5 * (lam(i) + lam(j)));
      } else {
        g(i, j) = (f(lam(i)) - f(lam(j))) / d;
      }
    }
  }
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Inducing isometries

/// f(Y) for the chosen metric.
///   Log-Euclidean:   log Y                       (symmetric)
///   Cholesky:        L                           (lower triangular)
///   Log-Cholesky:    strict_lower(L) + log(diag L)
///   Power-Euclidean: Y^tau                       (SPD)
inline Matrix epm_forward(const EpmMetric& m, const SpdMatrix& y) {
  switch (m.kind()) {
    case EpmKind::LogEuclidean: return sym_logm(y).matrix();
    case EpmKind::Cholesky: return cholesky(y).matrix();
    case EpmKind::LogCholesky: {
      Matrix l = cholesky(y).matrix();
      l.diagonal() = l.diagonal().array().log().matrix();
      return l;
    }
    case EpmKind::PowerEuclidean: return pow_tau(y, m.tau()).matrix();
  }
  throw DomainError("epm_forward: unknown metric");
}

/// f^{-1}(z). Throws DomainError when z lies outside f(SPD_n).
inline SpdMatrix epm_inverse(const EpmMetric& m, const Matrix& z) {
  detail::require_square(z, "epm_inverse");
  if (!z.allFinite()) throw DomainError("epm_inverse: non-finite entries");
  const double scale = std::max(1.0, z.cwiseAbs().maxCoeff());
  switch (m.kind()) {
    case EpmKind::LogEuclidean: {
      if ((z - z.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
        throw DomainError("epm_inverse: Log-Euclidean coordinates must be symmetric");
      }
      return sym_expm(SymMatrix(z));
    }
    case EpmKind::Cholesky: {
      if (z.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff() > 1e-8 * scale) {
        throw DomainError("epm_inverse: Cholesky coordinates must be lower triangular");
      }
      const Matrix l = z.triangularView<Eigen::Lower>();
      if (!((l.diagonal().array() > 0.0).all())) {
        throw DomainError("epm_inverse: Cholesky factor needs a positive diagonal");
      }
      return SpdMatrix::trusted(l * l.transpose());
    }
    case EpmKind::LogCholesky: {
      if (z.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff() > 1e-8 * scale) {
        throw DomainError("epm_inverse: Log-Cholesky coordinates must be lower triangular");
      }
      Matrix l = z.triangularView<Eigen::Lower>();
      l.diagonal() = l.diagonal().array().exp().matrix();
      return SpdMatrix::trusted(l * l.transpose());
    }
    case EpmKind::PowerEuclidean: {
      if ((z - z.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
        throw DomainError("epm_inverse: Power-Euclidean coordinates must be symmetric");
      }
      return pow_tau(SpdMatrix::trusted(z), 1.0 / m.tau());
    }
  }
  throw DomainError("epm_inverse: unknown metric");
}

/// Geodesic distance of the pullback metric: ||f(y1) - f(y2)||_F.
inline double epm_distance(const EpmMetric& m, const SpdMatrix& y1, const SpdMatrix& y2) {
  detail::require_same_dim(y1, y2, "epm_distance");
  return (epm_forward(m, y1) - epm_forward(m, y2)).norm();
}

// ---------------------------------------------------------------------------
// Differentials and metric tensors

/// Directional derivative of the Log-Cholesky isometry at Y along V:
///   floor(L H) + D(H),  H = (L^{-1} V L^{-T})_{1/2},  L = chol(Y).
inline LowerTriangular lc_differential(const SpdMatrix& y, const SymMatrix& v) {
  detail::require_conforming(y, v, "lc_differential");
  const Matrix l = cholesky(y).matrix();
  const Matrix h = half_op(detail::whiten(l, v.matrix()));
  return LowerTriangular(strict_lower(l * h) + diag_part(h));
}

/// Log-Cholesky metric tensor in its closed form
///   ||floor(L H)||^2 + ||D(H)||^2.
inline double lc_metric_tensor(const SpdMatrix& y, const SymMatrix& v) {
  detail::require_conforming(y, v, "lc_metric_tensor");
  const Matrix l = cholesky(y).matrix();
  const Matrix l_inv = l.inverse();
  const Matrix inner = l_inv * v.matrix() * l_inv.transpose();
  const Matrix h = half_op(inner);
  return strict_lower(l * h).squaredNorm() + h.diagonal().squaredNorm();
}

/// d_Y f(V) for any of the four isometries.
///
/// Log-Euclidean and Power-Euclidean use the Daleckii-Krein formula in the
/// eigenbasis of Y; Cholesky uses d L = L (L^{-1} V L^{-T})_{1/2}.
inline Matrix epm_differential(const EpmMetric& m, const SpdMatrix& y, const SymMatrix& v) {
  detail::require_conforming(y, v, "epm_differential");
  switch (m.kind()) {
    case EpmKind::LogCholesky: return lc_differential(y, v).matrix();
    case EpmKind::Cholesky: {
      const Matrix l = cholesky(y).matrix();
      return l * half_op(detail::whiten(l, v.matrix()));
    }
    case EpmKind::LogEuclidean:
    case EpmKind::PowerEuclidean: {
      auto e = detail::spd_eigen(y, "epm_differential");
      Matrix g;
      if (m.kind() == EpmKind::LogEuclidean) {
        g = detail::divided_differences(
            e.values, [](double t) { return std::log(t); }, [](double t) { return 1.0 / t; });
      } else {
        const double tau = m.tau();
        g = detail::divided_differences(
            e.values, [tau](double t) { return std::pow(t, tau); },
            [tau](double t) { return tau * std::pow(t, tau - 1.0); });
      }
      const Matrix vt = e.vectors.transpose() * v.matrix() * e.vectors;
      return e.vectors * g.cwiseProduct(vt) * e.vectors.transpose();
    }
  }
  throw DomainError("epm_differential: unknown metric");
}

/// g^f_Y(V, V) = ||d_Y f(V)||_F^2. Log-Cholesky goes through its closed form.
inline double epm_metric_tensor(const EpmMetric& m, const SpdMatrix& y, const SymMatrix& v) {
  if (m.kind() == EpmKind::LogCholesky) return lc_metric_tensor(y, v);
  return epm_differential(m, y, v).squaredNorm();
}

// ---------------------------------------------------------------------------
// Affine-Invariant geometry

/// tr((Y^{-1} V)^2)
inline double ai_metric_tensor(const SpdMatrix& y, const SymMatrix& v) {
  detail::require_conforming(y, v, "ai_metric_tensor");
  Eigen::LLT<Matrix> llt(y.matrix());
  if (llt.info() != Eigen::Success) throw DomainError("ai_metric_tensor: matrix is not positive definite");
  const Matrix a = llt.solve(v.matrix());
  return (a * a).trace();
}

namespace detail {

/// Congruence by a symmetric matrix: s * m * s, symmetrized.
inline Matrix congruence(const Matrix& s, const Matrix& m) {
  Matrix out = s * m * s;
  return 0.5 * (out + out.transpose());
}

/// log(s y s^T) through the factor m = s chol(y): the eigenvalues of s y s^T
/// are the squared singular values of m. Forming s y s^T
/// squares the conditioning and loses small eigenvalues of widely separated
/// pairs; the factor keeps them, and the result is PD by construction.
inline Matrix whitened_log(const Matrix& s, const SpdMatrix& y, const char* what) {
  const Eigen::JacobiSVD<Matrix> svd(s * cholesky(y).matrix(), Eigen::ComputeFullU);
  const Vector sv = svd.singularValues();
  if (!(sv.minCoeff() > 0.0)) throw DomainError(std::string(what) + ": whitened matrix is singular");
  const Matrix out = svd.matrixU() * (2.0 * sv.array().log()).matrix().asDiagonal() * svd.matrixU().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace detail

/// ||log(Y1^{-1/2} Y2 Y1^{-1/2})||_F. The generalized eigenvalues are the
/// squared singular values of L1^{-1} L2 for Cholesky factors L1, L2.
inline double ai_distance(const SpdMatrix& y1, const SpdMatrix& y2) {
  detail::require_same_dim(y1, y2, "ai_distance");
  const Matrix m = cholesky(y1).matrix().triangularView<Eigen::Lower>().solve(cholesky(y2).matrix());
  const Vector sv = Eigen::JacobiSVD<Matrix>(m).singularValues();
  if (!(sv.minCoeff() > 0.0)) throw DomainError("ai_distance: whitened matrix is singular");
  return 2.0 * sv.array().log().matrix().norm();
}

/// Y^{1/2} exp(Y^{-1/2} V Y^{-1/2}) Y^{1/2}
inline SpdMatrix ai_exp(const SpdMatrix& y, const SymMatrix& v) {
  detail::require_conforming(y, v, "ai_exp");
  const SqrtPair r = sym_sqrt_pair(y);
  const SpdMatrix inner = sym_expm(SymMatrix(detail::congruence(r.inv_sqrt, v.matrix())));
  return SpdMatrix::trusted(detail::congruence(r.sqrt, inner.matrix()));
}

/// Y1^{1/2} log(Y1^{-1/2} Y2 Y1^{-1/2}) Y1^{1/2}
inline SymMatrix ai_log(const SpdMatrix& y1, const SpdMatrix& y2) {
  detail::require_same_dim(y1, y2, "ai_log");
  const SqrtPair r = sym_sqrt_pair(y1);
  return SymMatrix(detail::congruence(r.sqrt, detail::whitened_log(r.inv_sqrt, y2, "ai_log")));
}

// ---------------------------------------------------------------------------
// Karcher means

struct KarcherOptions {
  double tolerance = 1e-9;
  int max_iterations = 100;
};

/// Raised when the Affine-Invariant fixed point does not converge. Keeps the
/// last iterate.
class KarcherError : public NumericError {
 public:
  KarcherError(const std::string& what, SpdMatrix last)
      : NumericError(what), last_(std::move(last)) {}
  const SpdMatrix& last_iterate() const noexcept { return last_; }

 private:
  SpdMatrix last_;
};

namespace detail {

inline void require_common_dim(std::span<const SpdMatrix> ys, const char* what) {
  if (ys.empty()) throw DimensionError(std::string(what) + ": empty input");
  for (const auto& y : ys) {
    if (y.dim() != ys.front().dim()) throw DimensionError(std::string(what) + ": mixed dimensions");
  }
}

}  // namespace detail

/// Exact Frechet mean under an EPM: f^{-1}(mean of f(Y_i)).
inline SpdMatrix karcher_mean(std::span<const SpdMatrix> ys, const EpmMetric& m) {
  detail::require_common_dim(ys, "karcher_mean");
  Matrix acc = Matrix::Zero(ys.front().dim(), ys.front().dim());
  for (const auto& y : ys) acc += epm_forward(m, y);
  return epm_inverse(m, acc / static_cast<double>(ys.size()));
}

namespace detail {

/// Karcher iterate mu = F F^T held through a frame F. Tangent vectors are
/// stored in frame coordinates F^{-1} V F^{-T}; moving along the geodesic
/// F exp(t g) F^T with F <- F exp(t g / 2) makes parallel transport the
/// identity on these coordinates, so gradients at successive iterates compare
/// directly.
struct KarcherState {
  Matrix frame;
  Matrix frame_inv;
  Matrix grad;  ///< mean log of the samples, in frame coordinates
  double cost;  ///< mean squared distance
};

inline KarcherState karcher_state(Matrix frame, Matrix frame_inv, std::span<const SpdMatrix> ys) {
  const Index n = frame.rows();
  KarcherState s{std::move(frame), std::move(frame_inv), Matrix::Zero(n, n), 0.0};
  for (const auto& y : ys) {
    const Matrix l = whitened_log(s.frame_inv, y, "karcher_mean");
    s.grad += l;
    s.cost += l.squaredNorm();
  }
  s.grad /= static_cast<double>(ys.size());
  s.cost /= static_cast<double>(ys.size());
  return s;
}

inline SpdMatrix karcher_point(const KarcherState& s) {
  const Matrix m = s.frame * s.frame.transpose();
  return SpdMatrix::trusted(0.5 * (m + m.transpose()));
}

}  // namespace detail

/// Affine-Invariant Karcher mean by Riemannian gradient descent along
///   mu <- exp_mu(t * mean_i log_mu(Y_i)),
/// started from the Log-Euclidean mean. t = 1 is the classical fixed-point
/// iteration, which diverges on widely spread samples and crawls when the
/// cost is strongly curved in some directions. Steps use the Barzilai-Borwein
/// length, halved until the mean squared distance decreases (Armijo rule) or
/// the mean log shrinks by 10%; the latter keeps progress once cost changes
/// fall below rounding. Stops when the Affine-Invariant norm of the mean log
/// falls below the tolerance. Ill-conditioned samples put a rounding floor
/// under the mean log; the iteration also stops when no step down to 2^-40
/// improves anything, or when the mean log has not reached a new minimum in
/// ten iterations, and returns the iterate with the smallest mean log.
inline SpdMatrix karcher_mean(std::span<const SpdMatrix> ys, const AiMetric&,
                              const KarcherOptions& opts = {}) {
  detail::require_common_dim(ys, "karcher_mean");
  if (ys.size() == 1) return ys.front();
  const Index n = ys.front().dim();
  const Matrix l0 = cholesky(karcher_mean(ys, EpmMetric::log_euclidean())).matrix();
  Matrix l0_inv = l0.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  detail::KarcherState cur = detail::karcher_state(l0, std::move(l0_inv), ys);
  detail::KarcherState best = cur;
  double best_step = cur.grad.norm();
  int since_best = 0;
  double t = 1.0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    const double step = cur.grad.norm();
    if (step < opts.tolerance) return detail::karcher_point(cur);
    if (step < best_step) {
      best = cur;
      best_step = step;
      since_best = 0;
    } else if (++since_best >= 10) {
      return detail::karcher_point(best);
    }
    bool moved = false;
    for (double trial = t; trial >= 0x1p-40; trial *= 0.5) {
      const detail::SymEigen e = detail::sym_eigen(cur.grad);
      const Vector half = (0.5 * trial) * e.values;
      const Matrix fwd = detail::reconstruct(e, half.array().exp().matrix());
      const Matrix bwd = detail::reconstruct(e, (-half).array().exp().matrix());
      try {
        detail::KarcherState next = detail::karcher_state(cur.frame * fwd, bwd * cur.frame_inv, ys);
        if (next.cost <= cur.cost - 2e-4 * trial * step * step || next.grad.norm() < 0.9 * step) {
          // Barzilai-Borwein length from the displacement s = trial * g and the
          // change of the (negative half) gradient y = g - g_next.
          const double sy = trial * (cur.grad.squaredNorm() - cur.grad.cwiseProduct(next.grad).sum());
          const double ss = trial * trial * cur.grad.squaredNorm();
          t = sy > 0.0 ? std::clamp(ss / sy, 1e-3, 1e3) : 1.0;
          cur = std::move(next);
          moved = true;
          break;
        }
      } catch (const DomainError&) {
        // The trial point is too far for the whitened samples to stay numerically PD.
      }
    }
    if (!moved) return detail::karcher_point(step < best_step ? cur : best);
  }
  if (cur.grad.norm() < opts.tolerance) return detail::karcher_point(cur);
  throw KarcherError("karcher_mean: no convergence after " + std::to_string(opts.max_iterations) +
                         " iterations (last step " + std::to_string(cur.grad.norm()) + ")",
                     detail::karcher_point(cur));
}

}  // namespace milpr

#endif  // MANIFOLD_ILPR_SPD_HPP
