#ifndef MANIFOLD_ILPR_ILPR_HPP
#define MANIFOLD_ILPR_ILPR_HPP

// Intrinsic local polynomial regression with SPD responses.
//
// For a Euclidean pullback metric with isometry f the estimator at x is
//
//   beta0 = sum_i l_i f(Y_i),   l = W X^T (X W X^T + lambda^2 I)^- e0,
//   alpha0 = f^{-1}(beta0),
//
// where column i of X stacks the Kronecker powers (X_i - x)^{(x)j}, j = 0..k,
// and W holds the kernel weights. The extrinsic Affine-Invariant baseline runs
// the same Euclidean smoother on vech(log_R(Y_i)) at a reference point R and
// maps the result back with exp_R.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "manifold_ilpr/errors.hpp"
#include "manifold_ilpr/linalg.hpp"
#include "manifold_ilpr/spd.hpp"

namespace milpr {

struct Sample {
  Vector x;
  SpdMatrix y;
};

/// Covariate/response pairs sharing the covariate dimension p and the
/// manifold dimension n.
class Dataset {
 public:
  Dataset() = default;

  explicit Dataset(std::vector<Sample> samples) : samples_(std::move(samples)) {
    if (samples_.empty()) throw DimensionError("Dataset: at least one sample required");
    p_ = samples_.front().x.size();
    n_ = samples_.front().y.dim();
    for (const auto& s : samples_) {
      if (s.x.size() != p_) throw DimensionError("Dataset: inconsistent covariate dimension");
      if (s.y.dim() != n_) throw DimensionError("Dataset: inconsistent response dimension");
    }
    if (p_ < 1 || n_ < 1) throw DimensionError("Dataset: empty covariates or responses");
  }

  Dataset(std::span<const Vector> xs, std::span<const SpdMatrix> ys)
      : Dataset(zip(xs, ys)) {}

  Index n() const noexcept { return n_; }
  Index p() const noexcept { return p_; }
  std::size_t size() const noexcept { return samples_.size(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<Sample>& samples() const noexcept { return samples_; }

  std::vector<SpdMatrix> responses() const {
    std::vector<SpdMatrix> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.y);
    return out;
  }

  std::vector<Vector> covariates() const {
    std::vector<Vector> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.x);
    return out;
  }

  /// Covariates as a p x N matrix.
  Matrix covariate_matrix() const {
    Matrix m(p_, static_cast<Index>(samples_.size()));
    for (std::size_t i = 0; i < samples_.size(); ++i) m.col(static_cast<Index>(i)) = samples_[i].x;
    return m;
  }

 private:
  static std::vector<Sample> zip(std::span<const Vector> xs, std::span<const SpdMatrix> ys) {
    if (xs.size() != ys.size()) throw DimensionError("Dataset: covariate/response count mismatch");
    std::vector<Sample> out;
    out.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({xs[i], ys[i]});
    return out;
  }

  std::vector<Sample> samples_;
  Index n_ = 0;
  Index p_ = 0;
};

enum class KernelKind { Gaussian };

struct FitConfig {
  static constexpr double kDefaultRidge = 1e-3;

  int degree = 1;
  double bandwidth = 1.0;
  KernelKind kernel = KernelKind::Gaussian;
  /// Tikhonov parameter; lambda^2 is added to the diagonal of X W X^T.
  /// Zero switches to the minimum-norm generalized inverse.
  double ridge = kDefaultRidge;

  void validate() const {
    if (degree < 0) throw DomainError("FitConfig: degree must be >= 0");
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw DomainError("FitConfig: bandwidth must be > 0");
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw DomainError("FitConfig: ridge must be >= 0");
  }
};

/// Unnormalized Gaussian kernel exp(-||u||^2 / (2 h^2)). The normalizing
/// constant cancels in every estimator built on it.
inline double gaussian_kernel(const Vector& u, double h) {
  if (!(h > 0.0)) throw DomainError("gaussian_kernel: bandwidth must be > 0");
  return std::exp(-u.squaredNorm() / (2.0 * h * h));
}

inline double kernel_weight(KernelKind kind, const Vector& u, double h) {
  switch (kind) {
    case KernelKind::Gaussian: return gaussian_kernel(u, h);
  }
  return 0.0;
}

/// sum_{j=0}^{k} p^j
inline Index design_height(Index p, int degree) {
  Index total = 0;
  Index term = 1;
  for (int j = 0; j <= degree; ++j) {
    total += term;
    term *= p;
  }
  return total;
}

/// Local design at a query point.
struct DesignSystem {
  Matrix x;        ///< (sum_j p^j) x N, column i stacks (X_i - x)^{(x)j}
  Vector weights;  ///< diagonal of W
  Vector e0;       ///< first canonical basis vector
};

/// Total kernel mass below which a query point has no neighborhood.
inline constexpr double kEmptyNeighborhoodMass = 1e-300;

namespace detail {

inline DesignSystem build_design(const Matrix& covariates, const Vector& x, const FitConfig& cfg,
                                 std::optional<Index> exclude = std::nullopt) {
  cfg.validate();
  if (x.size() != covariates.rows()) {
    throw DimensionError("build_design: query has dimension " + std::to_string(x.size()) +
                         ", covariates have " + std::to_string(covariates.rows()));
  }
  const Index n_samples = covariates.cols();
  const Index height = design_height(covariates.rows(), cfg.degree);
  DesignSystem d;
  d.x.resize(height, n_samples);
  d.weights.resize(n_samples);
  for (Index i = 0; i < n_samples; ++i) {
    const Vector u = covariates.col(i) - x;
    Index row = 0;
    Vector power = Vector::Ones(1);
    for (int j = 0; j <= cfg.degree; ++j) {
      if (j > 0) power = kron(u, power);
      d.x.col(i).segment(row, power.size()) = power;
      row += power.size();
    }
    d.weights(i) = (exclude && *exclude == i) ? 0.0 : kernel_weight(cfg.kernel, u, cfg.bandwidth);
  }
  d.e0 = Vector::Zero(height);
  d.e0(0) = 1.0;
  return d;
}

inline void require_neighborhood(const DesignSystem& d) {
  if (!(d.weights.sum() >= kEmptyNeighborhoodMass)) {
    throw EmptyNeighborhoodError("no sample carries kernel weight at the query point");
  }
}

/// Kernel weights rescaled to unit mass. The estimator is invariant to this
/// scaling when lambda = 0; with lambda > 0 it makes the ridge a relative
/// regularizer that does not depend on the kernel's normalizing constant.
inline Vector unit_mass_weights(const DesignSystem& d) { return d.weights / d.weights.sum(); }

/// (X W X^T + lambda^2 I)^{-1} applied to `rhs`, with W at unit mass.
inline Matrix gram_solve(const DesignSystem& d, const Vector& w, double ridge, const Matrix& rhs) {
  const Matrix gram = d.x * w.asDiagonal() * d.x.transpose();
  return ridge_solve(gram, ridge, rhs);
}

/// Smoother matrix W X^T (X W X^T)^+ for lambda = 0, written as
/// W^{1/2} (A^+)^T with A = W^{1/2} X^T so the Gram matrix is never formed.
///
/// Kernel weights routinely span hundreds of orders of magnitude, so A is
/// strongly graded by rows. Its rank equals that of the unweighted design
/// restricted to samples with positive weight, which is what decides between
/// an exact solve and the minimum-norm fallback. The full-rank case uses
/// column-pivoted Householder QR on rows sorted by decreasing weight, which
/// stays accurate on graded least-squares problems where a truncated
/// pseudo-inverse would drop the lightly weighted rows.
inline Matrix pinv_smoother(const DesignSystem& d, const Vector& w) {
  const Index q = d.x.rows();
  std::vector<Index> support;
  for (Index i = 0; i < w.size(); ++i) {
    if (w(i) > 0.0) support.push_back(i);
  }
  std::stable_sort(support.begin(), support.end(), [&](Index a, Index b) { return w(a) > w(b); });
  const auto m = static_cast<Index>(support.size());

  Matrix xs(m, q);
  for (Index k = 0; k < m; ++k) xs.row(k) = d.x.col(support[static_cast<std::size_t>(k)]).transpose();
  const Eigen::CompleteOrthogonalDecomposition<Matrix> rank_check(xs);

  Matrix out = Matrix::Zero(w.size(), q);
  if (rank_check.rank() < q) {
    const Vector sw = w.cwiseSqrt();
    const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(sw.asDiagonal() * d.x.transpose());
    return sw.asDiagonal() * cod.pseudoInverse().transpose();
  }

  Vector sw(m);
  for (Index k = 0; k < m; ++k) sw(k) = std::sqrt(w(support[static_cast<std::size_t>(k)]));
  const Eigen::ColPivHouseholderQR<Matrix> qr(sw.asDiagonal() * xs);
  // A P = Q R, so (A^+)^T = Q [R^{-T} P^T; 0].
  const Matrix pt = qr.colsPermutation().transpose() * Matrix::Identity(q, q);
  Matrix v = Matrix::Zero(m, q);
  v.topRows(q) = qr.matrixR().topLeftCorner(q, q).triangularView<Eigen::Upper>().transpose().solve(pt);
  const Matrix at = qr.householderQ() * v;
  for (Index k = 0; k < m; ++k) out.row(support[static_cast<std::size_t>(k)]) = sw(k) * at.row(k);
  return out;
}

}  // namespace detail

/// Design matrix and kernel weights of `data` at `x`.
inline DesignSystem build_design(const Dataset& data, const Vector& x, const FitConfig& cfg) {
  return detail::build_design(data.covariate_matrix(), x, cfg);
}

/// Smoother weights l = W X^T (X W X^T + lambda^2 I)^- e0 with W at unit
/// mass, so that the fitted intercept is sum_i l_i z_i for responses z_i.
inline Vector local_weights(const DesignSystem& d, double ridge) {
  detail::require_neighborhood(d);
  const Vector w = detail::unit_mass_weights(d);
  if (ridge == 0.0) return detail::pinv_smoother(d, w).col(0);
  const Vector u = detail::gram_solve(d, w, ridge, d.e0).col(0);
  return w.asDiagonal() * (d.x.transpose() * u);
}

/// Full smoother matrix W X^T (X W X^T + lambda^2 I)^-, N x (sum_j p^j).
/// Column r maps responses to the r-th local polynomial coefficient.
inline Matrix lpr_coefficients(const DesignSystem& d, double ridge) {
  detail::require_neighborhood(d);
  const Index h = d.x.rows();
  const Vector w = detail::unit_mass_weights(d);
  if (ridge == 0.0) return detail::pinv_smoother(d, w);
  const Matrix inv = detail::gram_solve(d, w, ridge, Matrix::Identity(h, h));
  return w.asDiagonal() * (d.x.transpose() * inv);
}

// ---------------------------------------------------------------------------
// Estimators

/// Where the extrinsic Affine-Invariant baseline linearizes the manifold.
enum class ReferencePoint { KarcherMean, Identity };

struct ExtrinsicAi {
  ReferencePoint reference = ReferencePoint::KarcherMean;
  friend bool operator==(const ExtrinsicAi&, const ExtrinsicAi&) = default;
};

/// A regression method: intrinsic under an EPM, or extrinsic Affine-Invariant.
using Method = std::variant<EpmMetric, ExtrinsicAi>;

inline std::string method_name(const Method& m) {
  if (const auto* e = std::get_if<EpmMetric>(&m)) return "ilpr-" + to_string(e->kind());
  const auto& ai = std::get<ExtrinsicAi>(m);
  return ai.reference == ReferencePoint::KarcherMean ? "extrinsic-ai" : "extrinsic-ai-identity";
}

/// Data prepared once for repeated fits: the covariates, each response in
/// the Euclidean coordinates of the method, and the map back to SPD.
///
/// Coordinates are vec(f(Y_i)) (column-major, n^2 entries) for an EPM and
/// vech(log_R(Y_i)) for the extrinsic method. The extrinsic reference point
/// is computed once here over the full dataset.
class Smoother {
 public:
  Smoother(const Dataset& data, Method method)
      : method_(std::move(method)), covariates_(data.covariate_matrix()), n_(data.n()) {
    const Index count = static_cast<Index>(data.size());
    if (const auto* m = std::get_if<EpmMetric>(&method_)) {
      coords_.resize(n_ * n_, count);
      for (Index i = 0; i < count; ++i) {
        const Matrix f = epm_forward(*m, data[static_cast<std::size_t>(i)].y);
        coords_.col(i) = f.reshaped();
      }
    } else {
      const auto& ai = std::get<ExtrinsicAi>(method_);
      const auto ys = data.responses();
      reference_ = ai.reference == ReferencePoint::KarcherMean ? karcher_mean(ys, AiMetric{})
                                                               : SpdMatrix::identity(n_);
      ref_sqrt_ = sym_sqrt_pair(*reference_);
      coords_.resize(vech_length(n_), count);
      for (Index i = 0; i < count; ++i) {
        coords_.col(i) = vech(log_at_reference(ys[static_cast<std::size_t>(i)]));
      }
    }
  }

  const Method& method() const noexcept { return method_; }
  Index n() const noexcept { return n_; }
  Index size() const noexcept { return covariates_.cols(); }
  const Matrix& covariates() const noexcept { return covariates_; }
  /// One column per sample.
  const Matrix& coordinates() const noexcept { return coords_; }
  /// Reference point of the extrinsic method; empty for EPMs.
  const std::optional<SpdMatrix>& reference() const noexcept { return reference_; }

  DesignSystem design(const Vector& x, const FitConfig& cfg,
                      std::optional<Index> exclude = std::nullopt) const {
    return detail::build_design(covariates_, x, cfg, exclude);
  }

  /// Smoother weights at x; an excluded sample gets zero kernel weight,
  /// which is the same as removing it from the dataset.
  Vector weights(const Vector& x, const FitConfig& cfg,
                 std::optional<Index> exclude = std::nullopt) const {
    return local_weights(design(x, cfg, exclude), cfg.ridge);
  }

  /// Fitted intercept in method coordinates.
  Vector combine(const Vector& w) const { return coords_ * w; }

  /// Maps method coordinates back to SPD. NumericError if they fall outside
  /// the codomain of the inverse map.
  SpdMatrix back_map(const Vector& coord) const {
    try {
      if (const auto* m = std::get_if<EpmMetric>(&method_)) {
        return epm_inverse(*m, coord.reshaped(n_, n_));
      }
      const SymMatrix v = vech_inv(coord);
      const Matrix inner = detail::congruence(ref_sqrt_.inv_sqrt, v.matrix());
      return SpdMatrix::trusted(
          detail::congruence(ref_sqrt_.sqrt, sym_expm(SymMatrix(inner)).matrix()));
    } catch (const DomainError& e) {
      throw NumericError(std::string("fitted intercept outside the image of the isometry: ") + e.what());
    }
  }

  SpdMatrix fit(const Vector& x, const FitConfig& cfg,
                std::optional<Index> exclude = std::nullopt) const {
    return back_map(combine(weights(x, cfg, exclude)));
  }

  /// Distance in the geometry the method is evaluated in: the intrinsic
  /// pullback distance for an EPM, the Affine-Invariant distance otherwise.
  double distance(const SpdMatrix& a, const SpdMatrix& b) const {
    if (const auto* m = std::get_if<EpmMetric>(&method_)) return epm_distance(*m, a, b);
    return ai_distance(a, b);
  }

  /// Distance between a fitted value and sample i, reusing cached coordinates.
  double distance_to_sample(const SpdMatrix& fitted, Index i, const Dataset& data) const {
    if (const auto* m = std::get_if<EpmMetric>(&method_)) {
      return (epm_forward(*m, fitted).reshaped() - coords_.col(i)).norm();
    }
    return ai_distance(fitted, data[static_cast<std::size_t>(i)].y);
  }

 private:
  SymMatrix log_at_reference(const SpdMatrix& y) const {
    const Matrix l = detail::whitened_log(ref_sqrt_.inv_sqrt, y, "extrinsic-ai");
    return SymMatrix(detail::congruence(ref_sqrt_.sqrt, l));
  }

  Method method_;
  Matrix covariates_;
  Index n_;
  Matrix coords_;
  std::optional<SpdMatrix> reference_;
  SqrtPair ref_sqrt_;
};

/// Result of an intrinsic fit under an EPM.
struct EpmFit {
  SpdMatrix alpha0;
  /// Local polynomial coefficients in f-coordinates: one n x n matrix per
  /// design row, so that f(Y_i) ~ sum_r X(r, i) * beta[r]. beta[0] is beta0.
  std::vector<Matrix> beta;
};

/// Closed-form intrinsic local polynomial estimator at x under `metric`.
inline EpmFit ilpr_epm_fit(const Dataset& data, const Vector& x, const FitConfig& cfg,
                           const EpmMetric& metric) {
  const Smoother s(data, metric);
  const DesignSystem d = s.design(x, cfg);
  const Matrix coef = lpr_coefficients(d, cfg.ridge);
  const Matrix blocks = s.coordinates() * coef;
  EpmFit out;
  out.beta.reserve(static_cast<std::size_t>(blocks.cols()));
  for (Index r = 0; r < blocks.cols(); ++r) out.beta.push_back(blocks.col(r).reshaped(s.n(), s.n()));
  out.alpha0 = s.back_map(s.combine(local_weights(d, cfg.ridge)));
  return out;
}

/// Assembles the degree-j coefficient block in the n x (n p^j) layout for
/// which the fitted polynomial term reads beta_j (I_n (x) (X - x)^{(x)j}).
inline Matrix beta_block(const EpmFit& fit, int j, Index p) {
  if (fit.beta.empty()) throw DimensionError("beta_block: empty fit");
  const Index n = fit.beta.front().rows();
  Index offset = 0;
  Index width = 1;
  for (int t = 0; t < j; ++t) {
    offset += width;
    width *= p;
  }
  if (offset + width > static_cast<Index>(fit.beta.size())) {
    throw DimensionError("beta_block: degree exceeds the fitted degree");
  }
  Matrix out(n, n * width);
  for (Index c = 0; c < n; ++c)
    for (Index l = 0; l < width; ++l)
      out.col(c * width + l) = fit.beta[static_cast<std::size_t>(offset + l)].col(c);
  return out;
}

/// Extrinsic Affine-Invariant local polynomial estimator at x.
inline SpdMatrix extrinsic_ai_fit(const Dataset& data, const Vector& x, const FitConfig& cfg,
                                  ReferencePoint ref = ReferencePoint::KarcherMean) {
  return Smoother(data, ExtrinsicAi{ref}).fit(x, cfg);
}

/// Fit of any method at a single query point.
inline SpdMatrix fit_at(const Dataset& data, const Vector& x, const FitConfig& cfg,
                        const Method& method) {
  return Smoother(data, method).fit(x, cfg);
}

/// Fits at every query point, preparing the data once.
inline std::vector<SpdMatrix> fit_all(const Dataset& data, std::span<const Vector> queries,
                                      const FitConfig& cfg, const Method& method) {
  const Smoother s(data, method);
  std::vector<SpdMatrix> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(s.fit(q, cfg));
  return out;
}

}  // namespace milpr

#endif  // MANIFOLD_ILPR_ILPR_HPP
