#ifndef MANIFOLD_ILPR_EMBEDDING_HPP
#define MANIFOLD_ILPR_EMBEDDING_HPP

// Low-dimensional views of SPD data sets: t-SNE driven by pullback distances
// and linearized principal geodesic analysis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/SVD>

#include "manifold_ilpr/errors.hpp"
#include "manifold_ilpr/linalg.hpp"
#include "manifold_ilpr/parallel.hpp"
#include "manifold_ilpr/simulation.hpp"
#include "manifold_ilpr/spd.hpp"

namespace milpr {

/// Pairwise distances of a point cloud stored one point per column.
inline Matrix euclidean_pairwise_distances(const Matrix& points) {
  const Index count = points.cols();
  Matrix d = Matrix::Zero(count, count);
  for (Index i = 0; i < count; ++i)
    for (Index j = i + 1; j < count; ++j) d(i, j) = d(j, i) = (points.col(i) - points.col(j)).norm();
  return d;
}

/// D(i, j) = epm_distance(metric, Y_i, Y_j). The isometry is applied once per
/// matrix and each unordered pair is computed once.
inline Matrix pairwise_epm_distances(std::span<const SpdMatrix> ys, const EpmMetric& metric,
                                     int threads = 1) {
  detail::require_common_dim(ys, "pairwise_epm_distances");
  const Index count = static_cast<Index>(ys.size());
  const Index n = count ? ys.front().dim() : 0;
  Matrix f(n * n, count);
  parallel_for(ys.size(), threads, [&](std::size_t i) {
    f.col(static_cast<Index>(i)) = epm_forward(metric, ys[i]).reshaped();
  });
  Matrix d = Matrix::Zero(count, count);
  parallel_for(ys.size(), threads, [&](std::size_t ii) {
    const auto i = static_cast<Index>(ii);
    for (Index j = i + 1; j < count; ++j) d(i, j) = (f.col(i) - f.col(j)).norm();
  });
  for (Index i = 0; i < count; ++i)
    for (Index j = i + 1; j < count; ++j) d(j, i) = d(i, j);
  return d;
}

// ---------------------------------------------------------------------------
// t-SNE

struct EmbedConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  int exaggeration_iters = 250;
  int out_dim = 2;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate(Index count) const {
    if (!(perplexity > 1.0)) throw DomainError("EmbedConfig: perplexity must be > 1");
    if (!(perplexity < static_cast<double>(count))) {
      throw DomainError("EmbedConfig: perplexity must be smaller than the number of points");
    }
    if (iterations < 1) throw DomainError("EmbedConfig: iterations must be >= 1");
    if (!(learning_rate > 0.0)) throw DomainError("EmbedConfig: learning rate must be > 0");
    if (!(exaggeration >= 1.0)) throw DomainError("EmbedConfig: exaggeration must be >= 1");
    if (exaggeration_iters < 0) throw DomainError("EmbedConfig: exaggeration_iters must be >= 0");
    if (out_dim != 2 && out_dim != 3) throw DomainError("EmbedConfig: out_dim must be 2 or 3");
  }
};

struct Embedding {
  Matrix points;  ///< N x out_dim
  std::vector<double> kl_trace;
  std::vector<std::string> warnings;
};

inline constexpr int kMomentumSwitchIteration = 250;

/// Symmetrized t-SNE input affinities P = (P_{j|i} + P_{i|j}) / 2N, where the
/// Gaussian precision of row i is bisected until the row entropy matches
/// log(perplexity).
inline Matrix tsne_affinities(const Matrix& distances, double perplexity) {
  detail::require_square(distances, "tsne_affinities");
  const Index count = distances.rows();
  if (count < 2) throw DimensionError("tsne_affinities: at least two points required");
  if (!(perplexity > 1.0) || !(perplexity < static_cast<double>(count))) {
    throw DomainError("tsne_affinities: perplexity must lie in (1, N)");
  }
  if (!(distances.cwiseAbs().maxCoeff() > 0.0)) {
    throw EmbeddingError("tsne_affinities: all pairwise distances are zero");
  }
  const double target = std::log(perplexity);
  const Matrix d2 = distances.cwiseAbs2();
  Matrix cond = Matrix::Zero(count, count);
  Vector row(count);
  for (Index i = 0; i < count; ++i) {
    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    // Shift by the nearest neighbor so exp() never underflows for every j.
    double dmin = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < count; ++j)
      if (j != i) dmin = std::min(dmin, d2(i, j));
    for (int step = 0; step < 50; ++step) {
      double sum = 0.0;
      double weighted = 0.0;
      for (Index j = 0; j < count; ++j) {
        row(j) = j == i ? 0.0 : std::exp(-beta * (d2(i, j) - dmin));
        sum += row(j);
        weighted += row(j) * (d2(i, j) - dmin);
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
    cond.row(i) = row.transpose();
  }
  Matrix p = (cond + cond.transpose()) / (2.0 * static_cast<double>(count));
  return p;
}

namespace detail {

inline double kl_divergence(const Matrix& p, const Matrix& num, double num_sum) {
  double kl = 0.0;
  for (Index j = 0; j < p.cols(); ++j)
    for (Index i = 0; i < p.rows(); ++i) {
      if (i == j || p(i, j) <= 0.0) continue;
      const double q = std::max(num(i, j) / num_sum, std::numeric_limits<double>::min());
      kl += p(i, j) * std::log(p(i, j) / q);
    }
  return kl;
}

}  // namespace detail

/// Exact t-SNE on a precomputed distance matrix.
inline Embedding tsne_embed(const Matrix& distances, const EmbedConfig& cfg) {
  const Index count = distances.rows();
  cfg.validate(count);
  Embedding out;
  if (static_cast<double>(count) < 3.0 * cfg.perplexity) {
    out.warnings.push_back("fewer than 3 * perplexity points; affinities will be nearly uniform");
  }
  const Matrix p = tsne_affinities(distances, cfg.perplexity);

  Rng rng = stream_rng(cfg.seed, {0x75eULL, static_cast<std::uint64_t>(count)});
  std::normal_distribution<double> normal(0.0, 1e-2);
  const Index dim = cfg.out_dim;
  Matrix y(count, dim);
  for (Index i = 0; i < count; ++i)
    for (Index k = 0; k < dim; ++k) y(i, k) = normal(rng);

  Matrix update = Matrix::Zero(count, dim);
  Matrix gains = Matrix::Ones(count, dim);
  Matrix grad(count, dim);
  Matrix num(count, count);
  out.kl_trace.reserve(static_cast<std::size_t>(cfg.iterations));

  for (int it = 0; it < cfg.iterations; ++it) {
    const double exag = it < cfg.exaggeration_iters ? cfg.exaggeration : 1.0;
    const double momentum = it < kMomentumSwitchIteration ? 0.5 : 0.8;

    parallel_for(static_cast<std::size_t>(count), cfg.threads, [&](std::size_t ii) {
      const auto i = static_cast<Index>(ii);
      for (Index j = 0; j < count; ++j)
        num(i, j) = i == j ? 0.0 : 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
    });
    const double num_sum = num.sum();
    parallel_for(static_cast<std::size_t>(count), cfg.threads, [&](std::size_t ii) {
      const auto i = static_cast<Index>(ii);
      Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(dim);
      for (Index j = 0; j < count; ++j) {
        if (j == i) continue;
        const double coeff = (exag * p(i, j) - num(i, j) / num_sum) * num(i, j);
        g += coeff * (y.row(i) - y.row(j));
      }
      grad.row(i) = 4.0 * g;
    });
    out.kl_trace.push_back(detail::kl_divergence(p, num, num_sum));

    for (Index i = 0; i < count; ++i)
      for (Index k = 0; k < dim; ++k) {
        const bool same_sign = (grad(i, k) > 0.0) == (update(i, k) > 0.0);
        gains(i, k) = std::max(same_sign ? gains(i, k) * 0.8 : gains(i, k) + 0.2, 0.01);
        update(i, k) = momentum * update(i, k) - cfg.learning_rate * gains(i, k) * grad(i, k);
      }
    y += update;
    y.rowwise() -= y.colwise().mean();
  }
  if (!y.allFinite()) throw EmbeddingError("tsne_embed: optimization diverged");
  out.points = std::move(y);
  return out;
}

/// t-SNE on SPD responses with pullback distances in place of Euclidean ones.
inline Embedding rie_tsne(std::span<const SpdMatrix> ys, const EpmMetric& metric, const EmbedConfig& cfg) {
  return tsne_embed(pairwise_epm_distances(ys, metric, cfg.threads), cfg);
}

// ---------------------------------------------------------------------------
// Linearized PGA

using PgaMetric = std::variant<EpmMetric, AiMetric>;

struct PgaResult {
  Matrix scores;             ///< N x components
  Matrix directions;         ///< ambient dim x components
  Vector explained_variance; ///< fraction of the total squared tangent norm per component
  Matrix tangent;            ///< N x ambient dim, one tangent vector per row
  SpdMatrix base;
};

/// Tangent coordinates of y at base: vech(f(y) - f(base)) for an EPM,
/// vech(Log_base y) for the Affine-Invariant metric.
inline Vector pga_tangent(const PgaMetric& metric, const SpdMatrix& base, const SpdMatrix& y) {
  if (const auto* m = std::get_if<EpmMetric>(&metric)) {
    return vech_lower(epm_forward(*m, y) - epm_forward(*m, base));
  }
  return vech(ai_log(base, y));
}

/// Principal components of the tangent vectors at `base`. Components are the
/// directions of geodesics through the base point, so the tangent vectors are
/// not re-centered; at the Karcher mean of an EPM they already have mean zero.
inline PgaResult linearized_pga(std::span<const SpdMatrix> ys, const SpdMatrix& base,
                                const PgaMetric& metric, Index components) {
  if (ys.size() < 2) throw DimensionError("linearized_pga: at least two responses required");
  detail::require_common_dim(ys, "linearized_pga");
  detail::require_same_dim(ys.front(), base, "linearized_pga");
  const Index ambient = vech_length(base.dim());
  if (components < 1 || components > ambient) {
    throw DimensionError("linearized_pga: components must lie in [1, " + std::to_string(ambient) + "]");
  }
  const auto count = static_cast<Index>(ys.size());
  Matrix t(count, ambient);
  for (Index i = 0; i < count; ++i) t.row(i) = pga_tangent(metric, base, ys[static_cast<std::size_t>(i)]).transpose();

  Eigen::JacobiSVD<Matrix> svd(t, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  // With fewer samples than ambient dimensions the trailing directions are
  // left at zero; they carry no variance.
  const Index avail = std::min(components, svd.matrixV().cols());
  Matrix v = Matrix::Zero(ambient, components);
  for (Index k = 0; k < avail; ++k) {
    v.col(k) = svd.matrixV().col(k);
    Index arg = 0;
    v.col(k).cwiseAbs().maxCoeff(&arg);
    if (v(arg, k) < 0.0) v.col(k) = -v.col(k);
  }
  const double total = sv.squaredNorm();
  Vector explained = Vector::Zero(components);
  for (Index k = 0; k < components && k < sv.size(); ++k) explained(k) = total > 0.0 ? sv(k) * sv(k) / total : 0.0;
  return {t * v, v, explained, t, base};
}

inline PgaResult linearized_pga(std::span<const SpdMatrix> ys, const PgaMetric& metric, Index components) {
  const SpdMatrix base = std::visit([&](const auto& m) { return karcher_mean(ys, m); }, metric);
  return linearized_pga(ys, base, metric, components);
}

}  // namespace milpr

#endif  // MANIFOLD_ILPR_EMBEDDING_HPP
