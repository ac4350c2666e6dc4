#ifndef MANIFOLD_ILPR_BANDWIDTH_HPP
#define MANIFOLD_ILPR_BANDWIDTH_HPP

// Leave-one-out cross-validation bandwidth selection:
//   CV(h) = N^{-1} sum_i dist^2(fit without sample i at X_i, Y_i).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "manifold_ilpr/errors.hpp"
#include "manifold_ilpr/ilpr.hpp"
#include "manifold_ilpr/parallel.hpp"

namespace milpr {

struct GridSpec {
  int points = 20;
  /// Overrides for the grid bounds; default to the median nearest-neighbor
  /// covariate distance and the covariate diameter.
  std::optional<double> h_min;
  std::optional<double> h_max;
  /// Explicit grid; takes precedence over the log-spaced construction.
  std::vector<double> explicit_grid;
  /// Golden-section refinement around the grid minimum.
  bool refine = false;
  int refine_iterations = 20;
  int threads = 1;
};

struct CvResult {
  std::vector<std::pair<double, double>> grid;  ///< (h, score), ascending h
  double best_h = 0.0;
  double best_score = std::numeric_limits<double>::infinity();
};

/// LOOCV score using already-prepared data. Leave-one-out fits that fail
/// (empty neighborhood, intercept outside the isometry image) make the whole
/// score +infinity.
inline double loocv_score(const Smoother& s, const Dataset& data, int degree, double h, double ridge) {
  if (data.size() < 2) throw DimensionError("loocv_score: at least two samples required");
  FitConfig cfg;
  cfg.degree = degree;
  cfg.bandwidth = h;
  cfg.ridge = ridge;
  cfg.validate();
  double total = 0.0;
  for (Index i = 0; i < s.size(); ++i) {
    const Vector& xi = data[static_cast<std::size_t>(i)].x;
    try {
      const SpdMatrix fitted = s.fit(xi, cfg, i);
      const double d = s.distance_to_sample(fitted, i, data);
      total += d * d;
    } catch (const NumericError&) {
      return std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
      return std::numeric_limits<double>::infinity();
    }
  }
  const double score = total / static_cast<double>(s.size());
  return std::isfinite(score) ? score : std::numeric_limits<double>::infinity();
}

inline double loocv_score(const Dataset& data, int degree, double h, const Method& method,
                          double ridge = FitConfig::kDefaultRidge) {
  return loocv_score(Smoother(data, method), data, degree, h, ridge);
}

/// Log-spaced bandwidth grid between the median nearest-neighbor covariate
/// distance and the covariate diameter.
inline std::vector<double> default_bandwidth_grid(const Dataset& data, const GridSpec& spec = {}) {
  if (!spec.explicit_grid.empty()) {
    std::vector<double> g = spec.explicit_grid;
    std::sort(g.begin(), g.end());
    for (double h : g)
      if (!(h > 0.0)) throw DomainError("bandwidth grid entries must be > 0");
    return g;
  }
  const Matrix c = data.covariate_matrix();
  const Index count = c.cols();
  double diameter = 0.0;
  std::vector<double> nearest(static_cast<std::size_t>(count), std::numeric_limits<double>::infinity());
  for (Index i = 0; i < count; ++i) {
    for (Index j = i + 1; j < count; ++j) {
      const double d = (c.col(i) - c.col(j)).norm();
      diameter = std::max(diameter, d);
      nearest[static_cast<std::size_t>(i)] = std::min(nearest[static_cast<std::size_t>(i)], d);
      nearest[static_cast<std::size_t>(j)] = std::min(nearest[static_cast<std::size_t>(j)], d);
    }
  }
  std::vector<double> nn;
  for (double d : nearest)
    if (std::isfinite(d) && d > 0.0) nn.push_back(d);
  double hi = spec.h_max.value_or(diameter);
  double lo = spec.h_min.value_or(0.0);
  if (!spec.h_min && !nn.empty()) {
    std::nth_element(nn.begin(), nn.begin() + static_cast<std::ptrdiff_t>(nn.size() / 2), nn.end());
    lo = nn[nn.size() / 2];
  }
  if (!(hi > 0.0)) hi = 1.0;  // all covariates coincide: every h gives the same fit
  if (!(lo > 0.0) || lo > hi) lo = hi * 1e-2;
  const int points = std::max(1, spec.points);
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(points));
  if (points == 1 || lo == hi) return {hi};
  const double step = std::log(hi / lo) / (points - 1);
  for (int i = 0; i < points; ++i) g.push_back(lo * std::exp(step * i));
  g.back() = hi;
  return g;
}

/// Evaluates the LOOCV score on a grid and returns its argmin (ties go to
/// the smaller bandwidth).
inline CvResult select_bandwidth(const Dataset& data, int degree, const Method& method,
                                 const GridSpec& spec = {}, double ridge = FitConfig::kDefaultRidge) {
  if (data.size() < 2) throw DimensionError("select_bandwidth: at least two samples required");
  const Smoother s(data, method);
  const std::vector<double> hs = default_bandwidth_grid(data, spec);
  std::vector<double> scores(hs.size());
  parallel_for(hs.size(), spec.threads,
               [&](std::size_t i) { scores[i] = loocv_score(s, data, degree, hs[i], ridge); });

  CvResult out;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    out.grid.emplace_back(hs[i], scores[i]);
    if (scores[i] < out.best_score) {
      out.best_score = scores[i];
      out.best_h = hs[i];
    }
  }
  if (!std::isfinite(out.best_score)) {
    throw SelectionError("select_bandwidth: every bandwidth in the grid failed");
  }

  if (spec.refine && hs.size() >= 3) {
    const auto best = static_cast<std::size_t>(
        std::find(hs.begin(), hs.end(), out.best_h) - hs.begin());
    double a = std::log(hs[best == 0 ? 0 : best - 1]);
    double b = std::log(hs[std::min(best + 1, hs.size() - 1)]);
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    auto eval = [&](double log_h) {
      const double h = std::exp(log_h);
      const double sc = loocv_score(s, data, degree, h, ridge);
      out.grid.emplace_back(h, sc);
      if (sc < out.best_score || (sc == out.best_score && h < out.best_h)) {
        out.best_score = sc;
        out.best_h = h;
      }
      return sc;
    };
    double c = b - ratio * (b - a);
    double d = a + ratio * (b - a);
    double fc = eval(c);
    double fd = eval(d);
    for (int it = 0; it < spec.refine_iterations; ++it) {
      if (fc <= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - ratio * (b - a);
        fc = eval(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + ratio * (b - a);
        fd = eval(d);
      }
    }
    std::sort(out.grid.begin(), out.grid.end());
  }
  return out;
}

}  // namespace milpr

#endif  // MANIFOLD_ILPR_BANDWIDTH_HPP
