#ifndef MANIFOLD_ILPR_SIMULATION_HPP
#define MANIFOLD_ILPR_SIMULATION_HPP

// Synthetic SPD regression problems, the Riemannian log-normal noise model,
// Affine-Invariant RMSE, and the Monte Carlo benchmark harness.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "manifold_ilpr/bandwidth.hpp"
#include "manifold_ilpr/errors.hpp"
#include "manifold_ilpr/ilpr.hpp"
#include "manifold_ilpr/linalg.hpp"
#include "manifold_ilpr/parallel.hpp"
#include "manifold_ilpr/spd.hpp"

namespace milpr {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator keyed by (seed, key...). Streams for different keys
/// do not depend on the order in which they are created.
inline Rng stream_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(splitmix64(h)),
                    static_cast<std::uint32_t>(splitmix64(h) >> 32)};
  return Rng(seq);
}

// ---------------------------------------------------------------------------
// Data generators

/// Regression function m(x) with
///   (log m(x))_ii = 1^T x / 2,   (log m(x))_ij = lambda_ij^T x / ||lambda_ij||,
/// lambda_ij = lambda_ji ~ Uniform(0, 1)^p.
class TrueModel {
 public:
  TrueModel(Index p, Index n, std::vector<Vector> lambdas) : p_(p), n_(n), lambdas_(std::move(lambdas)) {
    if (p_ < 1 || n_ < 1) throw DimensionError("TrueModel: p and n must be >= 1");
    if (static_cast<Index>(lambdas_.size()) != n_ * (n_ - 1) / 2) {
      throw DimensionError("TrueModel: expected one direction per off-diagonal pair");
    }
    for (const auto& l : lambdas_) {
      if (l.size() != p_) throw DimensionError("TrueModel: direction has wrong length");
      if (!(l.norm() > 0.0)) throw DomainError("TrueModel: directions must be nonzero");
    }
  }

  static TrueModel draw(Index p, Index n, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Vector> lambdas;
    for (Index k = 0; k < n * (n - 1) / 2; ++k) {
      Vector l(p);
      do {
        for (Index a = 0; a < p; ++a) l(a) = unif(rng);
      } while (!(l.norm() > 0.0));
      lambdas.push_back(std::move(l));
    }
    return TrueModel(p, n, std::move(lambdas));
  }

  Index p() const noexcept { return p_; }
  Index n() const noexcept { return n_; }

  /// Direction for the (i, j) entry; lambda(i, j) and lambda(j, i) are the same vector.
  const Vector& lambda(Index i, Index j) const {
    if (i == j || i < 0 || j < 0 || i >= n_ || j >= n_) throw DimensionError("TrueModel::lambda: bad index");
    const Index a = std::min(i, j);
    const Index b = std::max(i, j);
    // Pairs (a, b), a < b, enumerated row by row.
    const Index k = a * n_ - a * (a + 1) / 2 + (b - a - 1);
    return lambdas_[static_cast<std::size_t>(k)];
  }

  /// log m(x); symmetric by construction.
  SymMatrix log_response(const Vector& x) const {
    if (x.size() != p_) throw DimensionError("TrueModel: covariate has wrong dimension");
    Matrix s(n_, n_);
    for (Index i = 0; i < n_; ++i) {
      s(i, i) = x.sum() / 2.0;
      for (Index j = i + 1; j < n_; ++j) {
        const Vector& l = lambda(i, j);
        s(i, j) = s(j, i) = l.dot(x) / l.norm();
      }
    }
    return SymMatrix(s);
  }

 private:
  Index p_;
  Index n_;
  std::vector<Vector> lambdas_;
};

inline SpdMatrix true_response(const TrueModel& model, const Vector& x) {
  return sym_expm(model.log_response(x));
}

/// N i.i.d. standard normal p-vectors.
inline std::vector<Vector> gen_covariates(std::size_t count, Index p, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vector x(p);
    for (Index a = 0; a < p; ++a) x(a) = normal(rng);
    out.push_back(std::move(x));
  }
  return out;
}

/// Riemannian log-normal noise: L exp(E) L^T with L = chol(Y) and
/// E = vech^{-1}(N(0, sigma^2 I)). Always draws n(n+1)/2 normals, so the
/// stream advances identically for every sigma.
inline SpdMatrix add_lognormal_noise(const SpdMatrix& y, double sigma, Rng& rng) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("add_lognormal_noise: sigma must be >= 0");
  const Matrix l = cholesky(y).matrix();
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector e(vech_length(y.dim()));
  for (Index k = 0; k < e.size(); ++k) e(k) = sigma * normal(rng);
  if (sigma == 0.0) return y;
  const Matrix ex = sym_expm(vech_inv(e)).matrix();
  return SpdMatrix::trusted(l * ex * l.transpose());
}

/// sqrt(mean_i dist_AI^2(estimate_i, truth_i))
inline double rmse_ai(std::span<const SpdMatrix> estimates, std::span<const SpdMatrix> truths) {
  if (estimates.size() != truths.size()) throw DimensionError("rmse_ai: length mismatch");
  if (estimates.empty()) throw DimensionError("rmse_ai: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double d = ai_distance(estimates[i], truths[i]);
    total += d * d;
  }
  return std::sqrt(total / static_cast<double>(estimates.size()));
}

// ---------------------------------------------------------------------------
// Monte Carlo benchmark

enum class MethodId { IlprLogCholesky, IlprLogEuclidean, ExtrinsicAi };

inline std::string to_string(MethodId m) {
  switch (m) {
    case MethodId::IlprLogCholesky: return "ilpr-lc";
    case MethodId::IlprLogEuclidean: return "ilpr-le";
    case MethodId::ExtrinsicAi: return "extrinsic-ai";
  }
  return "unknown";
}

inline MethodId parse_method_id(std::string_view s) {
  if (s == "ilpr-lc") return MethodId::IlprLogCholesky;
  if (s == "ilpr-le") return MethodId::IlprLogEuclidean;
  if (s == "extrinsic-ai") return MethodId::ExtrinsicAi;
  throw DomainError("unknown method '" + std::string(s) + "' (expected ilpr-lc, ilpr-le, extrinsic-ai)");
}

inline Method to_method(MethodId m) {
  switch (m) {
    case MethodId::IlprLogCholesky: return EpmMetric::log_cholesky();
    case MethodId::IlprLogEuclidean: return EpmMetric::log_euclidean();
    case MethodId::ExtrinsicAi: return ExtrinsicAi{ReferencePoint::KarcherMean};
  }
  throw DomainError("unknown method");
}

struct McConfig {
  std::vector<std::pair<int, int>> grid{{1, 3}};  ///< (p, n) cells
  int realizations = 20;
  int num_samples = 100;
  double sigma = 0.5;
  std::uint64_t seed = 1;
  std::vector<MethodId> methods{MethodId::IlprLogCholesky, MethodId::IlprLogEuclidean,
                                MethodId::ExtrinsicAi};
  int degree = 1;
  double ridge = FitConfig::kDefaultRidge;
  GridSpec cv;
  /// Count bandwidth selection in fit_seconds.
  bool time_includes_cv = false;
  int threads = 1;

  /// Desk-scale default grid: p in [1, 2], n in [3, 10].
  static std::vector<std::pair<int, int>> desk_grid() { return make_grid(1, 2, 3, 10); }
  /// Full grid: p in [1, 6], n in [3, 18].
  static std::vector<std::pair<int, int>> full_grid() { return make_grid(1, 6, 3, 18); }

  static std::vector<std::pair<int, int>> make_grid(int pmin, int pmax, int nmin, int nmax) {
    std::vector<std::pair<int, int>> g;
    for (int p = pmin; p <= pmax; ++p)
      for (int n = nmin; n <= nmax; ++n) g.emplace_back(p, n);
    return g;
  }

  void validate() const {
    if (realizations < 1) throw DomainError("McConfig: realizations must be >= 1");
    if (!(sigma >= 0.0)) throw DomainError("McConfig: sigma must be >= 0");
    if (num_samples < 2) throw DomainError("McConfig: at least two samples per realization");
    if (methods.empty()) throw DomainError("McConfig: no methods selected");
    if (degree < 0) throw DomainError("McConfig: degree must be >= 0");
    for (auto [p, n] : grid)
      if (p < 1 || n < 1) throw DomainError("McConfig: grid cells need p, n >= 1");
  }
};

struct McRow {
  int p = 0;
  int n = 0;
  std::string method;
  int realization = 0;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double fit_seconds = 0.0;
  double h_selected = std::numeric_limits<double>::quiet_NaN();
  std::string error;  ///< empty on success
};

using McReport = std::vector<McRow>;

/// One simulated regression problem.
struct Realization {
  TrueModel model;
  std::vector<Vector> covariates;
  std::vector<SpdMatrix> truth;
  std::vector<SpdMatrix> noisy;
};

inline Realization simulate_realization(int p, int n, int num_samples, double sigma, Rng& rng) {
  TrueModel model = TrueModel::draw(p, n, rng);
  // Covariates and noise come from separate child streams, so the first m
  // samples do not depend on num_samples and larger designs extend smaller ones.
  const std::uint64_t base = rng();
  Rng covariate_rng = stream_rng(base, {0});
  Rng noise_rng = stream_rng(base, {1});
  auto xs = gen_covariates(static_cast<std::size_t>(num_samples), p, covariate_rng);
  std::vector<SpdMatrix> truth;
  std::vector<SpdMatrix> noisy;
  truth.reserve(xs.size());
  noisy.reserve(xs.size());
  for (const auto& x : xs) truth.push_back(true_response(model, x));
  for (const auto& y : truth) noisy.push_back(add_lognormal_noise(y, sigma, noise_rng));
  return {std::move(model), std::move(xs), std::move(truth), std::move(noisy)};
}

/// Generator stream of realization r in cell (p, n).
inline Rng realization_rng(std::uint64_t seed, int p, int n, int r) {
  return stream_rng(seed, {static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(n),
                           static_cast<std::uint64_t>(r)});
}

/// Fitted values of every method on one realization. Failures become rows
/// with NaN rmse and an error tag.
inline std::vector<McRow> run_realization(int p, int n, const McConfig& cfg, int realization) {
  using Clock = std::chrono::steady_clock;
  std::vector<McRow> rows;
  auto blank = [&](MethodId m) {
    McRow r;
    r.p = p;
    r.n = n;
    r.method = to_string(m);
    r.realization = realization;
    return r;
  };

  Rng rng = realization_rng(cfg.seed, p, n, realization);
  std::optional<Realization> sim;
  try {
    sim = simulate_realization(p, n, cfg.num_samples, cfg.sigma, rng);
  } catch (const Error& e) {
    for (MethodId m : cfg.methods) {
      McRow r = blank(m);
      r.error = std::string("data generation failed: ") + e.what();
      rows.push_back(std::move(r));
    }
    return rows;
  }

  for (MethodId m : cfg.methods) {
    McRow row = blank(m);
    try {
      const Dataset data(sim->covariates, sim->noisy);
      const Method method = to_method(m);
      GridSpec cv = cfg.cv;
      cv.threads = 1;
      const auto t0 = Clock::now();
      const CvResult sel = select_bandwidth(data, cfg.degree, method, cv, cfg.ridge);
      const auto t1 = Clock::now();
      FitConfig fc;
      fc.degree = cfg.degree;
      fc.bandwidth = sel.best_h;
      fc.ridge = cfg.ridge;
      const auto estimates = fit_all(data, sim->covariates, fc, method);
      const auto t2 = Clock::now();
      row.h_selected = sel.best_h;
      row.fit_seconds = std::chrono::duration<double>(t2 - (cfg.time_includes_cv ? t0 : t1)).count();
      row.rmse = rmse_ai(estimates, sim->truth);
    } catch (const Error& e) {
      row.rmse = std::numeric_limits<double>::quiet_NaN();
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct McProgress {
  std::size_t completed = 0;
  std::size_t total = 0;
  int p = 0;
  int n = 0;
  int realization = 0;
};

inline void sort_report(McReport& report) {
  std::sort(report.begin(), report.end(), [](const McRow& a, const McRow& b) {
    return std::tie(a.p, a.n, a.method, a.realization) < std::tie(b.p, b.n, b.method, b.realization);
  });
}

/// Every (cell, realization) of the configuration, run on cfg.threads
/// workers. Rows are sorted by (p, n, method, realization).
inline McReport run_monte_carlo(const McConfig& cfg,
                                const std::function<void(const McProgress&)>& progress = {}) {
  cfg.validate();
  struct Task {
    int p, n, r;
  };
  std::vector<Task> tasks;
  for (auto [p, n] : cfg.grid)
    for (int r = 0; r < cfg.realizations; ++r) tasks.push_back({p, n, r});

  std::vector<std::vector<McRow>> slots(tasks.size());
  std::mutex progress_mutex;
  std::size_t done = 0;
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    slots[i] = run_realization(tasks[i].p, tasks[i].n, cfg, tasks[i].r);
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress({++done, tasks.size(), tasks[i].p, tasks[i].n, tasks[i].r});
    }
  });

  McReport report;
  for (auto& s : slots)
    for (auto& r : s) report.push_back(std::move(r));
  sort_report(report);
  return report;
}

// ---------------------------------------------------------------------------
// Bias scaling

enum class BiasModel { Linear, Quadratic };

struct BiasOptions {
  BiasModel model = BiasModel::Quadratic;
  int replications = 2000;
  double sigma = 0.5;
  /// Scale c of the f-coordinate model c * q(1^T x) * A.
  double scale = 4.0;
  double ridge = 0.0;
};

struct BiasPoint {
  double h = 0.0;
  double bias_norm = 0.0;    ///< || mean over replications of beta0 - f(m(x0)) ||_F
  double noise_floor = 0.0;  ///< standard error of that mean (Frobenius)
};

struct BiasReport {
  std::vector<BiasPoint> points;
  double slope = 0.0;  ///< least-squares slope of log bias_norm against log h
};

/// Conditional bias of the local linear Log-Euclidean estimator at x0 = 0.
///
/// Covariates are drawn once; responses follow log m(x) = c q(1^T x) A with
/// q(t) = t or t^2 and A fixed symmetric, and are re-noised in every
/// replication. For the quadratic model the leading bias term grows like h^2.
inline BiasReport bias_scaling_experiment(Index n, Index p, std::span<const double> h_list,
                                          std::size_t n_large, std::uint64_t seed,
                                          const BiasOptions& opts = {}) {
  if (h_list.empty()) throw DimensionError("bias_scaling_experiment: empty bandwidth list");
  if (opts.replications < 2) throw DomainError("bias_scaling_experiment: need >= 2 replications");
  Rng rng = stream_rng(seed, {0xb1a5ULL, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(p)});
  const auto xs = gen_covariates(n_large, p, rng);

  Matrix a = Matrix::Constant(n, n, 0.5);
  a.diagonal().setOnes();
  auto f_model = [&](const Vector& x) -> Matrix {
    const double t = x.sum();
    return opts.scale * (opts.model == BiasModel::Quadratic ? t * t : t) * a;
  };
  std::vector<SpdMatrix> truth;
  truth.reserve(xs.size());
  for (const auto& x : xs) truth.push_back(sym_expm(SymMatrix(f_model(x))));

  const Vector x0 = Vector::Zero(p);
  const Matrix target = f_model(x0);
  const Dataset design_data(xs, truth);
  const Matrix cov = design_data.covariate_matrix();

  std::vector<Vector> weights;
  for (double h : h_list) {
    FitConfig cfg;
    cfg.degree = 1;
    cfg.bandwidth = h;
    cfg.ridge = opts.ridge;
    weights.push_back(local_weights(detail::build_design(cov, x0, cfg), opts.ridge));
  }

  const EpmMetric le = EpmMetric::log_euclidean();
  const Index d = n * n;
  std::vector<Vector> sum(h_list.size(), Vector::Zero(d));
  std::vector<Vector> sum_sq(h_list.size(), Vector::Zero(d));
  Matrix coords(d, static_cast<Index>(xs.size()));
  for (int rep = 0; rep < opts.replications; ++rep) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const SpdMatrix y = add_lognormal_noise(truth[i], opts.sigma, rng);
      coords.col(static_cast<Index>(i)) = epm_forward(le, y).reshaped();
    }
    for (std::size_t k = 0; k < h_list.size(); ++k) {
      const Vector dev = coords * weights[k] - target.reshaped();
      sum[k] += dev;
      sum_sq[k] += dev.cwiseAbs2();
    }
  }

  BiasReport out;
  const double reps = opts.replications;
  for (std::size_t k = 0; k < h_list.size(); ++k) {
    const Vector mean = sum[k] / reps;
    const Vector var = (sum_sq[k] / reps - mean.cwiseAbs2()) * (reps / (reps - 1.0));
    out.points.push_back({h_list[k], mean.norm(), std::sqrt(var.cwiseMax(0.0).sum() / reps)});
  }
  if (out.points.size() >= 2) {
    double mx = 0, my = 0;
    for (const auto& pt : out.points) {
      mx += std::log(pt.h);
      my += std::log(pt.bias_norm);
    }
    mx /= static_cast<double>(out.points.size());
    my /= static_cast<double>(out.points.size());
    double sxy = 0, sxx = 0;
    for (const auto& pt : out.points) {
      sxy += (std::log(pt.h) - mx) * (std::log(pt.bias_norm) - my);
      sxx += (std::log(pt.h) - mx) * (std::log(pt.h) - mx);
    }
    out.slope = sxx > 0 ? sxy / sxx : 0.0;
  }
  return out;
}

}  // namespace milpr

#endif  // MANIFOLD_ILPR_SIMULATION_HPP
