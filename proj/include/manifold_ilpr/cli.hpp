#ifndef MANIFOLD_ILPR_CLI_HPP
#define MANIFOLD_ILPR_CLI_HPP

// The `manifold_ilpr` command line: simulate, fit, benchmark, embed.
// run() is callable in-process so the test suite can drive it directly.
//
// Exit codes: 0 success, 1 usage, 2 I/O, 3 parse, 4 data domain, 5 numeric.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "manifold_ilpr/bandwidth.hpp"
#include "manifold_ilpr/embedding.hpp"
#include "manifold_ilpr/errors.hpp"
#include "manifold_ilpr/ilpr.hpp"
#include "manifold_ilpr/io.hpp"
#include "manifold_ilpr/parallel.hpp"
#include "manifold_ilpr/simulation.hpp"
#include "manifold_ilpr/spd.hpp"

#ifndef MANIFOLD_ILPR_VERSION
#define MANIFOLD_ILPR_VERSION "0.0.0"
#endif

namespace milpr::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kParse = 3, kData = 4, kNumeric = 5 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (dynamic_cast<const ParseError*>(&e)) return kParse;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e))
    return kData;
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  return kNumeric;
}

/// Method names accepted by `fit --metric`.
inline Method parse_fit_method(const std::string& name, double tau) {
  if (name == "extrinsic-ai") return ExtrinsicAi{ReferencePoint::KarcherMean};
  const EpmKind kind = parse_epm_kind(name);
  return kind == EpmKind::PowerEuclidean ? EpmMetric(kind, tau) : EpmMetric(kind);
}

/// Parses "pmin:pmax,nmin:nmax"; a single number stands for a one-point range.
inline std::vector<std::pair<int, int>> parse_grid(const std::string& spec) {
  auto range = [&](const std::string& part) -> std::pair<int, int> {
    const auto colon = part.find(':');
    try {
      std::size_t used = 0;
      if (colon == std::string::npos) {
        const int v = std::stoi(part, &used);
        if (used != part.size()) throw std::invalid_argument(part);
        return {v, v};
      }
      const std::string a = part.substr(0, colon);
      const std::string b = part.substr(colon + 1);
      const int lo = std::stoi(a, &used);
      if (used != a.size()) throw std::invalid_argument(a);
      const int hi = std::stoi(b, &used);
      if (used != b.size()) throw std::invalid_argument(b);
      return {lo, hi};
    } catch (const std::logic_error&) {
      throw CLI::ValidationError("--grid", "expected pmin:pmax,nmin:nmax, got '" + spec + "'");
    }
  };
  const auto comma = spec.find(',');
  if (comma == std::string::npos) throw CLI::ValidationError("--grid", "expected pmin:pmax,nmin:nmax");
  const auto [pmin, pmax] = range(spec.substr(0, comma));
  const auto [nmin, nmax] = range(spec.substr(comma + 1));
  if (pmin < 1 || nmin < 1 || pmin > pmax || nmin > nmax) {
    throw CLI::ValidationError("--grid", "ranges must be nonempty with p, n >= 1");
  }
  return McConfig::make_grid(pmin, pmax, nmin, nmax);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Configuration echo written next to every output as `<path>.manifest.json`.
struct Manifest {
  nlohmann::ordered_json doc;

  Manifest(const std::string& command, const std::vector<std::string>& argv) {
    doc["tool"] = "manifold_ilpr";
    doc["version"] = MANIFOLD_ILPR_VERSION;
    doc["command"] = command;
    doc["argv"] = argv;
    doc["parameters"] = nlohmann::ordered_json::object();
    doc["results"] = nlohmann::ordered_json::object();
  }

  void write(const std::string& path) const {
    auto out = io::open_output(path);
    out << doc.dump(2) << '\n';
    io::finish_output(out, path);
  }
};

inline std::string median_string(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return "nan";
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  const double med = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", med);
  return buf;
}

struct SimulateArgs {
  int p = 1;
  int n = 3;
  int num_samples = 100;
  double sigma = 0.5;
  std::uint64_t seed = 1;
  std::string out;
};

struct FitArgs {
  std::string data;
  std::string metric = "log-cholesky";
  double tau = 0.5;
  int degree = 1;
  std::optional<double> bandwidth;
  bool cv = false;
  int grid_points = 20;
  double ridge = FitConfig::kDefaultRidge;
  std::string query = "self";
  std::string out;
};

struct BenchmarkArgs {
  std::string grid = "1:2,3:10";
  bool full_grid = false;
  int realizations = 20;
  int num_samples = 100;
  double sigma = 0.5;
  std::uint64_t seed = 1;
  std::string methods = "ilpr-lc,ilpr-le,extrinsic-ai";
  int degree = 1;
  bool include_cv_time = false;
  std::string out;
};

struct EmbedArgs {
  std::vector<std::string> data;
  std::string method = "tsne";
  std::string metric = "log-cholesky";
  double tau = 0.5;
  double perplexity = 30.0;
  int iters = 1000;
  double learning_rate = 200.0;
  int dims = 2;
  std::string components;
  std::uint64_t seed = 1;
  std::string out;
};

inline int cmd_simulate(const SimulateArgs& a, int threads, const std::vector<std::string>& argv, std::ostream& out) {
  (void)threads;
  McConfig check;
  check.grid = {{a.p, a.n}};
  check.num_samples = a.num_samples;
  check.sigma = a.sigma;
  check.validate();
  Rng rng = realization_rng(a.seed, a.p, a.n, 0);
  const Realization sim = simulate_realization(a.p, a.n, a.num_samples, a.sigma, rng);

  const std::string true_path = a.out + ".true.csv";
  const std::string noisy_path = a.out + ".noisy.csv";
  io::Metadata meta{{"seed", std::to_string(a.seed)}, {"sigma", io::format_double(a.sigma)}};
  {
    auto f = io::open_output(true_path);
    meta["kind"] = "true";
    io::write_dataset(f, sim.covariates, sim.truth, meta);
    io::finish_output(f, true_path);
  }
  {
    auto f = io::open_output(noisy_path);
    meta["kind"] = "noisy";
    io::write_dataset(f, sim.covariates, sim.noisy, meta);
    io::finish_output(f, noisy_path);
  }
  Manifest m("simulate", argv);
  m.doc["parameters"] = {{"p", a.p}, {"n", a.n}, {"num_samples", a.num_samples}, {"sigma", a.sigma},
                         {"seed", a.seed}, {"noise_model", "riemannian-log-normal"}};
  m.doc["results"] = {{"true", true_path}, {"noisy", noisy_path}};
  m.write(a.out + ".manifest.json");
  out << "wrote " << true_path << " and " << noisy_path << '\n';
  return kOk;
}

inline int cmd_fit(const FitArgs& a, int threads, const std::vector<std::string>& argv, std::ostream& out) {
  const Dataset data = io::read_dataset_file(a.data);
  const Method method = parse_fit_method(a.metric, a.tau);
  const std::vector<Vector> queries = a.query == "self" ? data.covariates() : [&] {
    auto in = io::open_input(a.query);
    return io::read_covariates(in, data.p());
  }();

  FitConfig cfg;
  cfg.degree = a.degree;
  cfg.ridge = a.ridge;
  std::optional<CvResult> cv;
  if (a.bandwidth) {
    cfg.bandwidth = *a.bandwidth;
  } else if (data.size() >= 2) {
    GridSpec spec;
    spec.points = a.grid_points;
    spec.threads = threads;
    cv = select_bandwidth(data, a.degree, method, spec, a.ridge);
    cfg.bandwidth = cv->best_h;
  }
  cfg.validate();
  const auto estimates = fit_all(data, queries, cfg, method);

  auto f = io::open_output(a.out);
  io::write_dataset(f, queries, estimates,
                    {{"format", "estimates"}, {"method", method_name(method)}, {"degree", std::to_string(a.degree)},
                     {"bandwidth", io::format_double(cfg.bandwidth)}});
  io::finish_output(f, a.out);

  Manifest m("fit", argv);
  m.doc["parameters"] = {{"data", a.data},   {"metric", a.metric},     {"method", method_name(method)},
                         {"tau", a.tau},     {"degree", a.degree},     {"ridge", a.ridge},
                         {"query", a.query}, {"kernel", "gaussian"},   {"bandwidth_mode", cv ? "loocv" : "fixed"},
                         {"grid_points", a.grid_points}};
  m.doc["results"]["bandwidth"] = cfg.bandwidth;
  if (cv) {
    m.doc["results"]["h_selected"] = cv->best_h;
    m.doc["results"]["cv_score"] = cv->best_score;
    auto grid = nlohmann::ordered_json::array();
    for (const auto& [h, s] : cv->grid) {
      // JSON has no infinity; failed bandwidths are recorded as null.
      grid.push_back(nlohmann::ordered_json::array({h, std::isfinite(s) ? nlohmann::ordered_json(s) : nlohmann::ordered_json()}));
    }
    m.doc["results"]["cv_grid"] = grid;
  }
  m.write(a.out + ".manifest.json");
  out << "fitted " << estimates.size() << " points with " << method_name(method) << ", h = " << cfg.bandwidth
      << (cv ? " (loocv)" : "") << '\n';
  return kOk;
}

inline int cmd_benchmark(const BenchmarkArgs& a, int threads, const std::vector<std::string>& argv,
                         std::ostream& out, std::ostream& err) {
  McConfig cfg;
  cfg.grid = a.full_grid ? McConfig::full_grid() : parse_grid(a.grid);
  cfg.realizations = a.realizations;
  cfg.num_samples = a.num_samples;
  cfg.sigma = a.sigma;
  cfg.seed = a.seed;
  cfg.degree = a.degree;
  cfg.threads = threads;
  cfg.time_includes_cv = a.include_cv_time;
  cfg.methods.clear();
  for (const auto& name : split_list(a.methods)) {
    try {
      cfg.methods.push_back(parse_method_id(name));
    } catch (const DomainError& e) {
      throw CLI::ValidationError("--methods", e.what());
    }
  }
  cfg.validate();

  auto f = io::open_output(a.out);  // fail on an unwritable path before the run
  std::size_t last_percent = 0;
  const McReport report = run_monte_carlo(cfg, [&](const McProgress& p) {
    const std::size_t percent = 100 * p.completed / p.total;
    if (percent >= last_percent + 10 || p.completed == p.total) {
      last_percent = percent;
      err << "[benchmark] " << p.completed << '/' << p.total << " realizations\n";
    }
  });
  io::write_report(f, report);
  io::finish_output(f, a.out);

  std::size_t failures = 0;
  std::map<std::tuple<int, int, std::string>, std::pair<std::vector<double>, std::vector<double>>> cells;
  for (const auto& r : report) {
    if (!r.error.empty()) ++failures;
    auto& c = cells[{r.p, r.n, r.method}];
    c.first.push_back(r.rmse);
    c.second.push_back(r.fit_seconds);
  }

  Manifest m("benchmark", argv);
  nlohmann::ordered_json methods = nlohmann::ordered_json::array();
  for (auto id : cfg.methods) methods.push_back(to_string(id));
  m.doc["parameters"] = {{"grid", a.full_grid ? "1:6,3:18" : a.grid},
                         {"realizations", a.realizations},
                         {"num_samples", a.num_samples},
                         {"sigma", a.sigma},
                         {"seed", a.seed},
                         {"methods", methods},
                         {"degree", a.degree},
                         {"ridge", cfg.ridge},
                         {"cv_grid_points", cfg.cv.points},
                         {"include_cv_time", a.include_cv_time},
                         {"distance", "affine-invariant"}};
  m.doc["results"] = {{"rows", report.size()}, {"failed_rows", failures}, {"report", a.out}};
  m.write(a.out + ".manifest.json");

  out << std::left << std::setw(4) << "p" << std::setw(4) << "n" << std::setw(14) << "method" << std::setw(14)
      << "median_rmse" << "median_seconds\n";
  for (const auto& [key, v] : cells) {
    out << std::setw(4) << std::get<0>(key) << std::setw(4) << std::get<1>(key) << std::setw(14) << std::get<2>(key)
        << std::setw(14) << median_string(v.first) << median_string(v.second) << '\n';
  }
  if (failures) err << failures << " of " << report.size() << " rows failed; see the error column\n";
  return failures == report.size() ? kNumeric : kOk;
}

inline int cmd_embed(const EmbedArgs& a, int threads, const std::vector<std::string>& argv, std::ostream& out,
                     std::ostream& err) {
  std::vector<SpdMatrix> ys;
  std::vector<std::string> labels;
  nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
  for (const auto& spec : a.data) {
    const auto eq = spec.find('=');
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    const std::string label =
        eq == std::string::npos ? std::filesystem::path(path).stem().string() : spec.substr(0, eq);
    const Dataset d = io::read_dataset_file(path);
    if (!ys.empty() && d.n() != ys.front().dim()) {
      throw DimensionError("'" + path + "' has responses of a different dimension");
    }
    for (const auto& y : d.responses()) {
      ys.push_back(y);
      labels.push_back(label);
    }
    inputs.push_back({{"label", label}, {"path", path}, {"rows", d.size()}});
  }

  Manifest m("embed", argv);
  Matrix points;
  if (a.method == "tsne") {
    const EpmKind kind = parse_epm_kind(a.metric);
    const EpmMetric metric = kind == EpmKind::PowerEuclidean ? EpmMetric(kind, a.tau) : EpmMetric(kind);
    EmbedConfig cfg;
    cfg.perplexity = a.perplexity;
    cfg.iterations = a.iters;
    cfg.learning_rate = a.learning_rate;
    cfg.out_dim = a.dims;
    cfg.seed = a.seed;
    cfg.threads = threads;
    Embedding e = rie_tsne(ys, metric, cfg);
    for (const auto& w : e.warnings) err << "warning: " << w << '\n';
    points = std::move(e.points);
    m.doc["parameters"] = {{"method", "tsne"},         {"metric", to_string(kind)},
                           {"tau", a.tau},             {"perplexity", a.perplexity},
                           {"iterations", a.iters},    {"learning_rate", a.learning_rate},
                           {"exaggeration", cfg.exaggeration}, {"exaggeration_iters", cfg.exaggeration_iters},
                           {"dims", a.dims},           {"seed", a.seed}};
    m.doc["results"]["final_kl"] = e.kl_trace.back();
  } else if (a.method == "pga") {
    PgaMetric metric = AiMetric{};
    std::string metric_name = "affine-invariant";
    if (a.metric != "affine-invariant") {
      const EpmKind kind = parse_epm_kind(a.metric);
      metric = kind == EpmKind::PowerEuclidean ? EpmMetric(kind, a.tau) : EpmMetric(kind);
      metric_name = to_string(kind);
    }
    const Index ambient = ys.empty() ? 0 : vech_length(ys.front().dim());
    Index components = a.dims;
    if (a.components == "full") {
      components = ambient;
    } else if (!a.components.empty()) {
      components = std::stoi(a.components);
    }
    const PgaResult r = linearized_pga(ys, metric, components);
    points = r.scores;
    std::vector<double> ev(r.explained_variance.data(), r.explained_variance.data() + r.explained_variance.size());
    m.doc["parameters"] = {{"method", "pga"}, {"metric", metric_name}, {"tau", a.tau}, {"components", components},
                           {"base", "karcher-mean"}};
    m.doc["results"]["explained_variance"] = ev;
  } else {
    throw CLI::ValidationError("--method", "expected tsne or pga");
  }
  m.doc["inputs"] = inputs;

  auto f = io::open_output(a.out);
  io::write_embedding(f, points, labels);
  io::finish_output(f, a.out);
  m.write(a.out + ".manifest.json");
  out << "embedded " << points.rows() << " responses into " << points.cols() << " dimensions\n";
  return kOk;
}

/// Entry point; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Intrinsic local polynomial regression for SPD-matrix responses", "manifold_ilpr"};
  app.set_version_flag("--version", MANIFOLD_ILPR_VERSION);
  app.require_subcommand(1);
  int threads = default_thread_count();
  app.add_option("--threads", threads, "Worker threads (default: MANIFOLD_ILPR_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Generate true and noisy responses from the synthetic model");
  sim->add_option("--p", sa.p, "Covariate dimension")->check(CLI::PositiveNumber);
  sim->add_option("--n", sa.n, "Response matrix size")->check(CLI::PositiveNumber);
  sim->add_option("--num-samples", sa.num_samples, "Number of samples")->check(CLI::Range(2, 100000000));
  sim->add_option("--sigma", sa.sigma, "Noise scale")->check(CLI::NonNegativeNumber);
  sim->add_option("--seed", sa.seed, "Random seed");
  sim->add_option("--out", sa.out, "Output prefix")->required();
  sim->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit the local polynomial estimator to a dataset");
  fit->add_option("--data", fa.data, "Dataset CSV")->required();
  fit->add_option("--metric", fa.metric, "Geometry")
      ->check(CLI::IsMember({"log-cholesky", "log-euclidean", "cholesky", "power-euclidean", "extrinsic-ai"}));
  fit->add_option("--tau", fa.tau, "Power-Euclidean exponent")->check(CLI::PositiveNumber);
  fit->add_option("--degree", fa.degree, "Local polynomial degree")->check(CLI::NonNegativeNumber);
  auto* bw = fit->add_option("--bandwidth", fa.bandwidth, "Fixed bandwidth")->check(CLI::PositiveNumber);
  auto* cvf = fit->add_flag("--cv", fa.cv, "Select the bandwidth by leave-one-out cross-validation (default)");
  bw->excludes(cvf);
  fit->add_option("--grid-points", fa.grid_points, "Bandwidth grid size for --cv")->check(CLI::PositiveNumber);
  fit->add_option("--ridge", fa.ridge, "Ridge parameter; 0 uses the pseudo-inverse")->check(CLI::NonNegativeNumber);
  fit->add_option("--query", fa.query, "Query covariates CSV, or 'self' for the sample covariates");
  fit->add_option("--out", fa.out, "Estimates CSV")->required();
  fit->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  BenchmarkArgs ba;
  auto* bench = app.add_subcommand("benchmark", "Monte Carlo comparison of the regression methods");
  bench->add_option("--grid", ba.grid, "pmin:pmax,nmin:nmax");
  bench->add_flag("--full-grid", ba.full_grid, "Use p in 1..6, n in 3..18");
  bench->add_option("--realizations", ba.realizations, "Realizations per cell")->check(CLI::PositiveNumber);
  bench->add_option("--num-samples", ba.num_samples, "Samples per realization")->check(CLI::Range(2, 100000000));
  bench->add_option("--sigma", ba.sigma, "Noise scale")->check(CLI::NonNegativeNumber);
  bench->add_option("--seed", ba.seed, "Master seed");
  bench->add_option("--methods", ba.methods, "Comma-separated subset of ilpr-lc,ilpr-le,extrinsic-ai");
  bench->add_option("--degree", ba.degree, "Local polynomial degree")->check(CLI::NonNegativeNumber);
  bench->add_flag("--include-cv-time", ba.include_cv_time, "Count bandwidth selection in fit_seconds");
  bench->add_option("--out", ba.out, "Report CSV")->required();
  bench->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  EmbedArgs ea;
  auto* emb = app.add_subcommand("embed", "Embed SPD responses with t-SNE or linearized PGA");
  emb->add_option("--data", ea.data, "Dataset CSV, optionally as label=path; repeatable")->required();
  emb->add_option("--method", ea.method, "tsne or pga")->check(CLI::IsMember({"tsne", "pga"}));
  emb->add_option("--metric", ea.metric, "Geometry (pga also accepts affine-invariant)")
      ->check(CLI::IsMember({"log-cholesky", "log-euclidean", "cholesky", "power-euclidean", "affine-invariant"}));
  emb->add_option("--tau", ea.tau, "Power-Euclidean exponent")->check(CLI::PositiveNumber);
  emb->add_option("--perplexity", ea.perplexity, "t-SNE perplexity");
  emb->add_option("--iters", ea.iters, "t-SNE iterations")->check(CLI::PositiveNumber);
  emb->add_option("--learning-rate", ea.learning_rate, "t-SNE learning rate")->check(CLI::PositiveNumber);
  emb->add_option("--dims", ea.dims, "Output dimension")->check(CLI::IsMember({2, 3}));
  emb->add_option("--components", ea.components, "PGA components, or 'full'");
  emb->add_option("--seed", ea.seed, "Random seed");
  emb->add_option("--out", ea.out, "Embedding CSV")->required();
  emb->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const std::vector<std::string> args(argv, argv + argc);
  try {
    if (*sim) return cmd_simulate(sa, threads, args, out);
    if (*fit) return cmd_fit(fa, threads, args, out);
    if (*bench) return cmd_benchmark(ba, threads, args, out, err);
    if (*emb) return cmd_embed(ea, threads, args, out, err);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::invalid_argument& e) {
    err << "error: invalid argument: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace milpr::cli

#endif  // MANIFOLD_ILPR_CLI_HPP
