#include <gtest/gtest.h>
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "manifold_ilpr/cli.hpp"
#include "test_support.hpp"

namespace milpr {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("manifold_ilpr_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "manifold_ilpr");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return cli::run(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream f(path(name), std::ios::binary);
    f << text;
  }

  void write_dataset(const std::string& name, const std::vector<Vector>& xs, const std::vector<SpdMatrix>& ys) const {
    std::ofstream f(path(name), std::ios::binary);
    io::write_dataset(f, xs, ys);
  }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

/// Rows of a CSV without its header or comment lines.
std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    rows.push_back(fields);
  }
  return rows;
}

TEST_F(CliTest, SimulateWritesBothFilesAndManifest) {
  const auto t0 = std::chrono::steady_clock::now();
  ASSERT_EQ(run({"simulate", "--p", "1", "--n", "3", "--num-samples", "100", "--out", path("sim")}), 0) << err_.str();
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5.0);
  const Dataset t = io::read_dataset_file(path("sim.true.csv"));
  const Dataset n = io::read_dataset_file(path("sim.noisy.csv"));
  EXPECT_EQ(t.size(), 100u);
  EXPECT_EQ(n.n(), 3);
  const auto manifest = nlohmann::json::parse(slurp(path("sim.manifest.json")));
  EXPECT_EQ(manifest["command"], "simulate");
  EXPECT_EQ(manifest["parameters"]["seed"], 1);
  EXPECT_EQ(manifest["parameters"]["num_samples"], 100);
}

TEST_F(CliTest, SimulateMatchesTheLibrary) {
  ASSERT_EQ(run({"simulate", "--p", "2", "--n", "2", "--num-samples", "20", "--seed", "9", "--out", path("s")}), 0);
  Rng rng = realization_rng(9, 2, 2, 0);
  const Realization sim = simulate_realization(2, 2, 20, 0.5, rng);
  const Dataset d = io::read_dataset_file(path("s.noisy.csv"));
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_LE((d[i].x - sim.covariates[i]).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((d[i].y.matrix() - sim.noisy[i].matrix()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST_F(CliTest, SimulateZeroSigmaGivesIdenticalResponses) {
  ASSERT_EQ(run({"simulate", "--sigma", "0", "--num-samples", "30", "--out", path("z")}), 0);
  const auto a = csv_rows(slurp(path("z.true.csv")));
  const auto b = csv_rows(slurp(path("z.noisy.csv")));
  EXPECT_EQ(a, b);
}

TEST_F(CliTest, SimulateIsByteIdenticalAcrossRuns) {
  const std::vector<std::string> args{"simulate", "--p", "2", "--n", "4", "--seed", "5", "--out", path("r")};
  ASSERT_EQ(run(args), 0);
  const std::string a = slurp(path("r.noisy.csv")) + slurp(path("r.true.csv")) + slurp(path("r.manifest.json"));
  ASSERT_EQ(run(args), 0);
  const std::string b = slurp(path("r.noisy.csv")) + slurp(path("r.true.csv")) + slurp(path("r.manifest.json"));
  EXPECT_EQ(a, b);
}

TEST_F(CliTest, SimulateUnwritablePathIsAnIoError) {
  EXPECT_EQ(run({"simulate", "--out", path("missing/dir/sim")}), 2);
}

TEST_F(CliTest, FitDegreeZeroOnOneRowReproducesIt) {
  Rng rng(120);
  const SpdMatrix y = testing::random_spd(3, rng);
  write_dataset("one.csv", {Vector::Constant(1, 0.3)}, {y});
  ASSERT_EQ(run({"fit", "--data", path("one.csv"), "--degree", "0", "--out", path("est.csv")}), 0) << err_.str();
  const Dataset est = io::read_dataset_file(path("est.csv"));
  ASSERT_EQ(est.size(), 1u);
  // The default ridge shrinks a single weight of unit mass by 1 / (1 + lambda^2).
  const Matrix expected =
      epm_inverse(EpmMetric::log_cholesky(), epm_forward(EpmMetric::log_cholesky(), y) / (1.0 + 1e-6)).matrix();
  EXPECT_LE((est[0].y.matrix() - expected).norm(), 1e-12);
  ASSERT_EQ(run({"fit", "--data", path("one.csv"), "--degree", "0", "--ridge", "0", "--out", path("est0.csv")}), 0);
  EXPECT_LE((io::read_dataset_file(path("est0.csv"))[0].y.matrix() - y.matrix()).norm(), 1e-12);
}

TEST_F(CliTest, FitLogEuclideanDegreeZeroIsNadarayaWatson) {
  Rng rng(121);
  std::vector<Vector> xs;
  std::vector<SpdMatrix> ys;
  for (int i = 0; i < 15; ++i) {
    xs.push_back(testing::random_vector(2, rng));
    ys.push_back(testing::random_spd(3, rng));
  }
  write_dataset("d.csv", xs, ys);
  write("q.csv", "0.1,0.2\n-0.5,1.0\n");
  ASSERT_EQ(run({"fit", "--data", path("d.csv"), "--metric", "log-euclidean", "--degree", "0", "--bandwidth", "0.7",
                 "--ridge", "0", "--query", path("q.csv"), "--out", path("nw.csv")}),
            0)
      << err_.str();
  const Dataset est = io::read_dataset_file(path("nw.csv"));
  ASSERT_EQ(est.size(), 2u);
  for (std::size_t q = 0; q < 2; ++q) {
    Matrix num = Matrix::Zero(3, 3);
    double den = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double w = std::exp(-(xs[i] - est[q].x).squaredNorm() / (2.0 * 0.49));
      const Eigen::SelfAdjointEigenSolver<Matrix> eig(ys[i].matrix());
      num += w * eig.eigenvectors() * eig.eigenvalues().array().log().matrix().asDiagonal() *
             eig.eigenvectors().transpose();
      den += w;
    }
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(num / den);
    const Matrix expected =
        eig.eigenvectors() * eig.eigenvalues().array().exp().matrix().asDiagonal() * eig.eigenvectors().transpose();
    EXPECT_LE((est[q].y.matrix() - expected).norm(), 1e-10 * expected.norm());
  }
}

TEST_F(CliTest, FitRecoversNoiselessLogLinearData) {
  // Diagonal responses exp(diag(a + b x)) are linear in both the Log-Euclidean
  // and the Log-Cholesky coordinates, so both local linear fits are exact.
  Rng rng(122);
  const Vector a = testing::random_vector(3, rng);
  const Vector b = testing::random_vector(3, rng);
  std::vector<Vector> xs;
  std::vector<SpdMatrix> ys;
  for (int i = 0; i < 40; ++i) {
    xs.push_back(testing::random_vector(1, rng));
    ys.push_back(SpdMatrix((a + xs.back()(0) * b).array().exp().matrix().asDiagonal().toDenseMatrix()));
  }
  write_dataset("lin.csv", xs, ys);
  for (const std::string metric : {"log-cholesky", "log-euclidean"}) {
    ASSERT_EQ(run({"fit", "--data", path("lin.csv"), "--metric", metric, "--ridge", "0", "--out", path("e.csv")}), 0)
        << err_.str();
    const Dataset est = io::read_dataset_file(path("e.csv"));
    EXPECT_LE(rmse_ai(est.responses(), ys), 1e-6) << metric;
    const auto manifest = nlohmann::json::parse(slurp(path("e.csv.manifest.json")));
    EXPECT_EQ(manifest["parameters"]["bandwidth_mode"], "loocv");
    EXPECT_GT(manifest["results"]["h_selected"].get<double>(), 0.0);
  }
}

TEST_F(CliTest, FitErrorCodes) {
  EXPECT_EQ(run({"fit", "--data", path("nope.csv"), "--out", path("e.csv")}), 2);
  write("bad.csv", "x0,v0\n1,2\n1,zz\n");
  EXPECT_EQ(run({"fit", "--data", path("bad.csv"), "--out", path("e.csv")}), 3);
  EXPECT_NE(err_.str().find("line 3"), std::string::npos) << err_.str();
  write("npd.csv", "x0,v0,v1,v2\n0,1,0,1\n1,1,3,1\n");
  EXPECT_EQ(run({"fit", "--data", path("npd.csv"), "--out", path("e.csv")}), 4);
  EXPECT_NE(err_.str().find("line 3"), std::string::npos) << err_.str();
  write("far.csv", "x0,v0\n0,1\n1000,2\n");
  write("farq.csv", "500\n");
  EXPECT_EQ(run({"fit", "--data", path("far.csv"), "--bandwidth", "0.01", "--query", path("farq.csv"), "--out",
                 path("e.csv")}),
            5);
  EXPECT_EQ(run({"fit", "--data", path("far.csv"), "--metric", "bogus", "--out", path("e.csv")}), 1);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}), 1);
  EXPECT_EQ(run({"simulate"}), 1);
  EXPECT_EQ(run({"simulate", "--out", path("x"), "--bogus"}), 1);
  EXPECT_EQ(run({"benchmark", "--grid", "1-2", "--out", path("b.csv")}), 1);
  EXPECT_EQ(run({"--help"}), 0);
}

TEST_F(CliTest, BenchmarkCountsRowsAndIsDeterministic) {
  const std::vector<std::string> base{"benchmark", "--grid", "1:1,3:3", "--realizations", "2", "--num-samples", "30",
                                      "--seed", "11"};
  auto args = base;
  args.insert(args.end(), {"--out", path("b1.csv"), "--threads", "1"});
  ASSERT_EQ(run(args), 0) << err_.str();
  EXPECT_NE(out_.str().find("median_rmse"), std::string::npos);
  args = base;
  args.insert(args.end(), {"--out", path("b4.csv"), "--threads", "4"});
  ASSERT_EQ(run(args), 0);
  const auto r1 = csv_rows(slurp(path("b1.csv")));
  const auto r4 = csv_rows(slurp(path("b4.csv")));
  ASSERT_EQ(r1.size(), 6u);
  ASSERT_EQ(r4.size(), 6u);
  for (std::size_t i = 0; i < r1.size(); ++i) {
    EXPECT_EQ(r1[i][2], r4[i][2]);
    EXPECT_EQ(r1[i][4], r4[i][4]);  // rmse
    EXPECT_EQ(r1[i][6], r4[i][6]);  // h_selected
  }
  EXPECT_EQ(slurp(path("b1.csv")).substr(0, 55), "p,n,method,realization,rmse,fit_seconds,h_selected,erro");
  const auto manifest = nlohmann::json::parse(slurp(path("b1.csv.manifest.json")));
  EXPECT_EQ(manifest["results"]["rows"], 6);
}

TEST_F(CliTest, BenchmarkMethodSubset) {
  ASSERT_EQ(run({"benchmark", "--grid", "2,4", "--realizations", "3", "--num-samples", "25", "--methods",
                 "ilpr-le", "--out", path("b.csv")}),
            0);
  const auto rows = csv_rows(slurp(path("b.csv")));
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_EQ(r[0], "2");
    EXPECT_EQ(r[1], "4");
    EXPECT_EQ(r[2], "ilpr-le");
  }
  EXPECT_EQ(run({"benchmark", "--methods", "nope", "--out", path("b.csv")}), 1);
}

TEST_F(CliTest, EmbedTsneRowCountAndLabels) {
  ASSERT_EQ(run({"simulate", "--num-samples", "40", "--out", path("s")}), 0);
  ASSERT_EQ(run({"embed", "--data", "true=" + path("s.true.csv"), "--data", "noisy=" + path("s.noisy.csv"),
                 "--perplexity", "10", "--iters", "300", "--out", path("emb.csv")}),
            0)
      << err_.str();
  const auto rows = csv_rows(slurp(path("emb.csv")));
  ASSERT_EQ(rows.size(), 80u);
  EXPECT_EQ(rows.front().size(), 4u);
  EXPECT_EQ(rows.front().back(), "true");
  EXPECT_EQ(rows.back().back(), "noisy");
  ASSERT_EQ(run({"embed", "--data", path("s.true.csv"), "--perplexity", "10", "--iters", "50", "--dims", "3", "--out",
                 path("e3.csv")}),
            0);
  const auto rows3 = csv_rows(slurp(path("e3.csv")));
  EXPECT_EQ(rows3.front().size(), 5u);
  EXPECT_EQ(rows3.front().back(), "s.true");
}

TEST_F(CliTest, EmbedPgaFullComponentsPreserveTangentNorms) {
  // With orthonormal directions spanning the tangent space, each score row has
  // the norm of its tangent vector vech(f(Y_i) - f(mean)).
  ASSERT_EQ(run({"simulate", "--num-samples", "25", "--n", "3", "--out", path("s")}), 0);
  ASSERT_EQ(run({"embed", "--data", path("s.noisy.csv"), "--method", "pga", "--components", "full", "--out",
                 path("pga.csv")}),
            0)
      << err_.str();
  const Dataset d = io::read_dataset_file(path("s.noisy.csv"));
  const EpmMetric lc = EpmMetric::log_cholesky();
  Matrix mean = Matrix::Zero(3, 3);
  for (const auto& y : d.responses()) mean += epm_forward(lc, y);
  mean /= static_cast<double>(d.size());
  const auto rows = csv_rows(slurp(path("pga.csv")));
  ASSERT_EQ(rows.size(), 25u);
  ASSERT_EQ(rows.front().size(), 8u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double sq = 0.0;
    for (int k = 1; k <= 6; ++k) sq += std::pow(std::stod(rows[i][static_cast<std::size_t>(k)]), 2);
    const Matrix diff = Matrix((epm_forward(lc, d[i].y) - mean).triangularView<Eigen::Lower>());
    EXPECT_NEAR(std::sqrt(sq), diff.norm(), 1e-8);
  }
  const auto manifest = nlohmann::json::parse(slurp(path("pga.csv.manifest.json")));
  double total = 0.0;
  for (double v : manifest["results"]["explained_variance"]) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST_F(CliTest, PipelineEstimatesEmbedCloserToTruth) {
  ASSERT_EQ(run({"simulate", "--num-samples", "60", "--seed", "3", "--out", path("s")}), 0);
  ASSERT_EQ(run({"fit", "--data", path("s.noisy.csv"), "--out", path("est.csv")}), 0);
  ASSERT_EQ(run({"embed", "--data", "true=" + path("s.true.csv"), "--data", "noisy=" + path("s.noisy.csv"), "--data",
                 "estimated=" + path("est.csv"), "--perplexity", "20", "--iters", "500", "--out", path("emb.csv")}),
            0)
      << err_.str();
  const auto rows = csv_rows(slurp(path("emb.csv")));
  ASSERT_EQ(rows.size(), 180u);
  auto point = [&](std::size_t i) { return Eigen::Vector2d(std::stod(rows[i][1]), std::stod(rows[i][2])); };
  double to_est = 0.0;
  double to_noisy = 0.0;
  for (std::size_t i = 0; i < 60; ++i) {
    EXPECT_EQ(rows[i].back(), "true");
    EXPECT_EQ(rows[60 + i].back(), "noisy");
    EXPECT_EQ(rows[120 + i].back(), "estimated");
    to_noisy += (point(i) - point(60 + i)).norm();
    to_est += (point(i) - point(120 + i)).norm();
  }
  EXPECT_LT(to_est / to_noisy, 1.0);
}

TEST_F(CliTest, ThreadsFallBackToEnvironment) {
  ::setenv("MANIFOLD_ILPR_THREADS", "3", 1);
  EXPECT_EQ(default_thread_count(), 3);
  ::setenv("MANIFOLD_ILPR_THREADS", "junk", 1);
  EXPECT_GE(default_thread_count(), 1);
  ::unsetenv("MANIFOLD_ILPR_THREADS");
}

TEST_F(CliTest, ProcessExitCodes) {
  const char* tool = std::getenv("MANIFOLD_ILPR_TOOL");
  if (!tool) GTEST_SKIP() << "MANIFOLD_ILPR_TOOL not set";
  auto status = [&](const std::string& args) {
    const int s = std::system((std::string(tool) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  write("bad.csv", "x0,v0\nfoo\n");
  EXPECT_EQ(status("simulate --num-samples 10 --out " + path("s")), 0);
  EXPECT_EQ(status("fit --data " + path("bad.csv") + " --out " + path("e.csv")), 3);
  EXPECT_EQ(status("fit --data " + path("absent.csv") + " --out " + path("e.csv")), 2);
  EXPECT_EQ(status("--no-such-flag"), 1);
  EXPECT_EQ(status("--version"), 0);
}

}  // namespace
}  // namespace milpr
