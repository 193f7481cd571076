#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include <chrono>

#include "sarsm/netgen.hpp"
#include "sarsm/qsm.hpp"
#include "sarsm/simharness.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace sarsm;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SARSM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path temp_dir() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() / ("sarsm_cli_test_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("fit runs end-to-end on a 3-node toy") {
  const fs::path dir = temp_dir();
  write(dir / "edges.txt", "0 1\n1 2\n2 0\n1 0\n");
  write(dir / "cov.csv", "score\n1.2\n0.7\n1.9\n");
  const int code = run_cli("fit --edges " + (dir / "edges.txt").string() + " --covariates " +
                           (dir / "cov.csv").string() + " --response score --out " +
                           (dir / "out").string());
  CHECK(code == 0);
  const auto js = nlohmann::json::parse(slurp(dir / "out" / "report_qsm.json"));
  CHECK(js.at("schema_version") == 1);
  CHECK(js.at("method") == "qsm");
  const double lambda = js.at("estimates")[0].get<double>();
  CHECK(std::isfinite(lambda));
}

TEST_CASE("fit: exported dataset re-imported matches the in-memory fit to 1e-12") {
  // simulate on a 0/1-derived W (lossless through the edge-list format),
  // dump to files with full precision, fit through the CLI path
  const Index n = 120;
  SparseWeights adj = gen_bernoulli(n, 5.0 / n, 44);
  SparseWeights w = row_normalize(adj);
  SplitMix64 rng(45);
  MatrixXd x(n, 2);
  x.col(0).setOnes();
  for (Index i = 0; i < n; ++i) x(i, 1) = rng.normal();
  ParamVector theta0{0.4, (VectorXd(2) << 2.0, 1.0).finished(), 1.0};
  const SarData data =
      simulate_sar(theta0, std::move(x), w, ErrorDistribution::standard_normal(), 46);

  const fs::path dir = temp_dir();
  {
    std::ofstream edges(dir / "edges.txt");
    write_edge_list(adj, edges, /*one_based=*/false);
    std::ofstream cov(dir / "cov.csv");
    cov.precision(17);
    cov << "y,x2\n";
    for (Index i = 0; i < data.n(); ++i) cov << data.y(i) << ',' << data.X(i, 1) << '\n';
  }
  const int code = run_cli("fit --edges " + (dir / "edges.txt").string() + " --covariates " +
                           (dir / "cov.csv").string() +
                           " --response y --estimators qsm --isolated keep --out " +
                           (dir / "out").string());
  REQUIRE(code == 0);
  const auto js = nlohmann::json::parse(slurp(dir / "out" / "report_qsm.json"));
  FitOptions opts;
  opts.with_inference = false;
  const FitReport direct = fit_qsm(data, opts);
  CHECK(std::abs(js.at("estimates")[0].get<double>() - direct.theta.lambda) < 1e-12);
  CHECK(std::abs(js.at("estimates")[1].get<double>() - direct.theta.beta(0)) < 1e-10);
  CHECK(std::abs(js.at("estimates")[3].get<double>() - direct.theta.sigma2) < 1e-12);
}

TEST_CASE("fit error paths") {
  const fs::path dir = temp_dir();
  write(dir / "edges.txt", "0 1\n1 0\n");
  write(dir / "cov.csv", "score\n1.0\n2.0\n");
  SUBCASE("missing response column exits 2") {
    CHECK(run_cli("fit --edges " + (dir / "edges.txt").string() + " --covariates " +
                  (dir / "cov.csv").string() + " --response missing --out " +
                  (dir / "o").string()) == 2);
  }
  SUBCASE("node id beyond the covariate table exits 2") {
    write(dir / "bad_edges.txt", "0 7\n");
    CHECK(run_cli("fit --edges " + (dir / "bad_edges.txt").string() + " --covariates " +
                  (dir / "cov.csv").string() + " --response score --out " +
                  (dir / "o").string()) == 2);
  }
  SUBCASE("isolated nodes error by default, drop succeeds") {
    write(dir / "iso_edges.txt", "0 1\n1 0\n2 0\n");  // node 3 isolated
    write(dir / "cov4.csv", "score\n1.0\n2.0\n0.5\n0.1\n");
    CHECK(run_cli("fit --edges " + (dir / "iso_edges.txt").string() + " --covariates " +
                  (dir / "cov4.csv").string() + " --response score --out " +
                  (dir / "o").string()) == 2);
    CHECK(run_cli("fit --edges " + (dir / "iso_edges.txt").string() + " --covariates " +
                  (dir / "cov4.csv").string() + " --response score --isolated drop --out " +
                  (dir / "o2").string()) == 0);
  }
}

TEST_CASE("simulate: bundled smoke design and config errors") {
  const fs::path dir = temp_dir();
  SUBCASE("smoke design completes and reproduces its json via the library") {
    const std::string cfg = std::string(SARSM_CONFIG_DIR) + "/smoke_n60.cfg";
    const int code =
        run_cli("simulate --design " + cfg + " --out " + (dir / "out").string());
    CHECK(code == 0);
    CHECK(fs::exists(dir / "out" / "metrics.json"));
    CHECK(fs::exists(dir / "out" / "metrics.csv"));
    CHECK(fs::exists(dir / "out" / "metrics.md"));
    const MetricsTable from_file = metrics_from_json(slurp(dir / "out" / "metrics.json"));
    const MetricsTable direct = run_design(parse_design_file(cfg));
    CHECK(from_file.cell(Method::qsm, "lambda").rmse ==
          direct.cell(Method::qsm, "lambda").rmse);
  }
  SUBCASE("malformed config key exits 2") {
    write(dir / "bad.cfg", "n = 60\nnot_a_key = 3\n");
    CHECK(run_cli("simulate --design " + (dir / "bad.cfg").string() + " --out " +
                  (dir / "o").string()) == 2);
  }
}

TEST_CASE("lqcheck passes and the corrupted negative control fails") {
  CHECK(run_cli("lqcheck --n 20 --d 2 --draws 200000 --seed 3") == 0);
  CHECK(run_cli("lqcheck --n 20 --d 2 --draws 200000 --seed 3 --corrupt-cov") == 1);
}

TEST_CASE("bench smoke run") {
  const fs::path dir = temp_dir();
  CHECK(run_cli("bench --sizes 200,400 --slope-sizes 400,800 --evals 5 --out " +
                (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "bench.md"));
}

TEST_CASE("simulate smoke design runs in seconds at n = 500 with one rep") {
  const fs::path dir = temp_dir();
  write(dir / "one.cfg",
        "n = 500\nlambda0 = 0.3\nbeta0 = 2, 1\nweights = bernoulli\nerrors = normal\n"
        "reps = 1\nseed = 5\nestimators = qsm, qsm_improved, qmle\n");
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(run_cli("simulate --design " + (dir / "one.cfg").string() + " --out " +
                (dir / "out").string()) == 0);
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(sec < 5.0);
}
