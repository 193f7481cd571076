#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sarsm/netgen.hpp"
#include "sarsm/qmle.hpp"
#include "sarsm/qsm.hpp"
#include "sarsm/simharness.hpp"

namespace fs = std::filesystem;
using namespace sarsm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumeric = 1;
constexpr int kExitInput = 2;

std::string results_dir_default() {
  const char* env = std::getenv("SARSM_RESULTS_DIR");
  return env && *env ? env : "results";
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write '" + path.string() + "'");
  out << text;
}

// ---------------------------------------------------------------------------
// covariates CSV: header row; numeric columns pass through, non-numeric ones
// expand to 0/1 indicators with the first level dropped
struct CovariateTable {
  Index n = 0;
  std::vector<std::string> names;  // expanded column names
  MatrixXd X;                      // n x (#expanded), no intercept
  VectorXd response;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
      out.emplace_back();
      continue;
    }
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_number(const std::string& s, double* out) {
  if (s.empty()) return false;
  try {
    std::size_t pos = 0;
    *out = std::stod(s, &pos);
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

CovariateTable read_covariates(const std::string& path, const std::string& response_column) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open covariates '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("covariates '" + path + "': missing header row");
  const auto header = split_csv_line(line);
  if (header.empty()) throw std::invalid_argument("covariates: empty header");

  std::vector<std::vector<std::string>> raw(header.size());
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::invalid_argument("covariates line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
    for (std::size_t c = 0; c < fields.size(); ++c) raw[c].push_back(fields[c]);
  }
  const Index n = raw.empty() ? 0 : static_cast<Index>(raw[0].size());
  if (n == 0) throw std::invalid_argument("covariates: no data rows");

  int resp_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == response_column) resp_col = static_cast<int>(c);
  if (resp_col < 0)
    throw std::invalid_argument("covariates: response column '" + response_column +
                                "' not found in header");

  CovariateTable table;
  table.n = n;
  table.response.resize(n);
  for (Index i = 0; i < n; ++i) {
    double v;
    if (!parse_number(raw[static_cast<std::size_t>(resp_col)][static_cast<std::size_t>(i)], &v))
      throw std::invalid_argument("covariates: non-numeric response at data row " +
                                  std::to_string(i + 1));
    table.response(i) = v;
  }

  std::vector<VectorXd> cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (static_cast<int>(c) == resp_col) continue;
    bool numeric = true;
    VectorXd col(n);
    for (Index i = 0; i < n; ++i) {
      double v;
      if (!parse_number(raw[c][static_cast<std::size_t>(i)], &v)) {
        numeric = false;
        break;
      }
      col(i) = v;
    }
    if (numeric) {
      cols.push_back(col);
      table.names.push_back(header[c]);
    } else {
      // categorical: indicators per level, first level (by appearance) dropped
      std::vector<std::string> levels;
      for (Index i = 0; i < n; ++i) {
        const auto& s = raw[c][static_cast<std::size_t>(i)];
        if (std::find(levels.begin(), levels.end(), s) == levels.end()) levels.push_back(s);
      }
      for (std::size_t l = 1; l < levels.size(); ++l) {
        VectorXd ind(n);
        for (Index i = 0; i < n; ++i)
          ind(i) = raw[c][static_cast<std::size_t>(i)] == levels[l] ? 1.0 : 0.0;
        cols.push_back(ind);
        table.names.push_back(header[c] + ":" + levels[l]);
      }
    }
  }
  table.X.resize(n, static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) table.X.col(static_cast<Index>(c)) = cols[c];
  return table;
}

// ---------------------------------------------------------------------------
int cmd_fit(const std::string& edges_path, const std::string& cov_path,
            const std::string& response, bool one_based, const std::string& isolated_policy,
            bool no_intercept, const std::vector<std::string>& estimator_names,
            const std::string& out_dir, const FitOptions& fit_opts,
            const std::string& det_name) {
  const CovariateTable cov = read_covariates(cov_path, response);
  SparseWeights adj = read_edge_list_file(edges_path, one_based, cov.n);

  VectorXd y = cov.response;
  MatrixXd x0 = cov.X;
  const auto isolated = isolated_rows(adj);
  Index dropped = 0;
  if (!isolated.empty()) {
    if (isolated_policy == "error") {
      throw std::invalid_argument(
          std::to_string(isolated.size()) +
          " node(s) have no network connections; rerun with --isolated drop (removes them, "
          "mirroring the case-study treatment) or --isolated keep");
    }
    if (isolated_policy == "drop") {
      adj = drop_nodes(adj, isolated);
      std::vector<char> is_iso(cov.n, 0);
      for (Index k : isolated) is_iso[static_cast<std::size_t>(k)] = 1;
      VectorXd y2(adj.size());
      MatrixXd x2(adj.size(), x0.cols());
      Index r = 0;
      for (Index i = 0; i < cov.n; ++i) {
        if (is_iso[static_cast<std::size_t>(i)]) continue;
        y2(r) = y(i);
        x2.row(r) = x0.row(i);
        ++r;
      }
      y = std::move(y2);
      x0 = std::move(x2);
      dropped = static_cast<Index>(isolated.size());
    }
  }

  Index zero_rows = 0;
  SparseWeights w = row_normalize(adj, &zero_rows);

  SarData data;
  data.y = std::move(y);
  if (no_intercept) {
    data.X = std::move(x0);
  } else {
    data.X.resize(x0.rows(), x0.cols() + 1);
    data.X.col(0).setOnes();
    data.X.rightCols(x0.cols()) = x0;
  }
  data.W = std::move(w);
  data.validate();

  std::vector<std::string> names;
  names.emplace_back("lambda");
  if (!no_intercept) names.emplace_back("Intercept");
  names.insert(names.end(), cov.names.begin(), cov.names.end());
  names.emplace_back("sigma2");

  std::vector<Method> methods;
  for (const auto& s : estimator_names) methods.push_back(parse_method(s));

  QmleOptions qmle_opts;
  qmle_opts.fit = fit_opts;
  if (!det_name.empty()) qmle_opts.det_strategy = parse_det_strategy(det_name);

  std::ostringstream all_text;
  all_text << "n = " << data.n() << ", p = " << data.p() << " (dropped " << dropped
           << " isolated, " << zero_rows << " zero rows kept)\n\n";
  FitReport qsm_report;
  bool have_qsm = false;
  for (Method m : methods) {
    FitReport report;
    switch (m) {
      case Method::qsm:
        report = fit_qsm(data, fit_opts);
        qsm_report = report;
        have_qsm = true;
        break;
      case Method::qsm_improved: {
        if (!have_qsm) {
          FitOptions search_opts = fit_opts;
          search_opts.with_inference = false;
          qsm_report = fit_qsm(data, search_opts);
          have_qsm = true;
        }
        report = fit_improved(data, qsm_report.theta.lambda, fit_opts);
        break;
      }
      case Method::qmle:
        report = fit_qmle(data, qmle_opts);
        break;
    }
    const fs::path out = fs::path(out_dir) / ("report_" + std::string(method_name(m)) + ".json");
    write_file(out, report_to_json(report, names));
    all_text << report_to_text(report, names) << "\n";
    std::cout << report_to_text(report, names) << "\n";
  }
  write_file(fs::path(out_dir) / "report.txt", all_text.str());
  std::cout << "reports written to " << out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
int cmd_simulate(const std::string& design_path, const std::string& out_dir, int threads) {
  SimDesign design = parse_design_file(design_path);
  if (threads > 0) design.threads = threads;
  const MetricsTable table = run_design(design);
  write_file(fs::path(out_dir) / "metrics.csv", emit_table(table, TableFormat::csv));
  write_file(fs::path(out_dir) / "metrics.json", emit_table(table, TableFormat::json));
  write_file(fs::path(out_dir) / "metrics.md", emit_table(table, TableFormat::markdown));
  std::cout << emit_table(table, TableFormat::markdown);
  std::cout << "metrics written to " << out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// random LQ instance shared by lqcheck runs; A entries thinned to keep the
// quadratic forms sparse-ish like the score matrices
LqForm random_lq_instance(Index n, Index d, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<MatrixXd> a;
  for (Index j = 0; j < d; ++j) {
    MatrixXd m = MatrixXd::Zero(n, n);
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < n; ++c)
        if (rng.uniform01() < 0.2) m(r, c) = rng.normal();
    a.push_back(m);
  }
  MatrixXd b(n, d);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < d; ++c) b(r, c) = rng.normal();
  return LqForm(std::move(a), std::move(b));
}

int cmd_lqcheck(Index n, Index d, const std::string& err_kind, Index draws, std::uint64_t seed,
                bool corrupt) {
  const ErrorDistribution err = err_kind == "mixture" ? ErrorDistribution::mixture_normal()
                                                      : ErrorDistribution::standard_normal();
  const LqForm lq = random_lq_instance(n, d, seed);
  const auto mom = err.moments();
  const MomentDiagonals moms = MomentDiagonals::homoskedastic(n, mom[0], mom[1], mom[2]);
  VectorXd mean = lq_mean(lq, moms);
  MatrixXd cov = lq_cov(lq, moms);
  if (corrupt) cov(0, 0) *= 1.1;  // negative-control hook for tests
  const LqSampleResult mc = lq_sample(lq, err, draws, derive_stream_seed(seed, 99));

  bool ok = true;
  std::cout << "lqcheck: n=" << n << " d=" << d << " errors=" << err_kind << " draws=" << draws
            << "\n";
  for (Index j = 0; j < d; ++j) {
    const double dev = std::abs(mean(j) - mc.mean(j));
    const double tol = 4.0 * mc.mean_se(j);
    const bool pass = dev <= tol;
    ok = ok && pass;
    std::cout << (pass ? "PASS" : "FAIL") << " mean[" << j << "] closed=" << mean(j)
              << " mc=" << mc.mean(j) << " |diff|=" << dev << " 4*se=" << tol << "\n";
  }
  for (Index j = 0; j < d; ++j)
    for (Index k = j; k < d; ++k) {
      const double dev = std::abs(cov(j, k) - mc.cov(j, k));
      const double tol = 5.0 * mc.cov_se(j, k);
      const bool pass = dev <= tol;
      ok = ok && pass;
      std::cout << (pass ? "PASS" : "FAIL") << " cov[" << j << "," << k << "] closed=" << cov(j, k)
                << " mc=" << mc.cov(j, k) << " |diff|=" << dev << " 5*se=" << tol << "\n";
    }
  std::cout << (ok ? "lqcheck passed" : "lqcheck FAILED") << "\n";
  return ok ? kExitOk : kExitNumeric;
}

// ---------------------------------------------------------------------------
int cmd_bench(const std::vector<Index>& sizes, const std::vector<Index>& slope_sizes,
              const std::string& weights_kind, std::uint64_t seed, int evals,
              const std::string& out_dir) {
  using Clock = std::chrono::steady_clock;
  std::ostringstream report;

  auto make_data = [&](Index n) {
    SparseWeights adj = weights_kind == "sbm"
                            ? gen_sbm_default(n, derive_stream_seed(seed, n))
                            : gen_bernoulli(n, 5.0 / static_cast<double>(n),
                                            derive_stream_seed(seed, n));
    SparseWeights w = row_normalize(adj);
    MatrixXd x(n, 2);
    x.col(0).setOnes();
    SplitMix64 rng(derive_stream_seed(seed, 1000 + n));
    for (Index i = 0; i < n; ++i) x(i, 1) = rng.normal();
    ParamVector theta0;
    theta0.lambda = 0.3;
    theta0.beta = (VectorXd(2) << 2.0, 1.0).finished();
    theta0.sigma2 = 1.0;
    return simulate_sar(theta0, std::move(x), std::move(w), ErrorDistribution::standard_normal(),
                        derive_stream_seed(seed, 2000 + n));
  };

  auto time_eval_ms = [&](const SarData& data) {
    SplitMix64 rng(7);
    double sink = 0.0;
    const auto t0 = Clock::now();
    for (int k = 0; k < evals; ++k)
      sink += concentrated_objective(data, -0.9 + 1.8 * rng.uniform01());
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (!std::isfinite(sink)) std::cout << "";
    return ms / evals;
  };

  report << "| n | nnz | eval_ms | t_S_s | t_M_s | t_M/t_S |\n|---:|---:|---:|---:|---:|---:|\n";
  std::vector<double> ratio_by_size;
  for (Index n : sizes) {
    const SarData data = make_data(n);
    const double eval_ms = time_eval_ms(data);
    FitOptions opts;
    opts.with_inference = false;
    auto t0 = Clock::now();
    const FitReport qsm = fit_qsm(data, opts);
    fit_improved(data, qsm.theta.lambda, opts);
    const double t_s = std::chrono::duration<double>(Clock::now() - t0).count();
    QmleOptions qopts;
    qopts.fit = opts;
    t0 = Clock::now();
    fit_qmle(data, qopts);
    const double t_m = std::chrono::duration<double>(Clock::now() - t0).count();
    ratio_by_size.push_back(t_m / t_s);
    report << "| " << n << " | " << data.W.nnz() << " | " << eval_ms << " | " << t_s << " | "
           << t_m << " | " << t_m / t_s << " |\n";
  }

  double slope = 0.0;
  if (slope_sizes.size() >= 2) {
    std::vector<double> lx, ly;
    for (Index n : slope_sizes) {
      lx.push_back(std::log(static_cast<double>(n)));
      ly.push_back(std::log(1e3 * time_concentrated_eval(n, seed, std::max(evals, 60))));
    }
    const double mx = pairwise_sum(lx) / lx.size();
    const double my = pairwise_sum(ly) / ly.size();
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxx += (lx[i] - mx) * (lx[i] - mx);
      sxy += (lx[i] - mx) * (ly[i] - my);
    }
    slope = sxy / sxx;
    report << "\nconcentrated-objective log-log slope over {";
    for (std::size_t i = 0; i < slope_sizes.size(); ++i)
      report << (i ? "," : "") << slope_sizes[i];
    report << "}: " << slope << "\n";
  }
  std::cout << report.str();
  if (!out_dir.empty()) write_file(fs::path(out_dir) / "bench.md", report.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SAR model estimation by quasi-score matching, with QMLE baseline"};
  app.require_subcommand(1);

  // fit
  auto* fit = app.add_subcommand("fit", "fit the SAR model to an edge list + covariate table");
  std::string edges, covariates, response, isolated = "error", out_dir, det_name;
  bool one_based = false, no_intercept = false;
  std::vector<std::string> estimators = {"qsm", "qsm_improved", "qmle"};
  FitOptions fit_opts;
  fit->add_option("--edges", edges, "edge list file, one 'i j' pair per line")->required();
  fit->add_option("--covariates", covariates, "CSV with header row")->required();
  fit->add_option("--response", response, "response column name")->required();
  fit->add_flag("--one-based", one_based, "node ids start at 1");
  fit->add_option("--isolated", isolated, "isolated-node policy: error, drop, keep")
      ->check(CLI::IsMember({"error", "drop", "keep"}));
  fit->add_flag("--no-intercept", no_intercept, "do not prepend an intercept column");
  fit->add_option("--estimators", estimators, "subset of qsm, qsm_improved, qmle")
      ->delimiter(',');
  fit->add_option("--out", out_dir, "output directory");
  fit->add_option("--lambda-min", fit_opts.lambda_min, "parameter space lower bound");
  fit->add_option("--lambda-max", fit_opts.lambda_max, "parameter space upper bound");
  fit->add_option("--grid-points", fit_opts.grid_points, "coarse grid size");
  fit->add_option("--det-strategy", det_name,
                  "dense_lu, eigen_precompute, sparse_lu, hessenberg_precompute");
  fit->add_option("--probes", fit_opts.inference.probes, "stochastic trace probes");

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a replication design file");
  std::string design_path, sim_out;
  int sim_threads = 0;
  sim->add_option("--design", design_path, "design config file")->required();
  sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--threads", sim_threads, "worker pool size");

  // lqcheck
  auto* lqc = app.add_subcommand("lqcheck", "Monte Carlo check of the closed-form LQ moments");
  Index lq_n = 30, lq_d = 3, lq_draws = 2000000;
  std::uint64_t lq_seed = 1;
  std::string lq_err = "normal";
  bool lq_corrupt = false;
  lqc->add_option("--n", lq_n, "dimension of eps");
  lqc->add_option("--d", lq_d, "number of components");
  lqc->add_option("--errors", lq_err, "normal or mixture")
      ->check(CLI::IsMember({"normal", "mixture"}));
  lqc->add_option("--draws", lq_draws, "Monte Carlo draws");
  lqc->add_option("--seed", lq_seed, "instance seed");
  lqc->add_flag("--corrupt-cov", lq_corrupt, "negative control: perturb the closed form")
      ->group("");  // hidden

  // bench
  auto* bench = app.add_subcommand("bench", "time QSM vs QMLE and the objective scaling");
  std::vector<Index> sizes = {500, 1000, 5000};
  std::vector<Index> slope_sizes = {1000, 4000, 16000};
  std::string bench_weights = "bernoulli", bench_out;
  std::uint64_t bench_seed = 1;
  int bench_evals = 50;
  bench->add_option("--sizes", sizes, "n values for the t_M/t_S table")->delimiter(',');
  bench->add_option("--slope-sizes", slope_sizes, "n values for the scaling fit")->delimiter(',');
  bench->add_option("--weights", bench_weights, "bernoulli or sbm")
      ->check(CLI::IsMember({"bernoulli", "sbm"}));
  bench->add_option("--seed", bench_seed, "data seed");
  bench->add_option("--evals", bench_evals, "objective evaluations per size");
  bench->add_option("--out", bench_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (fit->parsed())
      return cmd_fit(edges, covariates, response, one_based, isolated, no_intercept, estimators,
                     out_dir.empty() ? results_dir_default() : out_dir, fit_opts, det_name);
    if (sim->parsed())
      return cmd_simulate(design_path, sim_out.empty() ? results_dir_default() : sim_out,
                          sim_threads);
    if (lqc->parsed()) return cmd_lqcheck(lq_n, lq_d, lq_err, lq_draws, lq_seed, lq_corrupt);
    if (bench->parsed())
      return cmd_bench(sizes, slope_sizes, bench_weights, bench_seed, bench_evals, bench_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const FitError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}
