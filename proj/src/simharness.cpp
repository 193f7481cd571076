#include "sarsm/simharness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sarsm/netgen.hpp"

namespace sarsm {

void SimDesign::validate() const {
  if (reps < 1) throw ConfigError("design: reps must be >= 1");
  if (n < 10) throw ConfigError("design: n must be >= 10");
  if (!(lambda0 > fit.lambda_min && lambda0 < fit.lambda_max))
    throw ConfigError("design: lambda0 outside the parameter space");
  if (beta0.size() < 1) throw ConfigError("design: beta0 must have at least one entry");
  if (!(sigma2_0 > 0.0)) throw ConfigError("design: sigma2 must be positive");
  if (estimators.empty()) throw ConfigError("design: estimators must not be empty");
  if (threads < 1) throw ConfigError("design: threads must be >= 1");
}

const MetricsCell& MetricsTable::cell(Method m, const std::string& param) const {
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    if (estimators[e] != m) continue;
    for (std::size_t k = 0; k < param_names.size(); ++k)
      if (param_names[k] == param) return cells[e][k];
  }
  throw std::invalid_argument("MetricsTable: no cell for " + std::string(method_name(m)) + "/" +
                              param);
}

double pairwise_sum(const std::vector<double>& values) {
  struct Rec {
    static double sum(const double* v, std::size_t k) {
      if (k <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += v[i];
        return s;
      }
      const std::size_t half = k / 2;
      return sum(v, half) + sum(v + half, k - half);
    }
  };
  return values.empty() ? 0.0 : Rec::sum(values.data(), values.size());
}

namespace {

using Clock = std::chrono::steady_clock;

bool wants(const SimDesign& d, Method m) {
  return std::find(d.estimators.begin(), d.estimators.end(), m) != d.estimators.end();
}

RepOutcome run_one(const SimDesign& design, int rep) {
  RepOutcome out;
  const std::uint64_t rep_seed = derive_stream_seed(design.base_seed, static_cast<std::uint64_t>(rep));
  try {
    SparseWeights adj = design.weights == WeightsKind::bernoulli
                            ? gen_bernoulli(design.n,
                                            design.edge_prob > 0.0
                                                ? design.edge_prob
                                                : 5.0 / static_cast<double>(design.n),
                                            derive_stream_seed(rep_seed, 1))
                            : gen_sbm(design.n, design.sbm_blocks,
                                      std::pow(static_cast<double>(design.n), -0.4),
                                      std::pow(static_cast<double>(design.n), -0.8),
                                      derive_stream_seed(rep_seed, 1));
    SparseWeights w = row_normalize(adj, &out.zero_rows);

    const Index p = design.beta0.size();
    MatrixXd x(design.n, p);
    SplitMix64 xrng(derive_stream_seed(rep_seed, 2));
    x.col(0).setOnes();
    for (Index j = 1; j < p; ++j)
      for (Index i = 0; i < design.n; ++i) x(i, j) = xrng.normal();

    ParamVector theta0;
    theta0.lambda = design.lambda0;
    theta0.beta = design.beta0;
    theta0.sigma2 = design.sigma2_0;
    const ErrorDistribution err = design.errors == ErrorKind::normal
                                      ? ErrorDistribution::standard_normal()
                                      : ErrorDistribution::mixture_normal();
    const SarData data =
        simulate_sar(theta0, std::move(x), std::move(w), err, derive_stream_seed(rep_seed, 3));

    FitOptions fit_opts = design.fit;
    fit_opts.with_inference = false;

    const bool want_qsm = wants(design, Method::qsm);
    const bool want_improved = wants(design, Method::qsm_improved);
    const bool want_qmle = wants(design, Method::qmle);

    if (want_qsm || want_improved) {
      // t_S covers obtaining both quasi-score-matching estimators
      const auto t0 = Clock::now();
      const FitReport qsm = fit_qsm(data, fit_opts);
      const FitReport improved = fit_improved(data, qsm.theta.lambda, fit_opts);
      out.t_s = std::chrono::duration<double>(Clock::now() - t0).count();
      out.qsm = qsm.theta;
      out.improved = improved.theta;
      out.kurtosis_plugin = [&] {
        const MomentDiagonals m = moment_plugins(data, qsm.theta);
        return m.m4(0) / (qsm.theta.sigma2 * qsm.theta.sigma2);
      }();
      if (design.with_inference) {
        try {
          const auto cov =
              qsm_sandwich(data, qsm.theta, moment_plugins(data, qsm.theta), fit_opts.inference);
          out.se_lambda_qsm =
              std::sqrt(cov.sandwich_qsm(0, 0) / static_cast<double>(design.n));
          out.inference_ok = true;
        } catch (const InferenceError&) {
          out.inference_ok = false;
        }
      }
    }
    if (want_qmle) {
      QmleOptions qopts;
      qopts.fit = fit_opts;
      qopts.det_strategy = design.det_strategy;
      const auto t0 = Clock::now();
      const FitReport qmle = fit_qmle(data, qopts);
      out.t_m = std::chrono::duration<double>(Clock::now() - t0).count();
      out.qmle = qmle.theta;
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

MetricsCell aggregate_cell(const std::vector<double>& estimates, double truth) {
  std::vector<double> dev(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) dev[i] = estimates[i] - truth;
  const double bias = pairwise_sum(dev) / static_cast<double>(dev.size());
  const double mean = bias + truth;
  std::vector<double> sq(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i)
    sq[i] = (estimates[i] - mean) * (estimates[i] - mean);
  const double sd = std::sqrt(pairwise_sum(sq) / static_cast<double>(sq.size()));
  MetricsCell c;
  c.bias = bias;
  c.sd = sd;
  c.rmse = std::hypot(bias, sd);
  return c;
}

}  // namespace

MetricsTable run_design(const SimDesign& design, std::vector<RepOutcome>* outcomes_out) {
  design.validate();
  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(design.reps));
  if (design.threads <= 1) {
    for (int r = 0; r < design.reps; ++r) outcomes[static_cast<std::size_t>(r)] = run_one(design, r);
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= design.reps) return;
        outcomes[static_cast<std::size_t>(r)] = run_one(design, r);
      }
    };
    std::vector<std::thread> pool;
    const int k = std::min(design.threads, design.reps);
    pool.reserve(static_cast<std::size_t>(k));
    for (int t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  MetricsTable table;
  table.n = design.n;
  table.lambda0 = design.lambda0;
  table.reps_requested = design.reps;
  table.param_names = default_param_names(design.beta0.size());
  table.estimators = design.estimators;

  const Index dim = design.beta0.size() + 2;
  VectorXd truth(dim);
  truth(0) = design.lambda0;
  truth.segment(1, design.beta0.size()) = design.beta0;
  truth(dim - 1) = design.sigma2_0;

  std::vector<double> ts, tm;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++table.failures;
      continue;
    }
    ++table.reps_done;
    ts.push_back(o.t_s);
    tm.push_back(o.t_m);
  }
  if (table.reps_done == 0) throw FitError("run_design: every replication failed");
  if (wants(design, Method::qsm) || wants(design, Method::qsm_improved))
    table.t_s_seconds = pairwise_sum(ts) / static_cast<double>(table.reps_done);
  if (wants(design, Method::qmle))
    table.t_m_seconds = pairwise_sum(tm) / static_cast<double>(table.reps_done);

  for (Method m : design.estimators) {
    std::vector<MetricsCell> row;
    for (Index k = 0; k < dim; ++k) {
      std::vector<double> est;
      est.reserve(static_cast<std::size_t>(table.reps_done));
      for (const auto& o : outcomes) {
        if (!o.ok) continue;
        const ParamVector& th =
            m == Method::qsm ? o.qsm : (m == Method::qsm_improved ? o.improved : o.qmle);
        est.push_back(th.to_vector()(k));
      }
      row.push_back(aggregate_cell(est, truth(k)));
    }
    table.cells.push_back(std::move(row));
  }
  if (outcomes_out) *outcomes_out = std::move(outcomes);
  return table;
}

namespace {

nlohmann::json cell_json(const MetricsCell& c) {
  return {{"bias", c.bias}, {"sd", c.sd}, {"rmse", c.rmse}};
}

}  // namespace

std::string emit_table(const MetricsTable& t, TableFormat format) {
  std::ostringstream os;
  switch (format) {
    case TableFormat::csv: {
      os << "estimator,parameter,bias_x100,sd_x100,rmse_x100\n";
      for (std::size_t e = 0; e < t.estimators.size(); ++e)
        for (std::size_t k = 0; k < t.param_names.size(); ++k) {
          const auto& c = t.cells[e][k];
          os << method_name(t.estimators[e]) << ',' << t.param_names[k] << ','
             << std::setprecision(17) << 100.0 * c.bias << ',' << 100.0 * c.sd << ','
             << 100.0 * c.rmse << '\n';
        }
      os << "# t_S_seconds," << std::setprecision(17) << t.t_s_seconds << "\n";
      os << "# t_M_seconds," << t.t_m_seconds << "\n";
      break;
    }
    case TableFormat::markdown: {
      os << "BIAS/SD/RMSE are 100x the raw values (n = " << t.n << ", " << t.reps_done
         << " replications";
      if (t.failures > 0) os << ", " << t.failures << " failed";
      os << ")\n\n";
      os << "| estimator | parameter | BIAS | SD | RMSE |\n";
      os << "|---|---|---:|---:|---:|\n";
      os << std::fixed << std::setprecision(2);
      for (std::size_t e = 0; e < t.estimators.size(); ++e)
        for (std::size_t k = 0; k < t.param_names.size(); ++k) {
          const auto& c = t.cells[e][k];
          os << "| " << method_name(t.estimators[e]) << " | " << t.param_names[k] << " | "
             << 100.0 * c.bias << " | " << 100.0 * c.sd << " | " << 100.0 * c.rmse << " |\n";
        }
      os << "\n";
      if (t.t_s_seconds > 0.0) os << "t_S = " << std::setprecision(4) << t.t_s_seconds << " s";
      if (t.t_m_seconds > 0.0) {
        os << (t.t_s_seconds > 0.0 ? ", " : "") << "t_M = " << std::setprecision(4)
           << t.t_m_seconds << " s";
        if (t.t_s_seconds > 0.0)
          os << " (t_M/t_S = " << std::setprecision(2) << t.ratio_tm_ts() << ")";
      }
      os << "\n";
      break;
    }
    case TableFormat::json: {
      nlohmann::json j;
      j["schema_version"] = 1;
      j["n"] = t.n;
      j["lambda0"] = t.lambda0;
      j["reps_requested"] = t.reps_requested;
      j["reps_done"] = t.reps_done;
      j["failures"] = t.failures;
      j["param_names"] = t.param_names;
      j["scale_note"] = "bias/sd/rmse stored raw; tables print 100x";
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t e = 0; e < t.estimators.size(); ++e) {
        nlohmann::json row;
        row["method"] = method_name(t.estimators[e]);
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& c : t.cells[e]) cells.push_back(cell_json(c));
        row["cells"] = std::move(cells);
        rows.push_back(std::move(row));
      }
      j["estimators"] = std::move(rows);
      j["t_s_seconds"] = t.t_s_seconds;
      j["t_m_seconds"] = t.t_m_seconds;
      os << j.dump(2);
      break;
    }
  }
  return os.str();
}

MetricsTable metrics_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  MetricsTable t;
  t.n = j.at("n").get<Index>();
  t.lambda0 = j.at("lambda0").get<double>();
  t.reps_requested = j.at("reps_requested").get<int>();
  t.reps_done = j.at("reps_done").get<int>();
  t.failures = j.at("failures").get<int>();
  t.param_names = j.at("param_names").get<std::vector<std::string>>();
  for (const auto& row : j.at("estimators")) {
    t.estimators.push_back(parse_method(row.at("method").get<std::string>()));
    std::vector<MetricsCell> cells;
    for (const auto& c : row.at("cells")) {
      MetricsCell cell;
      cell.bias = c.at("bias").get<double>();
      cell.sd = c.at("sd").get<double>();
      cell.rmse = c.at("rmse").get<double>();
      cells.push_back(cell);
    }
    t.cells.push_back(std::move(cells));
  }
  t.t_s_seconds = j.at("t_s_seconds").get<double>();
  t.t_m_seconds = j.at("t_m_seconds").get<double>();
  return t;
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key) {
  throw ConfigError("design: malformed value for key '" + key + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) bad_value(key);
    return d;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad_value(key);
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) bad_value(key);
    return d;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad_value(key);
  }
}

}  // namespace

SimDesign parse_design(std::istream& in) {
  SimDesign d;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ConfigError("design line " + std::to_string(line_no) + ": expected key = value");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("design line " + std::to_string(line_no) + ": empty key or value");

    if (key == "n")
      d.n = static_cast<Index>(to_int(key, value));
    else if (key == "lambda0")
      d.lambda0 = to_double(key, value);
    else if (key == "beta0") {
      const auto parts = split_list(value);
      if (parts.empty()) bad_value(key);
      d.beta0.resize(static_cast<Index>(parts.size()));
      for (std::size_t i = 0; i < parts.size(); ++i)
        d.beta0(static_cast<Index>(i)) = to_double(key, parts[i]);
    } else if (key == "sigma2")
      d.sigma2_0 = to_double(key, value);
    else if (key == "weights") {
      if (value == "bernoulli")
        d.weights = WeightsKind::bernoulli;
      else if (value == "sbm")
        d.weights = WeightsKind::sbm;
      else
        bad_value(key);
    } else if (key == "errors") {
      if (value == "normal")
        d.errors = ErrorKind::normal;
      else if (value == "mixture")
        d.errors = ErrorKind::mixture;
      else
        bad_value(key);
    } else if (key == "reps")
      d.reps = static_cast<int>(to_int(key, value));
    else if (key == "seed")
      d.base_seed = static_cast<std::uint64_t>(to_int(key, value));
    else if (key == "estimators") {
      d.estimators.clear();
      for (const auto& name : split_list(value)) {
        try {
          d.estimators.push_back(parse_method(name));
        } catch (const std::invalid_argument&) {
          bad_value(key);
        }
      }
      if (d.estimators.empty()) bad_value(key);
    } else if (key == "edge_prob")
      d.edge_prob = to_double(key, value);
    else if (key == "sbm_blocks")
      d.sbm_blocks = static_cast<int>(to_int(key, value));
    else if (key == "threads")
      d.threads = static_cast<int>(to_int(key, value));
    else if (key == "grid_points")
      d.fit.grid_points = static_cast<int>(to_int(key, value));
    else if (key == "lambda_min")
      d.fit.lambda_min = to_double(key, value);
    else if (key == "lambda_max")
      d.fit.lambda_max = to_double(key, value);
    else if (key == "det_strategy") {
      try {
        d.det_strategy = parse_det_strategy(value);
      } catch (const std::invalid_argument&) {
        bad_value(key);
      }
    } else
      throw ConfigError("design: unknown key '" + key + "'");
  }
  d.validate();
  return d;
}

SimDesign parse_design_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open design file '" + path + "'");
  return parse_design(in);
}

double time_concentrated_eval(Index n, std::uint64_t seed, int evals) {
  using Clock = std::chrono::steady_clock;
  // ~150 bytes per node and instance (W, W^T, X, y); size the pool to push
  // the total working set past the cache
  const double bytes_per_instance = 150.0 * static_cast<double>(n);
  const int replicas =
      static_cast<int>(std::clamp(64.0e6 / bytes_per_instance, 2.0, 512.0));
  std::vector<SarData> pool;
  pool.reserve(static_cast<std::size_t>(replicas));
  for (int r = 0; r < replicas; ++r) {
    const std::uint64_t s = derive_stream_seed(seed, static_cast<std::uint64_t>(r));
    SparseWeights w =
        row_normalize(gen_bernoulli(n, 5.0 / static_cast<double>(n), derive_stream_seed(s, 1)));
    SplitMix64 rng(derive_stream_seed(s, 2));
    SarData d;
    d.X.resize(n, 2);
    d.X.col(0).setOnes();
    d.y.resize(n);
    for (Index i = 0; i < n; ++i) {
      d.X(i, 1) = rng.normal();
      d.y(i) = rng.normal();  // values are irrelevant for timing
    }
    d.W = std::move(w);
    pool.push_back(std::move(d));
  }
  const int total = std::max(evals, 2 * replicas);
  SplitMix64 lrng(derive_stream_seed(seed, 777));
  double sink = 0.0;
  // warm pass touches every instance once
  for (int r = 0; r < replicas; ++r)
    sink += concentrated_objective(pool[static_cast<std::size_t>(r)], 0.25);
  const auto t0 = Clock::now();
  for (int k = 0; k < total; ++k)
    sink += concentrated_objective(pool[static_cast<std::size_t>(k % replicas)],
                                   -0.9 + 1.8 * lrng.uniform01());
  const double sec = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!std::isfinite(sink)) throw FitError("time_concentrated_eval: degenerate instance");
  return sec / total;
}

}  // namespace sarsm
