#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sarsm/qmle.hpp"
#include "sarsm/qsm.hpp"

namespace sarsm {

/// Malformed design file or unknown key; CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class WeightsKind { bernoulli, sbm };
enum class ErrorKind { normal, mixture };

/// One simulation setting: W and X are redrawn every replication, the
/// response comes from the true model at theta0, and each replication owns an
/// independent seeded stream (derived from base_seed and the rep index).
struct SimDesign {
  Index n = 500;
  double lambda0 = 0.3;
  VectorXd beta0 = (VectorXd(2) << 2.0, 1.0).finished();
  double sigma2_0 = 1.0;
  WeightsKind weights = WeightsKind::bernoulli;
  ErrorKind errors = ErrorKind::normal;
  int reps = 1000;
  std::uint64_t base_seed = 1;
  std::vector<Method> estimators = {Method::qsm, Method::qsm_improved, Method::qmle};
  double edge_prob = -1.0;  // < 0 means the default 5/n
  int sbm_blocks = 5;
  int threads = 1;
  bool with_inference = false;  // per-rep QSM sandwich (coverage studies)
  FitOptions fit;
  std::optional<DetStrategy> det_strategy;

  void validate() const;
};

struct RepOutcome {
  bool ok = false;
  std::string error;
  ParamVector qsm, improved, qmle;
  double t_s = 0.0, t_m = 0.0;       // seconds
  double se_lambda_qsm = 0.0;        // only when with_inference
  bool inference_ok = false;
  double kurtosis_plugin = 0.0;      // m4 / sigma_hat^4 at the QSM estimate
  Index zero_rows = 0;
};

struct MetricsCell {
  double bias = 0.0, sd = 0.0, rmse = 0.0;
};

/// BIAS/SD/RMSE per parameter per estimator plus mean fit timings. The
/// RMSE^2 = BIAS^2 + SD^2 identity holds by construction.
struct MetricsTable {
  Index n = 0;
  double lambda0 = 0.0;
  int reps_requested = 0, reps_done = 0, failures = 0;
  std::vector<std::string> param_names;
  std::vector<Method> estimators;
  std::vector<std::vector<MetricsCell>> cells;  // [estimator][parameter]
  double t_s_seconds = 0.0, t_m_seconds = 0.0;
  double ratio_tm_ts() const { return t_s_seconds > 0.0 ? t_m_seconds / t_s_seconds : 0.0; }
  const MetricsCell& cell(Method m, const std::string& param) const;
};

/// Runs the replication loop (parallel over a worker pool when
/// design.threads > 1; results identical to the serial order). Failed
/// replications are excluded from the aggregates and counted.
MetricsTable run_design(const SimDesign& design, std::vector<RepOutcome>* outcomes = nullptr);

enum class TableFormat { csv, json, markdown };

/// BIAS/SD/RMSE are emitted x100, as the table headers note.
std::string emit_table(const MetricsTable& table, TableFormat format);
MetricsTable metrics_from_json(const std::string& text);

/// Flat key = value design grammar: n, lambda0, beta0, weights, errors, reps,
/// seed, estimators, plus optional edge_prob, sbm_blocks, sigma2, threads,
/// grid_points, lambda_min, lambda_max, det_strategy. '#' starts a comment.
SimDesign parse_design(std::istream& in);
SimDesign parse_design_file(const std::string& path);

/// Numerically stable sum in a fixed order (pairwise reduction).
double pairwise_sum(const std::vector<double>& values);

/// Mean seconds for one concentrated-objective evaluation on a Bernoulli
/// design of size n (mean degree 5). Evaluations cycle round-robin over
/// enough independent instances to exceed the last-level cache, so the
/// measured cost reflects per-byte work at every size rather than cache
/// residency of the smallest problems.
double time_concentrated_eval(Index n, std::uint64_t seed, int evals = 120);

}  // namespace sarsm
