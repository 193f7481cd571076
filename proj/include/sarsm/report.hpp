#pragma once

#include <map>
#include <string>
#include <vector>

#include "sarsm/model.hpp"

namespace sarsm {

enum class Method { qsm, qsm_improved, qmle };

const char* method_name(Method m);
Method parse_method(const std::string& name);

/// Standard errors sqrt(diag(cov)/n) and two-sided normal p-values
/// 2(1 - Phi(|theta_k / se_k|)). A negative covariance diagonal yields NaN in
/// both outputs and clears all_valid.
struct WaldSummary {
  VectorXd std_errors;
  VectorXd p_values;
  bool all_valid = true;
};

WaldSummary wald_report(const Eigen::Ref<const VectorXd>& theta,
                        const Eigen::Ref<const MatrixXd>& cov, Index n);

/// Estimation outcome for one method on one dataset. `cov` is the asymptotic
/// covariance of sqrt(n)(theta_hat - theta0); std_errors = sqrt(diag(cov)/n).
/// timing_ms covers the estimation phase only; inference cost is reported in
/// diagnostics["inference_ms"].
struct FitReport {
  Method method = Method::qsm;
  ParamVector theta;
  VectorXd std_errors;
  VectorXd p_values;
  MatrixXd cov;
  double timing_ms = 0.0;
  bool inference_ok = true;
  std::map<std::string, double> diagnostics;
  std::vector<std::string> warnings;
};

/// Versioned JSON form of a report (schema_version 1). `names` are the
/// parameter labels; defaults to lambda, beta_1.., sigma2.
std::string report_to_json(const FitReport& report,
                           const std::vector<std::string>& names = {});

/// Table-style text rendering: coefficient (std.error) and p-value per row.
std::string report_to_text(const FitReport& report,
                           const std::vector<std::string>& names = {});

std::vector<std::string> default_param_names(Index p);

}  // namespace sarsm
