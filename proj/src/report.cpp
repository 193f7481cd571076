#include "sarsm/report.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace sarsm {

const char* method_name(Method m) {
  switch (m) {
    case Method::qsm: return "qsm";
    case Method::qsm_improved: return "qsm_improved";
    case Method::qmle: return "qmle";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "qsm") return Method::qsm;
  if (name == "qsm_improved") return Method::qsm_improved;
  if (name == "qmle") return Method::qmle;
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

WaldSummary wald_report(const Eigen::Ref<const VectorXd>& theta,
                        const Eigen::Ref<const MatrixXd>& cov, Index n) {
  if (cov.rows() != theta.size() || cov.cols() != theta.size())
    throw std::invalid_argument("wald_report: cov dimension mismatch");
  const Index d = theta.size();
  WaldSummary out;
  out.std_errors.resize(d);
  out.p_values.resize(d);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Index k = 0; k < d; ++k) {
    const double v = cov(k, k);
    if (v < 0.0 || !std::isfinite(v)) {
      out.std_errors(k) = nan;
      out.p_values(k) = nan;
      out.all_valid = false;
      continue;
    }
    const double se = std::sqrt(v / static_cast<double>(n));
    out.std_errors(k) = se;
    if (se == 0.0) {
      out.p_values(k) = theta(k) == 0.0 ? 1.0 : 0.0;
    } else {
      const double z = std::abs(theta(k)) / se;
      out.p_values(k) = std::erfc(z / std::sqrt(2.0));
    }
  }
  return out;
}

std::vector<std::string> default_param_names(Index p) {
  std::vector<std::string> names;
  names.reserve(p + 2);
  names.emplace_back("lambda");
  for (Index j = 1; j <= p; ++j) names.emplace_back("beta_" + std::to_string(j));
  names.emplace_back("sigma2");
  return names;
}

namespace {

std::vector<std::string> resolve_names(const FitReport& r, const std::vector<std::string>& names) {
  if (!names.empty()) {
    if (static_cast<Index>(names.size()) != r.theta.dim())
      throw std::invalid_argument("report names: expected " + std::to_string(r.theta.dim()) +
                                  " entries");
    return names;
  }
  return default_param_names(r.theta.beta.size());
}

}  // namespace

std::string report_to_json(const FitReport& r, const std::vector<std::string>& names) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["method"] = method_name(r.method);
  j["parameters"] = resolve_names(r, names);
  const VectorXd theta = r.theta.to_vector();
  j["estimates"] = std::vector<double>(theta.data(), theta.data() + theta.size());
  if (r.std_errors.size() > 0)
    j["std_errors"] = std::vector<double>(r.std_errors.data(), r.std_errors.data() + r.std_errors.size());
  if (r.p_values.size() > 0)
    j["p_values"] = std::vector<double>(r.p_values.data(), r.p_values.data() + r.p_values.size());
  if (r.cov.size() > 0) {
    nlohmann::json cov = nlohmann::json::array();
    for (Index i = 0; i < r.cov.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Index k = 0; k < r.cov.cols(); ++k) row.push_back(r.cov(i, k));
      cov.push_back(std::move(row));
    }
    j["asymptotic_cov"] = std::move(cov);
  }
  j["timing_ms"] = r.timing_ms;
  j["inference_ok"] = r.inference_ok;
  if (!r.diagnostics.empty()) j["diagnostics"] = r.diagnostics;
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  return j.dump(2);
}

std::string report_to_text(const FitReport& r, const std::vector<std::string>& names) {
  const auto labels = resolve_names(r, names);
  const VectorXd theta = r.theta.to_vector();
  std::ostringstream os;
  os << "method: " << method_name(r.method) << "\n";
  std::size_t width = 9;
  for (const auto& s : labels) width = std::max(width, s.size());
  os << std::left << std::setw(static_cast<int>(width) + 2) << "parameter"
     << std::right << std::setw(12) << "coef." << std::setw(14) << "(std.error)"
     << std::setw(12) << "p-value" << "\n";
  for (Index k = 0; k < theta.size(); ++k) {
    os << std::left << std::setw(static_cast<int>(width) + 2) << labels[k] << std::right
       << std::fixed << std::setprecision(4) << std::setw(12) << theta(k);
    if (r.std_errors.size() == theta.size() && std::isfinite(r.std_errors(k))) {
      os << "   (" << std::setprecision(4) << r.std_errors(k) << ")";
      const double p = r.p_values(k);
      if (p < 1e-4)
        os << std::setw(10) << "<1e-4";
      else
        os << std::setw(10) << std::setprecision(4) << p;
    } else {
      os << std::setw(14) << "-" << std::setw(12) << "-";
    }
    os << "\n";
  }
  os << std::setprecision(2) << "fit time: " << r.timing_ms << " ms\n";
  return os.str();
}

}  // namespace sarsm
