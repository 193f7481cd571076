#include "sarsm/qmle.hpp"

#include <chrono>
#include <cmath>

namespace sarsm {

namespace {

using Clock = std::chrono::steady_clock;

// sigma2_tilde(lambda) is quadratic in lambda after one pass over W.
struct LoglikCache {
  Index n, p;
  double yy, yw, ww;
  MatrixXd xtx;
  Eigen::LLT<MatrixXd> llt;
  VectorXd xty, xtw;

  explicit LoglikCache(const SarData& data) : n(data.n()), p(data.p()) {
    const VectorXd wy = data.W.csr() * data.y;
    yy = data.y.squaredNorm();
    yw = data.y.dot(wy);
    ww = wy.squaredNorm();
    xty = data.X.transpose() * data.y;
    xtw = data.X.transpose() * wy;
    if (p > 0) {
      xtx = data.X.transpose() * data.X;
      llt.compute(xtx);
      if (llt.info() != Eigen::Success)
        throw std::invalid_argument("fit_qmle: X^T X not positive definite");
    }
  }

  VectorXd beta(double lambda) const {
    if (p == 0) return VectorXd(0);
    return llt.solve(xty - lambda * xtw);
  }

  double sigma2(double lambda) const {
    const double sy_sq = yy - 2.0 * lambda * yw + lambda * lambda * ww;
    if (p == 0) return sy_sq / static_cast<double>(n);
    const VectorXd c = xty - lambda * xtw;
    return (sy_sq - c.dot(llt.solve(c))) / static_cast<double>(n);
  }
};

}  // namespace

VectorXd beta_tilde_given_lambda(const SarData& data, double lambda) {
  data.validate();
  if (data.p() == 0) return VectorXd(0);
  ShiftOperator s(data.W, lambda);
  const VectorXd sy = apply_shift(s, data.y);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(data.X);
  if (qr.rank() < data.p()) throw std::invalid_argument("beta_tilde: X is rank deficient");
  return qr.solve(sy);
}

double sigma2_tilde_given_lambda(const SarData& data, double lambda) {
  data.validate();
  ShiftOperator s(data.W, lambda);
  const VectorXd sy = apply_shift(s, data.y);
  if (data.p() == 0) return sy.squaredNorm() / static_cast<double>(data.n());
  const VectorXd beta = beta_tilde_given_lambda(data, lambda);
  return (sy - data.X * beta).squaredNorm() / static_cast<double>(data.n());
}

double concentrated_loglik(const SarData& data, double lambda, const LogDetEngine& engine) {
  data.validate();
  const double s2 = sigma2_tilde_given_lambda(data, lambda);
  if (!(s2 > 0.0))
    throw FitError("concentrated_loglik: degenerate sigma2 at lambda=" + std::to_string(lambda));
  const double n = static_cast<double>(data.n());
  return engine(lambda) - 0.5 * n * std::log(n * s2);
}

double concentrated_loglik(const SarData& data, double lambda, DetStrategy strategy) {
  return concentrated_loglik(data, lambda, LogDetEngine(data.W, strategy));
}

DetStrategy auto_det_strategy(Index n) {
  return n <= 4000 ? DetStrategy::hessenberg_precompute : DetStrategy::sparse_lu;
}

FitReport fit_qmle(const SarData& data, const QmleOptions& opts) {
  data.validate();
  if (data.p() > 0) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(data.X);
    if (qr.rank() < data.p()) throw std::invalid_argument("fit_qmle: X is rank deficient");
  }
  const auto start = Clock::now();
  const DetStrategy strategy = opts.det_strategy.value_or(auto_det_strategy(data.n()));
  const LogDetEngine engine(data.W, strategy);
  const LoglikCache cache(data);
  const double n = static_cast<double>(data.n());
  auto neg_loglik = [&](double lambda) {
    const double s2 = cache.sigma2(lambda);
    if (!(s2 > 0.0))
      throw FitError("fit_qmle: degenerate sigma2 at lambda=" + std::to_string(lambda));
    return -(engine(lambda) - 0.5 * n * std::log(n * s2));
  };
  const LineSearchResult search =
      minimize_scalar(neg_loglik, opts.fit.lambda_min, opts.fit.lambda_max,
                      opts.fit.grid_points, opts.fit.lambda_tol);

  FitReport report;
  report.method = Method::qmle;
  report.theta.lambda = search.x;
  report.theta.beta = cache.beta(search.x);
  report.theta.sigma2 = cache.sigma2(search.x);
  report.timing_ms =
      std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  report.diagnostics["objective_evals"] = search.evaluations;
  report.diagnostics["det_strategy"] = static_cast<double>(strategy);
  if (search.skipped_grid_points > 0)
    report.diagnostics["skipped_grid_points"] = search.skipped_grid_points;

  if (opts.fit.with_inference) {
    const auto inf_start = Clock::now();
    try {
      const MatrixXd cov = qmle_sandwich(data, report.theta,
                                         moment_plugins(data, report.theta),
                                         opts.fit.inference);
      report.cov = cov;
      const WaldSummary wald = wald_report(report.theta.to_vector(), cov, data.n());
      report.std_errors = wald.std_errors;
      report.p_values = wald.p_values;
      if (!wald.all_valid) report.warnings.push_back("negative variance diagonal in sandwich");
    } catch (const InferenceError& e) {
      report.inference_ok = false;
      report.warnings.push_back(e.what());
    }
    report.diagnostics["inference_ms"] =
        std::chrono::duration<double, std::milli>(Clock::now() - inf_start).count();
  }
  return report;
}

}  // namespace sarsm
