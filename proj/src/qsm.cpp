#include "sarsm/qsm.hpp"

#include <chrono>
#include <tuple>
#include <cmath>

namespace sarsm {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_design_rank(const SarData& data) {
  if (data.p() == 0) return;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(data.X);
  if (qr.rank() < data.p()) throw std::invalid_argument("fit: X is rank deficient");
}

// Per-fit cache: every quantity entering D_n^c(lambda) is polynomial in
// lambda, so one O(nnz p) precompute makes each evaluation O(p^3).
struct ConcentratedCache {
  Index n, p;
  double tr_w, frob_w;
  double yy, ys, yb, ss, sb, bb;
  MatrixXd P0, P1, P2;          // X^T X, V^T X, V^T V with V = W^T X
  VectorXd q0, q1, q2, r0, r1, r2;

  explicit ConcentratedCache(const SarData& data) : n(data.n()), p(data.p()) {
    std::tie(tr_w, frob_w) = weight_traces(data.W);
    const CsrMatrix& w = data.W.csr();
    const CsrMatrix& wt = data.W.csr_transposed();
    const VectorXd wy = w * data.y;
    const VectorXd s = wy + wt * data.y;          // (W + W^T) y
    const VectorXd b = wt * wy;                   // W^T W y
    yy = data.y.squaredNorm();
    ys = data.y.dot(s);
    yb = data.y.dot(b);
    ss = s.squaredNorm();
    sb = s.dot(b);
    bb = b.squaredNorm();
    const MatrixXd v = wt * data.X;               // W^T X
    P0 = data.X.transpose() * data.X;
    P1 = v.transpose() * data.X;
    P2 = v.transpose() * v;
    q0 = data.X.transpose() * data.y;
    q1 = data.X.transpose() * s;
    q2 = data.X.transpose() * b;
    r0 = v.transpose() * data.y;
    r1 = v.transpose() * s;
    r2 = v.transpose() * b;
  }

  struct Point {
    VectorXd beta;
    double quad;      // ||S^T(S y - X beta_hat)||^2
    double tr_sts;
    double sigma2;
    double objective; // D_n^c(lambda)
  };

  Point at(double lambda) const {
    const double l2 = lambda * lambda;
    const double l3 = l2 * lambda;
    Point pt;
    pt.tr_sts = static_cast<double>(n) - 2.0 * lambda * tr_w + l2 * frob_w;
    const double tt = yy - 2.0 * lambda * ys + l2 * (ss + 2.0 * yb) - 2.0 * l3 * sb + l2 * l2 * bb;
    if (p == 0) {
      pt.beta = VectorXd(0);
      pt.quad = tt;
    } else {
      const MatrixXd m = P0 - lambda * (P1 + P1.transpose()) + l2 * P2;
      const VectorXd rhs = q0 - lambda * (q1 + r0) + l2 * (q2 + r1) - l3 * r2;
      Eigen::LDLT<MatrixXd> ldlt(m);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw FitError("fit_qsm: X^T S S^T X singular at lambda=" + std::to_string(lambda));
      pt.beta = ldlt.solve(rhs);
      pt.quad = tt - 2.0 * pt.beta.dot(rhs) + pt.beta.dot(m * pt.beta);
    }
    if (!(pt.quad > 0.0) || !(pt.tr_sts > 0.0))
      throw FitError("fit_qsm: degenerate concentrated objective at lambda=" +
                     std::to_string(lambda));
    pt.sigma2 = pt.quad / pt.tr_sts;
    pt.objective = -0.5 * pt.tr_sts * pt.tr_sts / pt.quad;
    return pt;
  }
};

}  // namespace

double objective_full(const SarData& data, const ParamVector& theta) {
  data.validate();
  if (!(theta.sigma2 > 0.0)) throw std::invalid_argument("objective_full: sigma2 must be > 0");
  const auto [tr_w, frob] = weight_traces(data.W);
  const double tr_sts =
      static_cast<double>(data.n()) - 2.0 * theta.lambda * tr_w + theta.lambda * theta.lambda * frob;
  const VectorXd eps = residuals(data, theta);
  ShiftOperator s(data.W, theta.lambda);
  const VectorXd st_eps = apply_shift(s, eps, /*transpose=*/true);
  const double s2 = theta.sigma2;
  return -tr_sts / s2 + st_eps.squaredNorm() / (2.0 * s2 * s2);
}

namespace {

// Z = S^T X and t = S^T S y; beta_hat minimizes ||Z beta - t||, quad is the
// residual norm squared. Scratch buffers are thread-local so repeated
// evaluations stay allocation-free (the O(nnz p + n p^2) claim is about
// arithmetic, not the allocator).
struct DirectPoint {
  VectorXd beta;
  double quad;
};

DirectPoint direct_point(const SarData& data, double lambda) {
  static thread_local MatrixXd wtx, z;
  static thread_local VectorXd wy, sy, t, resid;
  const CsrMatrix& w = data.W.csr();
  const CsrMatrix& wt = data.W.csr_transposed();

  wy.noalias() = w * data.y;
  sy = data.y - lambda * wy;          // S y
  t.noalias() = wt * sy;
  t = sy - lambda * t;                // S^T S y
  DirectPoint pt;
  if (data.p() == 0) {
    pt.beta = VectorXd(0);
    pt.quad = t.squaredNorm();
    return pt;
  }
  wtx.noalias() = wt * data.X;
  z = data.X - lambda * wtx;          // S^T X
  const MatrixXd gram = z.transpose() * z;
  Eigen::LDLT<MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-13 * ldlt.vectorD().maxCoeff())
    throw FitError("beta_hat: X^T S S^T X rank deficient at lambda=" + std::to_string(lambda));
  pt.beta = ldlt.solve(z.transpose() * t);
  resid = t - z * pt.beta;
  pt.quad = resid.squaredNorm();
  return pt;
}

}  // namespace

VectorXd beta_hat_given_lambda(const SarData& data, double lambda) {
  data.validate();
  return direct_point(data, lambda).beta;
}

double sigma2_hat_given_lambda(const SarData& data, double lambda) {
  data.validate();
  const double quad = direct_point(data, lambda).quad;
  const auto [tr_w, frob] = weight_traces(data.W);
  const double tr = static_cast<double>(data.n()) - 2.0 * lambda * tr_w + lambda * lambda * frob;
  return quad / tr;
}

double concentrated_objective(const SarData& data, double lambda) {
  data.validate();
  const double quad = direct_point(data, lambda).quad;
  if (!(quad > 0.0))
    throw FitError("concentrated_objective: degenerate fit at lambda=" + std::to_string(lambda));
  const auto [tr_w, frob] = weight_traces(data.W);
  const double tr = static_cast<double>(data.n()) - 2.0 * lambda * tr_w + lambda * lambda * frob;
  return -0.5 * tr * tr / quad;
}

FitReport fit_qsm(const SarData& data, const FitOptions& opts, QsmProfile* profile) {
  data.validate();
  check_design_rank(data);
  const auto start = Clock::now();
  const ConcentratedCache cache(data);
  const LineSearchResult search =
      minimize_scalar([&](double l) { return cache.at(l).objective; }, opts.lambda_min,
                      opts.lambda_max, opts.grid_points, opts.lambda_tol);
  const auto sol = cache.at(search.x);

  FitReport report;
  report.method = Method::qsm;
  report.theta.lambda = search.x;
  report.theta.beta = sol.beta;
  report.theta.sigma2 = sol.sigma2;
  report.timing_ms = elapsed_ms(start);
  report.diagnostics["objective_evals"] = search.evaluations;
  if (search.skipped_grid_points > 0) {
    report.diagnostics["skipped_grid_points"] = search.skipped_grid_points;
    report.warnings.push_back("degenerate grid points skipped: " +
                              std::to_string(search.skipped_grid_points));
  }
  if (profile) {
    profile->lambda_grid = search.grid;
    profile->objective_values = search.grid_values;
    profile->argmin_lambda = search.x;
    profile->skipped_grid_points = search.skipped_grid_points;
    profile->refine_trace = search.refine_trace;
  }
  if (opts.with_inference) {
    const auto inf_start = Clock::now();
    try {
      const auto cov = qsm_sandwich(data, report.theta, moment_plugins(data, report.theta),
                                    opts.inference);
      report.cov = cov.sandwich_qsm;
      const WaldSummary wald = wald_report(report.theta.to_vector(), report.cov, data.n());
      report.std_errors = wald.std_errors;
      report.p_values = wald.p_values;
      if (!wald.all_valid) report.warnings.push_back("negative variance diagonal in sandwich");
    } catch (const InferenceError& e) {
      report.inference_ok = false;
      report.warnings.push_back(e.what());
    }
    report.diagnostics["inference_ms"] = elapsed_ms(inf_start);
  }
  return report;
}

FitReport fit_improved(const SarData& data, double lambda_hat, const FitOptions& opts) {
  data.validate();
  check_design_rank(data);
  const auto start = Clock::now();
  ShiftOperator s(data.W, lambda_hat);
  const VectorXd sy = apply_shift(s, data.y);
  FitReport report;
  report.method = Method::qsm_improved;
  report.theta.lambda = lambda_hat;
  if (data.p() == 0) {
    report.theta.beta = VectorXd(0);
    report.theta.sigma2 = sy.squaredNorm() / static_cast<double>(data.n());
  } else {
    Eigen::LLT<MatrixXd> llt(data.X.transpose() * data.X);
    if (llt.info() != Eigen::Success) throw FitError("fit_improved: X^T X not positive definite");
    report.theta.beta = llt.solve(data.X.transpose() * sy);
    report.theta.sigma2 =
        (sy - data.X * report.theta.beta).squaredNorm() / static_cast<double>(data.n());
  }
  report.timing_ms = elapsed_ms(start);
  if (opts.with_inference) {
    const auto inf_start = Clock::now();
    try {
      const auto cov = improved_sandwich(data, report.theta,
                                         moment_plugins(data, report.theta), opts.inference);
      report.cov = cov.sandwich_improved;
      const WaldSummary wald = wald_report(report.theta.to_vector(), report.cov, data.n());
      report.std_errors = wald.std_errors;
      report.p_values = wald.p_values;
      if (!wald.all_valid) report.warnings.push_back("negative variance diagonal in sandwich");
    } catch (const InferenceError& e) {
      report.inference_ok = false;
      report.warnings.push_back(e.what());
    }
    report.diagnostics["inference_ms"] = elapsed_ms(inf_start);
  }
  return report;
}

VectorXd score_at(const SarData& data, const ParamVector& theta) {
  data.validate();
  if (theta.beta.size() != data.p()) throw std::invalid_argument("score_at: beta length mismatch");
  if (!(theta.sigma2 > 0.0)) throw std::invalid_argument("score_at: sigma2 must be > 0");
  const Index p = data.p();
  const double s2 = theta.sigma2;
  const double s4 = s2 * s2;
  const double s6 = s4 * s2;
  const auto [tr_w, frob_w] = weight_traces(data.W);
  const CsrMatrix& w = data.W.csr();
  const CsrMatrix& wt = data.W.csr_transposed();
  ShiftOperator s(data.W, theta.lambda);
  const ShiftFactor factor(data.W, theta.lambda);  // throws on singular S

  const VectorXd eps = residuals(data, theta);
  const VectorXd q = apply_shift(s, eps, /*transpose=*/true);     // S^T eps
  const VectorXd z1 = factor.solve(eps);                          // S^{-1} eps
  const double term_a = q.dot(apply_shift(s, VectorXd(w * z1), /*transpose=*/true));
  const double term_b = q.dot(wt * eps);
  const VectorXd v = factor.solve(data.X * theta.beta);           // S^{-1} X beta
  const VectorXd sq = apply_shift(s, q);                          // S S^T eps
  const double term_c = (w * v).dot(sq);
  const double tr_stw = tr_w - theta.lambda * frob_w;             // tr(S^T W)

  VectorXd g(p + 2);
  g(0) = -(term_a + term_b + term_c) / s4 + 2.0 * tr_stw / s2;
  g.segment(1, p) = -(data.X.transpose() * sq) / s4;
  const double tr_sts = static_cast<double>(data.n()) - 2.0 * theta.lambda * tr_w +
                        theta.lambda * theta.lambda * frob_w;
  g(p + 1) = -q.squaredNorm() / s6 + tr_sts / s4;
  return g;
}

ScoreDecomposition score_decomposition(const SarData& data, const ParamVector& theta) {
  data.validate();
  const Index n = data.n();
  const Index p = data.p();
  const double s4 = theta.sigma2 * theta.sigma2;
  const double s6 = s4 * theta.sigma2;
  MatrixXd sd = -theta.lambda * MatrixXd(data.W.csr());
  sd.diagonal().array() += 1.0;
  const MatrixXd wd = MatrixXd(data.W.csr());
  Eigen::PartialPivLU<MatrixXd> lu(sd);
  const MatrixXd sinv = lu.solve(MatrixXd::Identity(n, n));
  const MatrixXd sst = sd * sd.transpose();

  ScoreDecomposition dec;
  const MatrixXd g1 = sst * wd * sinv;
  const MatrixXd g2 = sd * wd.transpose();
  dec.A1 = -(0.5 * (g1 + g1.transpose()) + 0.5 * (g2 + g2.transpose())) / s4;
  dec.A_p2 = -sst / s6;
  dec.B = MatrixXd::Zero(n, p + 2);
  dec.B.col(0) = -(sst * (wd * (sinv * (data.X * theta.beta)))) / s4;
  dec.B.block(0, 1, n, p) = -(sst * data.X) / s4;
  return dec;
}

}  // namespace sarsm
