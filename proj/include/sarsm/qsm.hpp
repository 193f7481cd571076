#pragma once

#include "sarsm/inference.hpp"
#include "sarsm/model.hpp"
#include "sarsm/optim.hpp"
#include "sarsm/report.hpp"

namespace sarsm {

struct FitOptions {
  double lambda_min = -0.995;
  double lambda_max = 0.995;
  int grid_points = 21;
  double lambda_tol = 1e-8;
  bool with_inference = true;
  InferenceOptions inference;
};

/// Concentrated-objective profile of one fit.
struct QsmProfile {
  VectorXd lambda_grid;
  VectorXd objective_values;  // NaN where a grid point degenerated
  double argmin_lambda = 0.0;
  int skipped_grid_points = 0;
  std::vector<std::pair<double, double>> refine_trace;
};

/// D_n(lambda, beta, sigma2) = -tr{S^T S}/sigma2 + ||S^T(S y - X beta)||^2 / (2 sigma4).
double objective_full(const SarData& data, const ParamVector& theta);

/// Minimizer of D_n over beta at fixed lambda:
/// beta_hat(lambda) = {X^T S S^T X}^{-1} X^T S S^T S y.
VectorXd beta_hat_given_lambda(const SarData& data, double lambda);

/// sigma2_hat(lambda) = ||S^T(S y - X beta_hat)||^2 / tr{S^T S}.
double sigma2_hat_given_lambda(const SarData& data, double lambda);

/// D_n^c(lambda) = -tr^2{S^T S} / (2 y^T S^T S Q_X(lambda) S^T S y); equals
/// D_n(lambda, beta_hat(lambda), sigma2_hat(lambda)) identically.
double concentrated_objective(const SarData& data, double lambda);

/// Grid search plus Brent refinement of D_n^c, then the closed-form beta and
/// sigma2 at the argmin. timing_ms covers estimation; the sandwich (when
/// with_inference) is timed separately in diagnostics.
FitReport fit_qsm(const SarData& data, const FitOptions& opts = {}, QsmProfile* profile = nullptr);

/// Efficiency-improved estimator: the QMLE estimating equations evaluated at
/// the quasi-score-matching lambda_hat; beta = (X^T X)^{-1} X^T S y and
/// sigma2 = y^T S^T M_X S y / n.
FitReport fit_improved(const SarData& data, double lambda_hat, const FitOptions& opts = {});

/// Analytic gradient of D_n at an arbitrary theta, assembled from the
/// linear-quadratic decomposition with eps_hat = residuals(data, theta):
/// components (eps^T A_j eps)_j + B^T eps - sigma2 (tr A_j)_j.
VectorXd score_at(const SarData& data, const ParamVector& theta);

/// Dense materialization of the score's quadratic/linear matrices
/// (A_2..A_{p+1} are identically zero and B's last column is zero).
struct ScoreDecomposition {
  MatrixXd A1;     // -([S S^T W S^{-1}]_s + [S W^T]_s) / sigma4
  MatrixXd A_p2;   // -S S^T / sigma6
  MatrixXd B;      // n x (p+2)
};

ScoreDecomposition score_decomposition(const SarData& data, const ParamVector& theta);

}  // namespace sarsm
