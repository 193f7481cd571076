#pragma once

#include <functional>
#include <map>
#include <string>

#include "sarsm/lqform.hpp"
#include "sarsm/model.hpp"
#include "sarsm/report.hpp"

namespace sarsm {

/// Inference failed but the estimates themselves are fine; fit paths catch
/// this and flag the report instead of aborting.
class InferenceError : public FitError {
 public:
  using FitError::FitError;
};

struct InferenceOptions {
  /// Below this size every S^{-1}-bearing trace and diagonal is exact (one
  /// sparse factorization plus a batched dense solve); above it they are
  /// estimated with Rademacher probes and the MC errors land in diagnostics.
  Index n_dense_max = 2000;
  int probes = 200;
  std::uint64_t seed = 0x5a52535d;
};

/// Finite-n plug-in covariance blocks evaluated at an estimate. Matrices are
/// (p+2) x (p+2) in the order (lambda, beta, sigma2); the M/SM blocks and Xi
/// are filled only by improved_sandwich.
struct AsymptoticCovariances {
  MatrixXd V_S, Omega_S, U_S;
  MatrixXd V_M, Omega_M, V_SM, Omega_SM;
  MatrixXd Xi;  // (p+2) x 2(p+2)
  MatrixXd sandwich_qsm;
  MatrixXd sandwich_improved;
  bool improved_filled = false;
  std::map<std::string, double> trace_mc_se;  // stochastic mode only
};

/// Homoskedastic moment plug-ins at an estimate: m2 = sigma2_hat,
/// m3 = mean(eps_hat^3), m4 = mean(eps_hat^4).
MomentDiagonals moment_plugins(const SarData& data, const ParamVector& theta_hat);

/// V_S, Omega_S, U_S and the sandwich U_S^{-1}(V_S + Omega_S)U_S^{-1}.
AsymptoticCovariances qsm_sandwich(const SarData& data, const ParamVector& theta_hat,
                                   const MomentDiagonals& moms,
                                   const InferenceOptions& opts = {});

/// Adds the V_M / Omega_M / V_SM / Omega_SM blocks and Xi, returning
/// Xi (V + Omega) Xi^T for the efficiency-improved estimator.
AsymptoticCovariances improved_sandwich(const SarData& data, const ParamVector& theta_tilde_hat,
                                        const MomentDiagonals& moms,
                                        const InferenceOptions& opts = {});

/// QMLE sandwich V_M^{-1}(V_M + Omega_M)V_M^{-1} (information equality makes
/// V_M the Hessian limit of the Gaussian part).
MatrixXd qmle_sandwich(const SarData& data, const ParamVector& theta_hat,
                       const MomentDiagonals& moms, const InferenceOptions& opts = {});

struct LinearOperator {
  Index n = 0;
  std::function<VectorXd(const VectorXd&)> apply;
};

enum class TraceMode { exact_dense, stochastic };

struct TraceEstimate {
  double value = 0.0;
  double mc_se = 0.0;  // zero in exact mode
  int probes = 0;
};

/// tr(M) for a matrix-operator expression: exact via materialization on
/// identity columns (n <= n_dense_max sized problems), or Hutchinson with
/// Rademacher probes, unbiased with a reported MC standard error.
TraceEstimate trace_estimator(const LinearOperator& op, TraceMode mode, int probes = 200,
                              std::uint64_t seed = 0x7ace5eed);

}  // namespace sarsm
