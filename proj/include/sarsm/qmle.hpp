#pragma once

#include <optional>

#include "sarsm/qsm.hpp"

namespace sarsm {

struct QmleOptions {
  FitOptions fit;
  /// Unset = auto: hessenberg_precompute up to 4000 nodes, sparse_lu above.
  std::optional<DetStrategy> det_strategy;
};

/// beta_tilde(lambda) = (X^T X)^{-1} X^T S(lambda) y.
VectorXd beta_tilde_given_lambda(const SarData& data, double lambda);

/// sigma2_tilde(lambda) = y^T S(lambda)^T M_X S(lambda) y / n.
double sigma2_tilde_given_lambda(const SarData& data, double lambda);

/// Concentrated log-likelihood, constants dropped:
/// l_n^c(lambda) = log|det S(lambda)| - (n/2) log(n sigma2_tilde(lambda)).
double concentrated_loglik(const SarData& data, double lambda, const LogDetEngine& engine);
double concentrated_loglik(const SarData& data, double lambda, DetStrategy strategy);

/// Maximizes l_n^c over Lambda with the same grid + Brent scheme as fit_qsm.
/// timing_ms includes the determinant precomputation.
FitReport fit_qmle(const SarData& data, const QmleOptions& opts = {});

DetStrategy auto_det_strategy(Index n);

}  // namespace sarsm
