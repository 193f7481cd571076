#pragma once

#include <array>
#include <functional>

#include "sarsm/rng.hpp"
#include "sarsm/sparse_weights.hpp"

namespace sarsm {

/// theta = (lambda, beta^T, sigma^2)^T.
struct ParamVector {
  double lambda = 0.0;
  VectorXd beta;
  double sigma2 = 1.0;

  Index dim() const { return beta.size() + 2; }

  VectorXd to_vector() const {
    VectorXd v(dim());
    v(0) = lambda;
    v.segment(1, beta.size()) = beta;
    v(dim() - 1) = sigma2;
    return v;
  }

  static ParamVector from_vector(const Eigen::Ref<const VectorXd>& v) {
    ParamVector p;
    p.lambda = v(0);
    p.beta = v.segment(1, v.size() - 2);
    p.sigma2 = v(v.size() - 1);
    return p;
  }
};

/// Unit-variance, mean-zero error law for the data-generating process.
struct ErrorDistribution {
  enum class Kind { standard_normal, mixture_normal, custom };

  Kind kind = Kind::standard_normal;
  // mixture: w1 N(0, v1) + (1-w1) N(0, v2); defaults give variance exactly 1
  double mixture_w1 = 0.9;
  double mixture_v1 = 5.0 / 9.0;
  double mixture_v2 = 5.0;
  std::function<double(SplitMix64&)> custom_sampler;  // must be mean 0, variance 1

  static ErrorDistribution standard_normal() { return {}; }
  static ErrorDistribution mixture_normal();
  static ErrorDistribution custom(std::function<double(SplitMix64&)> sampler);

  double sample(SplitMix64& rng) const;

  /// Population (mu2, mu3, mu4); throws for custom laws.
  std::array<double, 3> moments() const;
};

/// One estimation problem: response, regressors, weights.
struct SarData {
  VectorXd y;
  MatrixXd X;
  SparseWeights W;

  Index n() const { return y.size(); }
  Index p() const { return X.cols(); }

  /// Dimension consistency and p < n. Column rank of X is checked at fit time.
  void validate() const;
};

/// Draws eps with the given unit-variance law scaled by sigma0 and returns
/// y = S(lambda0)^{-1}(X beta0 + eps). Reproducible from the seed; the drawn
/// eps is written to eps_out when provided.
SarData simulate_sar(const ParamVector& theta0, MatrixXd X, SparseWeights W,
                     const ErrorDistribution& err, std::uint64_t seed,
                     VectorXd* eps_out = nullptr);

/// eps_hat = S(lambda) y - X beta.
VectorXd residuals(const SarData& data, const ParamVector& theta);

}  // namespace sarsm
