#include "sarsm/model.hpp"

#include <cmath>

namespace sarsm {

ErrorDistribution ErrorDistribution::mixture_normal() {
  ErrorDistribution e;
  e.kind = Kind::mixture_normal;
  const double var = e.mixture_w1 * e.mixture_v1 + (1.0 - e.mixture_w1) * e.mixture_v2;
  if (std::abs(var - 1.0) > 1e-12)
    throw std::invalid_argument("ErrorDistribution: mixture variance must be 1");
  return e;
}

ErrorDistribution ErrorDistribution::custom(std::function<double(SplitMix64&)> sampler) {
  ErrorDistribution e;
  e.kind = Kind::custom;
  e.custom_sampler = std::move(sampler);
  return e;
}

double ErrorDistribution::sample(SplitMix64& rng) const {
  switch (kind) {
    case Kind::standard_normal:
      return rng.normal();
    case Kind::mixture_normal: {
      const double sd =
          rng.uniform01() < mixture_w1 ? std::sqrt(mixture_v1) : std::sqrt(mixture_v2);
      return sd * rng.normal();
    }
    case Kind::custom:
      return custom_sampler(rng);
  }
  return 0.0;
}

std::array<double, 3> ErrorDistribution::moments() const {
  switch (kind) {
    case Kind::standard_normal:
      return {1.0, 0.0, 3.0};
    case Kind::mixture_normal: {
      const double w2 = 1.0 - mixture_w1;
      const double m2 = mixture_w1 * mixture_v1 + w2 * mixture_v2;
      const double m4 =
          3.0 * (mixture_w1 * mixture_v1 * mixture_v1 + w2 * mixture_v2 * mixture_v2);
      return {m2, 0.0, m4};
    }
    case Kind::custom:
      throw std::invalid_argument("ErrorDistribution: no closed-form moments for custom law");
  }
  return {};
}

void SarData::validate() const {
  if (X.rows() != n())
    throw std::invalid_argument("SarData: X has " + std::to_string(X.rows()) +
                                " rows, y has " + std::to_string(n()));
  if (W.size() != n())
    throw std::invalid_argument("SarData: W is " + std::to_string(W.size()) + "x" +
                                std::to_string(W.size()) + ", y has " + std::to_string(n()));
  if (p() > n()) throw std::invalid_argument("SarData: more regressors than observations");
}

SarData simulate_sar(const ParamVector& theta0, MatrixXd X, SparseWeights W,
                     const ErrorDistribution& err, std::uint64_t seed, VectorXd* eps_out) {
  const Index n = W.size();
  if (X.rows() != n) throw std::invalid_argument("simulate_sar: X/W dimension mismatch");
  if (theta0.beta.size() != X.cols())
    throw std::invalid_argument("simulate_sar: beta0 length != X columns");
  if (theta0.sigma2 <= 0.0) throw std::invalid_argument("simulate_sar: sigma2 must be positive");

  SplitMix64 rng(seed);
  VectorXd eps(n);
  const double sigma0 = std::sqrt(theta0.sigma2);
  for (Index i = 0; i < n; ++i) eps(i) = sigma0 * err.sample(rng);
  if (eps_out) *eps_out = eps;

  VectorXd rhs = X * theta0.beta + eps;
  SarData data;
  if (theta0.lambda == 0.0) {
    data.y = std::move(rhs);
  } else {
    ShiftFactor factor(W, theta0.lambda);
    data.y = factor.solve(rhs);
  }
  data.X = std::move(X);
  data.W = std::move(W);
  data.validate();
  return data;
}

VectorXd residuals(const SarData& data, const ParamVector& theta) {
  if (theta.beta.size() != data.p())
    throw std::invalid_argument("residuals: beta length != X columns");
  ShiftOperator s(data.W, theta.lambda);
  return apply_shift(s, data.y) - data.X * theta.beta;
}

}  // namespace sarsm
