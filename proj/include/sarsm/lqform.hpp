#pragma once

#include <vector>

#include "sarsm/model.hpp"

namespace sarsm {

/// Diagonals of the conditional moment matrices Upsilon^(2), Upsilon^(3),
/// Upsilon^(4): m2_i = E[eps_i^2 | F], m3_i, m4_i. The fourth-moment
/// correction diagonal m4 - 3 m2^2 is derived on demand.
struct MomentDiagonals {
  VectorXd m2;
  VectorXd m3;
  VectorXd m4;

  static MomentDiagonals homoskedastic(Index n, double mu2, double mu3, double mu4);
  static MomentDiagonals gaussian(Index n, double sigma2) {
    // grouped as 3 (s2 s2) so upsilon4() cancels exactly
    return homoskedastic(n, sigma2, 0.0, 3.0 * (sigma2 * sigma2));
  }

  /// Upsilon^(4) diagonal: m4 - 3 m2^2, identically zero for Gaussian
  /// moments. The scaled square is materialized first so floating-point
  /// contraction cannot turn the exact cancellation into an ulp residue.
  VectorXd upsilon4() const {
    const VectorXd scaled = 3.0 * m2.array().square();
    return m4 - scaled;
  }

  void validate() const;
};

/// Linear-quadratic form s_n = (eps^T A_1 eps, ..., eps^T A_d eps)^T + B^T eps.
/// Each A_j is symmetrized on ingest ([G]_s = (G + G^T)/2, which leaves the
/// quadratic form unchanged). Matrices are materialized densely; callers above
/// the dense cutoff use the stochastic trace machinery in the inference layer
/// instead.
class LqForm {
 public:
  LqForm(std::vector<MatrixXd> a, MatrixXd b);

  Index n() const { return n_; }
  Index d() const { return static_cast<Index>(a_.size()); }
  const MatrixXd& A(Index j) const { return a_[static_cast<std::size_t>(j)]; }
  const MatrixXd& B() const { return b_; }

 private:
  std::vector<MatrixXd> a_;
  MatrixXd b_;
  Index n_;
};

/// E[s_n | F] = (tr(Y2 A_1), ..., tr(Y2 A_d))^T.
VectorXd lq_mean(const LqForm& lq, const MomentDiagonals& moms);

/// Cov[s_n | F] = 2 (tr(Y2 A_j Y2 A_k)) + B^T Y2 B + (tr(A_j o Y4 o A_k))
///              + 2 [(tr(b_j 1^T o Y3 o A_k))]_s.
MatrixXd lq_cov(const LqForm& lq, const MomentDiagonals& moms);

struct LqSampleResult {
  Index draws = 0;
  VectorXd mean;          // empirical mean of s_n
  MatrixXd cov;           // empirical covariance (divisor = draws)
  VectorXd mean_se;       // Monte Carlo standard error of `mean`
  MatrixXd cov_se;        // Monte Carlo standard error of each covariance entry
  VectorXd skewness;      // of the standardized statistic n^{-1/2}(s_n - E[s_n|F])
  VectorXd excess_kurtosis;
  MatrixXd samples;       // draws x d standardized samples, only if requested
};

/// Monte Carlo oracle for the closed-form moments and a normality diagnostic
/// for the standardized statistic. For the built-in error laws the
/// standardization uses the exact conditional mean; for custom laws the
/// empirical mean. Deterministic per seed.
LqSampleResult lq_sample(const LqForm& lq, const ErrorDistribution& err, Index draws,
                         std::uint64_t seed, bool keep_samples = false);

}  // namespace sarsm
