#include "sarsm/lqform.hpp"

#include <cmath>

namespace sarsm {

MomentDiagonals MomentDiagonals::homoskedastic(Index n, double mu2, double mu3, double mu4) {
  MomentDiagonals m;
  m.m2 = VectorXd::Constant(n, mu2);
  m.m3 = VectorXd::Constant(n, mu3);
  m.m4 = VectorXd::Constant(n, mu4);
  m.validate();
  return m;
}

void MomentDiagonals::validate() const {
  if (m2.size() != m3.size() || m2.size() != m4.size())
    throw std::invalid_argument("MomentDiagonals: length mismatch");
  for (Index i = 0; i < m2.size(); ++i) {
    if (!(m2(i) > 0.0)) throw std::invalid_argument("MomentDiagonals: m2 must be positive");
    if (m4(i) < m2(i) * m2(i) - 1e-12)
      throw std::invalid_argument("MomentDiagonals: m4 >= m2^2 violated (Jensen)");
  }
}

LqForm::LqForm(std::vector<MatrixXd> a, MatrixXd b) : b_(std::move(b)) {
  if (a.empty()) throw std::invalid_argument("LqForm: need at least one quadratic matrix");
  n_ = a.front().rows();
  a_.reserve(a.size());
  for (auto& m : a) {
    if (m.rows() != n_ || m.cols() != n_) throw std::invalid_argument("LqForm: A_j must be n x n");
    a_.push_back(0.5 * (m + m.transpose()));
  }
  if (b_.size() == 0) b_ = MatrixXd::Zero(n_, static_cast<Index>(a_.size()));
  if (b_.rows() != n_ || b_.cols() != static_cast<Index>(a_.size()))
    throw std::invalid_argument("LqForm: B must be n x d");
}

VectorXd lq_mean(const LqForm& lq, const MomentDiagonals& moms) {
  if (moms.m2.size() != lq.n()) throw std::invalid_argument("lq_mean: moment length mismatch");
  VectorXd out(lq.d());
  for (Index j = 0; j < lq.d(); ++j) out(j) = moms.m2.dot(lq.A(j).diagonal());
  return out;
}

MatrixXd lq_cov(const LqForm& lq, const MomentDiagonals& moms) {
  if (moms.m2.size() != lq.n()) throw std::invalid_argument("lq_cov: moment length mismatch");
  const Index d = lq.d();
  const VectorXd u4 = moms.upsilon4();
  MatrixXd cov(d, d);
  std::vector<MatrixXd> scaled;  // Y2 A_j
  scaled.reserve(d);
  for (Index j = 0; j < d; ++j) scaled.push_back(moms.m2.asDiagonal() * lq.A(j));
  for (Index j = 0; j < d; ++j) {
    for (Index k = j; k < d; ++k) {
      // tr(Y2 A_j Y2 A_k) as an elementwise sum, no n x n product
      const double t1 = scaled[j].cwiseProduct(scaled[k].transpose()).sum();
      const double t3 = (u4.array() * lq.A(j).diagonal().array() * lq.A(k).diagonal().array()).sum();
      cov(j, k) = cov(k, j) = 2.0 * t1 + t3;
    }
  }
  cov += lq.B().transpose() * moms.m2.asDiagonal() * lq.B();
  // 2 [(tr(b_j 1^T o Y3 o A_k))]_s contributes t4 + t4^T
  MatrixXd t4(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index k = 0; k < d; ++k)
      t4(j, k) = (lq.B().col(j).array() * moms.m3.array() * lq.A(k).diagonal().array()).sum();
  cov += t4 + t4.transpose();
  return cov;
}

LqSampleResult lq_sample(const LqForm& lq, const ErrorDistribution& err, Index draws,
                         std::uint64_t seed, bool keep_samples) {
  if (draws < 10000) throw std::invalid_argument("lq_sample: need at least 1e4 draws");
  const Index n = lq.n();
  const Index d = lq.d();
  const Index block = std::min<Index>(draws, 8192);

  // pass 1: empirical mean
  VectorXd sum = VectorXd::Zero(d);
  {
    SplitMix64 rng(seed);
    MatrixXd eps(n, block), prod(n, block), s(d, block);
    for (Index done = 0; done < draws;) {
      const Index b = std::min(block, draws - done);
      for (Index c = 0; c < b; ++c)
        for (Index i = 0; i < n; ++i) eps(i, c) = err.sample(rng);
      for (Index j = 0; j < d; ++j) {
        prod.leftCols(b).noalias() = lq.A(j) * eps.leftCols(b);
        s.row(j).head(b) = (eps.leftCols(b).array() * prod.leftCols(b).array()).colwise().sum();
      }
      s.leftCols(b).noalias() += lq.B().transpose() * eps.leftCols(b);
      sum += s.leftCols(b).rowwise().sum();
      done += b;
    }
  }
  LqSampleResult res;
  res.draws = draws;
  res.mean = sum / static_cast<double>(draws);

  // center for the standardized statistic: exact conditional mean when the law
  // has closed-form moments, empirical otherwise
  VectorXd center = res.mean;
  if (err.kind != ErrorDistribution::Kind::custom) {
    const auto mom = err.moments();
    center = lq_mean(lq, MomentDiagonals::homoskedastic(n, mom[0], mom[1], mom[2]));
  }

  // pass 2: centered moments (identical stream regenerated from the seed)
  MatrixXd cov_sum = MatrixXd::Zero(d, d);
  MatrixXd m22_sum = MatrixXd::Zero(d, d);
  VectorXd m2c = VectorXd::Zero(d), m3c = VectorXd::Zero(d), m4c = VectorXd::Zero(d);
  if (keep_samples) res.samples.resize(draws, d);
  {
    SplitMix64 rng(seed);
    MatrixXd eps(n, block), prod(n, block), s(d, block);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (Index done = 0; done < draws;) {
      const Index b = std::min(block, draws - done);
      for (Index c = 0; c < b; ++c)
        for (Index i = 0; i < n; ++i) eps(i, c) = err.sample(rng);
      for (Index j = 0; j < d; ++j) {
        prod.leftCols(b).noalias() = lq.A(j) * eps.leftCols(b);
        s.row(j).head(b) = (eps.leftCols(b).array() * prod.leftCols(b).array()).colwise().sum();
      }
      s.leftCols(b).noalias() += lq.B().transpose() * eps.leftCols(b);
      for (Index c = 0; c < b; ++c) {
        const VectorXd u = s.col(c) - res.mean;          // for cov and its MC error
        const VectorXd z = s.col(c) - center;            // for normality diagnostics
        cov_sum.noalias() += u * u.transpose();
        m22_sum.noalias() += (u.array().square().matrix()) * (u.array().square().matrix()).transpose();
        m2c += z.array().square().matrix();
        m3c += z.array().cube().matrix();
        m4c += z.array().square().square().matrix();
        if (keep_samples) res.samples.row(done + c) = (scale * z).transpose();
      }
      done += b;
    }
  }
  const double dn = static_cast<double>(draws);
  res.cov = cov_sum / dn;
  res.mean_se = (res.cov.diagonal() / dn).cwiseMax(0.0).cwiseSqrt();
  res.cov_se.resize(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index k = 0; k < d; ++k) {
      const double m22 = m22_sum(j, k) / dn;
      res.cov_se(j, k) = std::sqrt(std::max(m22 - res.cov(j, k) * res.cov(j, k), 0.0) / dn);
    }
  res.skewness.resize(d);
  res.excess_kurtosis.resize(d);
  for (Index j = 0; j < d; ++j) {
    const double v = m2c(j) / dn;
    res.skewness(j) = v > 0 ? (m3c(j) / dn) / std::pow(v, 1.5) : 0.0;
    res.excess_kurtosis(j) = v > 0 ? (m4c(j) / dn) / (v * v) - 3.0 : 0.0;
  }
  return res;
}

}  // namespace sarsm
