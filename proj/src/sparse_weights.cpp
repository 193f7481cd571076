#include "sarsm/sparse_weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sarsm {

namespace {

CsrMatrix transpose_rowmajor(const CsrMatrix& m) {
  CsrMatrix t = CsrMatrix(m.transpose());
  t.makeCompressed();
  return t;
}

std::string lambda_tag(double lambda) { return "lambda=" + std::to_string(lambda); }

}  // namespace

void SparseWeights::validate() const {
  const Index n = w_.rows();
  if (w_.cols() != n) throw std::invalid_argument("SparseWeights: matrix must be square");
  for (Index i = 0; i < n; ++i) {
    for (CsrMatrix::InnerIterator it(w_, i); it; ++it) {
      if (it.col() == i && it.value() != 0.0)
        throw std::invalid_argument("SparseWeights: nonzero diagonal entry at row " +
                                    std::to_string(i));
      if (!std::isfinite(it.value()))
        throw std::invalid_argument("SparseWeights: non-finite weight at row " +
                                    std::to_string(i));
    }
    if (row_normalized_) {
      double s = 0.0;
      Index cnt = 0;
      for (CsrMatrix::InnerIterator it(w_, i); it; ++it) {
        s += it.value();
        ++cnt;
      }
      if (cnt > 0 && std::abs(s - 1.0) > 1e-12)
        throw std::invalid_argument("SparseWeights: row " + std::to_string(i) +
                                    " flagged row-normalized but sums to " + std::to_string(s));
    }
  }
}

SparseWeights SparseWeights::from_triplets(Index n,
                                           const std::vector<Eigen::Triplet<double>>& entries,
                                           bool row_normalized) {
  CsrMatrix w(n, n);
  w.setFromTriplets(entries.begin(), entries.end());
  return from_csr(std::move(w), row_normalized);
}

SparseWeights SparseWeights::from_csr(CsrMatrix w, bool row_normalized) {
  SparseWeights out;
  w.prune([](Index, Index, double v) { return v != 0.0; });
  w.makeCompressed();
  out.w_ = std::move(w);
  out.wt_ = transpose_rowmajor(out.w_);
  out.row_normalized_ = row_normalized;
  out.validate();
  return out;
}

TraceCache TraceCache::build(const SparseWeights& w) {
  TraceCache c;
  const CsrMatrix& m = w.csr();
  const Index n = w.size();
  for (Index i = 0; i < n; ++i) {
    for (CsrMatrix::InnerIterator it(m, i); it; ++it) {
      if (it.col() == i) c.tr_w += it.value();
      c.frob_w_sq += it.value() * it.value();
    }
  }
  c.tr_ww = trace_product(m, m);
  return c;
}

double trace_sts(const TraceCache& cache, Index n, double lambda) {
  return static_cast<double>(n) - 2.0 * lambda * cache.tr_w + lambda * lambda * cache.frob_w_sq;
}

std::pair<double, double> weight_traces(const SparseWeights& w) {
  double tr = 0.0, frob = 0.0;
  const Index n = w.size();
  const CsrMatrix& m = w.csr();
  for (Index i = 0; i < n; ++i)
    for (CsrMatrix::InnerIterator it(m, i); it; ++it) {
      if (it.col() == i) tr += it.value();
      frob += it.value() * it.value();
    }
  return {tr, frob};
}

namespace {

// S(lambda) as a compressed column matrix; W^T row-major shares the layout of
// W column-major, so this is a value copy plus the identity.
CscMatrix build_shift_csc(const SparseWeights& w, double lambda) {
  const Index n = w.size();
  Eigen::Map<const CscMatrix> w_col(n, n, w.nnz(), w.csr_transposed().outerIndexPtr(),
                                    w.csr_transposed().innerIndexPtr(),
                                    w.csr_transposed().valuePtr());
  CscMatrix identity(n, n);
  identity.setIdentity();
  CscMatrix s = identity - lambda * w_col;
  s.makeCompressed();
  return s;
}

}  // namespace

ShiftFactor::ShiftFactor(const SparseWeights& w, double lambda, double tolerance,
                         Index direct_max)
    : s_(build_shift_csc(w, lambda)), lambda_(lambda), tolerance_(tolerance) {
  direct_ = w.size() <= direct_max;
  st_ = s_.transpose();
  if (direct_) {
    lu_.analyzePattern(s_);
    lu_.factorize(s_);
    if (lu_.info() != Eigen::Success)
      throw FitError("solve_shift: singular factorization at " + lambda_tag(lambda_));
  } else {
    cg_.setTolerance(1e-13);
    cg_.setMaxIterations(2000);
    cg_.compute(s_);
    cg_t_.setTolerance(1e-13);
    cg_t_.setMaxIterations(2000);
    cg_t_.compute(st_);
  }
}

namespace {

template <typename Solver, typename Mat>
VectorXd checked_solve(const Solver& solver, const Mat& m, const Eigen::Ref<const VectorXd>& b,
                       double tolerance, double lambda) {
  VectorXd x = solver.solve(b);
  const double bnorm = b.norm();
  if (bnorm == 0.0) return x;
  VectorXd r = b - m * x;
  if (r.norm() > tolerance * bnorm) {
    x += solver.solve(r);
    r = b - m * x;
    if (r.norm() > tolerance * bnorm)
      throw FitError("solve_shift: residual " + std::to_string(r.norm() / bnorm) +
                     " above tolerance at lambda=" + std::to_string(lambda));
  }
  return x;
}

}  // namespace

VectorXd ShiftFactor::solve(const Eigen::Ref<const VectorXd>& b) const {
  if (b.size() != s_.rows()) throw std::invalid_argument("solve_shift: dimension mismatch");
  if (direct_) return checked_solve(lu_, s_, b, tolerance_, lambda_);
  return checked_solve(cg_, s_, b, tolerance_, lambda_);
}

VectorXd ShiftFactor::solve_transpose(const Eigen::Ref<const VectorXd>& b) const {
  if (b.size() != s_.rows()) throw std::invalid_argument("solve_shift: dimension mismatch");
  if (direct_) return checked_solve(lu_.transpose(), st_, b, tolerance_, lambda_);
  return checked_solve(cg_t_, st_, b, tolerance_, lambda_);
}

MatrixXd ShiftFactor::solve_dense(const MatrixXd& b) const {
  if (b.rows() != s_.rows()) throw std::invalid_argument("solve_shift: dimension mismatch");
  if (direct_) return lu_.solve(b);
  return cg_.solve(b);
}

VectorXd solve_shift(const ShiftOperator& op, const Eigen::Ref<const VectorXd>& b) {
  return ShiftFactor(*op.weights, op.lambda).solve(b);
}

const char* det_strategy_name(DetStrategy s) {
  switch (s) {
    case DetStrategy::dense_lu: return "dense_lu";
    case DetStrategy::eigen_precompute: return "eigen_precompute";
    case DetStrategy::sparse_lu: return "sparse_lu";
    case DetStrategy::hessenberg_precompute: return "hessenberg_precompute";
  }
  return "?";
}

DetStrategy parse_det_strategy(const std::string& name) {
  if (name == "dense_lu") return DetStrategy::dense_lu;
  if (name == "eigen_precompute") return DetStrategy::eigen_precompute;
  if (name == "sparse_lu") return DetStrategy::sparse_lu;
  if (name == "hessenberg_precompute") return DetStrategy::hessenberg_precompute;
  throw std::invalid_argument("unknown det strategy '" + name + "'");
}

namespace {

double dense_lu_logabsdet(const MatrixXd& w, double lambda) {
  MatrixXd s = -lambda * w;
  s.diagonal().array() += 1.0;
  Eigen::PartialPivLU<MatrixXd> lu(s);
  double ld = 0.0;
  for (Index i = 0; i < s.rows(); ++i) {
    const double piv = std::abs(lu.matrixLU()(i, i));
    if (piv < 1e-300) throw FitError("log_abs_det_shift: singular S at " + lambda_tag(lambda));
    ld += std::log(piv);
  }
  return ld;
}

// log|det(I - lambda H)| for upper Hessenberg H: Givens QR sweep, O(n^2).
double hessenberg_logabsdet(const MatrixXd& h, double lambda) {
  const Index n = h.rows();
  MatrixXd m = -lambda * h;
  m.diagonal().array() += 1.0;
  double ld = 0.0;
  for (Index k = 0; k + 1 < n; ++k) {
    const double a = m(k, k);
    const double b = m(k + 1, k);
    const double r = std::hypot(a, b);
    if (r < 1e-300) throw FitError("log_abs_det_shift: singular S at " + lambda_tag(lambda));
    const double c = a / r;
    const double s = b / r;
    for (Index j = k; j < n; ++j) {
      const double x = m(k, j);
      const double y = m(k + 1, j);
      m(k, j) = c * x + s * y;
      m(k + 1, j) = -s * x + c * y;
    }
    ld += std::log(r);
  }
  const double last = std::abs(m(n - 1, n - 1));
  if (last < 1e-300) throw FitError("log_abs_det_shift: singular S at " + lambda_tag(lambda));
  return ld + std::log(last);
}

}  // namespace

LogDetEngine::LogDetEngine(const SparseWeights& w, DetStrategy strategy)
    : w_(&w), strategy_(strategy) {
  switch (strategy_) {
    case DetStrategy::dense_lu:
      dense_ = MatrixXd(w.csr());
      break;
    case DetStrategy::eigen_precompute: {
      Eigen::EigenSolver<MatrixXd> es(MatrixXd(w.csr()), /*computeEigenvectors=*/false);
      if (es.info() != Eigen::Success)
        throw FitError("log_abs_det_shift: eigenvalue decomposition failed");
      eigenvalues_ = es.eigenvalues();
      break;
    }
    case DetStrategy::sparse_lu: {
      pattern_ = build_shift_csc(w, 0.5);  // pattern is lambda-independent
      lu_ = std::make_shared<Eigen::SparseLU<CscMatrix>>();
      lu_->analyzePattern(pattern_);
      break;
    }
    case DetStrategy::hessenberg_precompute: {
      Eigen::HessenbergDecomposition<MatrixXd> hd(MatrixXd(w.csr()));
      dense_ = hd.matrixH();
      break;
    }
  }
}

double LogDetEngine::operator()(double lambda) const {
  switch (strategy_) {
    case DetStrategy::dense_lu:
      return dense_lu_logabsdet(dense_, lambda);
    case DetStrategy::eigen_precompute: {
      double ld = 0.0;
      for (Index i = 0; i < eigenvalues_.size(); ++i) {
        const std::complex<double> f = 1.0 - lambda * eigenvalues_(i);
        const double mag = std::abs(f);
        if (mag < 1e-14)
          throw FitError("log_abs_det_shift: |1 - lambda*omega| below 1e-14 at " +
                         lambda_tag(lambda));
        ld += std::log(mag);
      }
      return ld;
    }
    case DetStrategy::sparse_lu: {
      CscMatrix s = build_shift_csc(*w_, lambda);
      lu_->factorize(s);
      if (lu_->info() != Eigen::Success)
        throw FitError("log_abs_det_shift: singular S at " + lambda_tag(lambda));
      return lu_->logAbsDeterminant();
    }
    case DetStrategy::hessenberg_precompute:
      return hessenberg_logabsdet(dense_, lambda);
  }
  return 0.0;
}

double log_abs_det_shift(const SparseWeights& w, double lambda, DetStrategy strategy) {
  return LogDetEngine(w, strategy)(lambda);
}

double trace_product(const CsrMatrix& a, const CsrMatrix& b) {
  double t = 0.0;
  for (Index i = 0; i < a.rows(); ++i)
    for (CsrMatrix::InnerIterator it(a, i); it; ++it) t += it.value() * b.coeff(it.col(), i);
  return t;
}

VectorXd product_diagonal(const CsrMatrix& a, const CsrMatrix& b_transposed) {
  const Index n = a.rows();
  VectorXd d = VectorXd::Zero(n);
  for (Index i = 0; i < n; ++i) {
    CsrMatrix::InnerIterator ia(a, i);
    CsrMatrix::InnerIterator ib(b_transposed, i);
    while (ia && ib) {
      if (ia.col() < ib.col())
        ++ia;
      else if (ib.col() < ia.col())
        ++ib;
      else {
        d(i) += ia.value() * ib.value();
        ++ia;
        ++ib;
      }
    }
  }
  return d;
}

}  // namespace sarsm
