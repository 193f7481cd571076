#pragma once

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <memory>
#include <stdexcept>
#include <vector>

namespace sarsm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using CsrMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using CscMatrix = Eigen::SparseMatrix<double>;

/// Numeric failure during estimation or a linear solve.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spatial weights matrix W in row-compressed storage, with the transpose index
/// built once so that both Wv and W^T v run in O(nnz). Immutable after
/// construction; safe for concurrent read-only use.
///
/// Invariants: zero diagonal, column indices sorted within each row, and if
/// flagged row_normalized every non-empty row sums to 1 within 1e-12.
class SparseWeights {
 public:
  SparseWeights() = default;

  static SparseWeights from_triplets(Index n, const std::vector<Eigen::Triplet<double>>& entries,
                                     bool row_normalized = false);
  static SparseWeights from_csr(CsrMatrix w, bool row_normalized = false);

  Index size() const { return w_.rows(); }
  Index nnz() const { return w_.nonZeros(); }
  bool row_normalized() const { return row_normalized_; }

  const CsrMatrix& csr() const { return w_; }
  /// W^T, also row-compressed.
  const CsrMatrix& csr_transposed() const { return wt_; }

  const int* row_ptr() const { return w_.outerIndexPtr(); }
  const int* col_idx() const { return w_.innerIndexPtr(); }
  const double* values() const { return w_.valuePtr(); }

 private:
  CsrMatrix w_;
  CsrMatrix wt_;
  bool row_normalized_ = false;

  void validate() const;
};

/// Exact trace polynomials of W shared by every estimator:
/// tr{S(l)^T S(l)} = n - 2 l tr(W) + l^2 tr(W^T W).
struct TraceCache {
  double tr_w = 0.0;        // tr(W)
  double frob_w_sq = 0.0;   // tr(W^T W) = ||W||_F^2
  double tr_ww = 0.0;       // tr(W W)

  static TraceCache build(const SparseWeights& w);
};

double trace_sts(const TraceCache& cache, Index n, double lambda);

/// (tr W, ||W||_F^2) in one pass over the stored entries; the pieces of
/// tr{S^T S} the estimators evaluate per call.
std::pair<double, double> weight_traces(const SparseWeights& w);

/// S(lambda) = I - lambda W, represented without materializing it.
struct ShiftOperator {
  ShiftOperator(const SparseWeights& w, double l) : weights(&w), lambda(l) {}
  const SparseWeights* weights;
  double lambda;
  Index size() const { return weights->size(); }
};

/// S(lambda) v or S(lambda)^T v in O(nnz) per column; accepts any dense
/// expression (vectors or blocks such as S^T X).
template <typename Derived>
typename Derived::PlainObject apply_shift(const ShiftOperator& op,
                                          const Eigen::MatrixBase<Derived>& v,
                                          bool transpose = false) {
  if (v.rows() != op.size())
    throw std::invalid_argument("apply_shift: operand has " + std::to_string(v.rows()) +
                                " rows, expected " + std::to_string(op.size()));
  const CsrMatrix& w = transpose ? op.weights->csr_transposed() : op.weights->csr();
  typename Derived::PlainObject out = v.derived();
  out -= op.lambda * (w * out).eval();
  return out;
}

/// Solver for S(lambda) x = b and S(lambda)^T x = b, reusable across solves
/// at fixed lambda: a direct sparse LU up to `direct_max` nodes, BiCGSTAB
/// beyond it (random graphs fill in badly under any ordering, while
/// I - lambda W is strictly diagonally dominant for row-normalized W).
/// Residuals are checked against `tolerance` with one refinement pass.
class ShiftFactor {
 public:
  ShiftFactor(const SparseWeights& w, double lambda, double tolerance = 1e-10,
              Index direct_max = 6000);

  VectorXd solve(const Eigen::Ref<const VectorXd>& b) const;
  VectorXd solve_transpose(const Eigen::Ref<const VectorXd>& b) const;
  /// Multi-RHS solve (no refinement pass; used for dense inverse assembly).
  MatrixXd solve_dense(const MatrixXd& b) const;

  double lambda() const { return lambda_; }
  bool direct() const { return direct_; }

 private:
  CscMatrix s_;
  CscMatrix st_;  // iterative mode only
  // Eigen's transpose-solve view is a non-const accessor
  mutable Eigen::SparseLU<CscMatrix> lu_;
  mutable Eigen::BiCGSTAB<CscMatrix, Eigen::IdentityPreconditioner> cg_;
  mutable Eigen::BiCGSTAB<CscMatrix, Eigen::IdentityPreconditioner> cg_t_;
  bool direct_ = true;
  double lambda_;
  double tolerance_;
};

/// One-shot solve of S(lambda) x = b; relative residual <= 1e-10 or FitError.
VectorXd solve_shift(const ShiftOperator& op, const Eigen::Ref<const VectorXd>& b);

enum class DetStrategy {
  dense_lu,               // dense PartialPivLU per lambda, O(n^3) each
  eigen_precompute,       // one-time eigenvalues of W, then sum log|1 - l w_i|
  sparse_lu,              // SparseLU per lambda (symbolic analysis reused)
  hessenberg_precompute,  // one-time Hessenberg form of W, O(n^2) per lambda
};

const char* det_strategy_name(DetStrategy s);
DetStrategy parse_det_strategy(const std::string& name);

/// log|det S(lambda)| evaluator reusable across many lambda for one W.
class LogDetEngine {
 public:
  LogDetEngine(const SparseWeights& w, DetStrategy strategy);
  double operator()(double lambda) const;
  DetStrategy strategy() const { return strategy_; }

 private:
  const SparseWeights* w_;
  DetStrategy strategy_;
  MatrixXd dense_;                 // dense_lu: W; hessenberg: H
  Eigen::VectorXcd eigenvalues_;   // eigen_precompute
  CscMatrix pattern_;              // sparse_lu: S pattern at a reference lambda
  std::shared_ptr<Eigen::SparseLU<CscMatrix>> lu_;  // sparse_lu, symbolic reused
};

double log_abs_det_shift(const SparseWeights& w, double lambda, DetStrategy strategy);

/// tr(A B) for row-compressed A, B: sum over nonzeros of A of a_ij * B(j, i).
double trace_product(const CsrMatrix& a, const CsrMatrix& b);
/// diag(A B) given B^T row-compressed: entry i is <row_i(A), row_i(B^T)>.
VectorXd product_diagonal(const CsrMatrix& a, const CsrMatrix& b_transposed);

}  // namespace sarsm
