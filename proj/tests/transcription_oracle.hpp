#pragma once

// Dense, line-by-line transcription of the asymptotic covariance displays,
// kept deliberately independent of the optimized evaluation path: everything
// here goes through materialized n x n matrices, matrix inverses and plain
// traces. Used as the oracle for the block-equality tests.

#include <Eigen/Dense>

#include "sarsm/lqform.hpp"
#include "sarsm/model.hpp"

namespace sarsm::test {

struct DenseBlocks {
  MatrixXd V_S, Omega_S, U_S, V_M, Omega_M, V_SM, Omega_SM;
};

// tr(G1 o D o G2) for diagonal D: sum_i G1_ii d_i G2_ii
inline double htrace(const MatrixXd& g1, const VectorXd& d, const MatrixXd& g2) {
  return (g1.diagonal().array() * d.array() * g2.diagonal().array()).sum();
}

inline double htrace2(const VectorXd& d, const MatrixXd& g) {
  return (d.array() * g.diagonal().array()).sum();
}

inline DenseBlocks dense_transcription(const SarData& data, const ParamVector& theta,
                                       const MomentDiagonals& moms) {
  const Index n = data.n();
  const Index p = data.p();
  const double n_d = static_cast<double>(n);
  const double s2 = theta.sigma2;
  const double s4 = s2 * s2, s6 = s4 * s2, s8 = s4 * s4, s10 = s8 * s2, s12 = s8 * s4;
  const MatrixXd W = MatrixXd(data.W.csr());
  const MatrixXd S = MatrixXd::Identity(n, n) - theta.lambda * W;
  const MatrixXd Sinv = S.inverse();
  const MatrixXd SSt = S * S.transpose();
  const MatrixXd F = SSt * W * Sinv + S * W.transpose();  // S S^T W S^{-1} + S W^T
  const MatrixXd G = W * Sinv;                            // W S^{-1}
  const VectorXd xb = data.X * theta.beta;
  const VectorXd h = SSt * W * Sinv * xb;                 // S S^T W S^{-1} X beta
  const VectorXd gxb = W * Sinv * xb;
  const VectorXd u3 = moms.m3;
  const VectorXd u4 = moms.m4.array() - 3.0 * moms.m2.array().square();
  const VectorXd ones = VectorXd::Ones(n);

  DenseBlocks out;

  // ----- V_S (Eq. 18) -----
  MatrixXd v_s = MatrixXd::Zero(p + 2, p + 2);
  v_s(0, 0) =
      2.0 / (n_d * s4) * (S.transpose() * W * S.transpose() * W).trace() +
      1.0 / (n_d * s4) * (S * W.transpose() * W * S.transpose()).trace() +
      2.0 / (n_d * s4) *
          (Sinv.transpose() * W.transpose() * S * S.transpose() * S * W.transpose()).trace() +
      2.0 / (n_d * s4) * (S * S.transpose() * W * W.transpose()).trace() +
      1.0 / (n_d * s4) *
          (Sinv.transpose() * W.transpose() * SSt * SSt * W * Sinv).trace() +
      1.0 / (n_d * s6) *
          (xb.transpose() * Sinv.transpose() * W.transpose() * SSt * SSt * W * Sinv * xb)(0);
  v_s.block(1, 0, p, 1) = 1.0 / (n_d * s6) * (data.X.transpose() * SSt * SSt * W * Sinv * xb);
  v_s(p + 1, 0) = 4.0 * (S.transpose() * S * S.transpose() * W).trace() / (n_d * s6);
  v_s.block(1, 1, p, p) = data.X.transpose() * SSt * SSt * data.X / (n_d * s6);
  v_s(p + 1, p + 1) = 2.0 * (SSt * SSt).trace() / (n_d * s8);
  v_s.block(0, 1, 1, p) = v_s.block(1, 0, p, 1).transpose();
  v_s(0, p + 1) = v_s(p + 1, 0);
  out.V_S = v_s;

  // ----- Omega_S (Eq. 19) -----
  MatrixXd o_s = MatrixXd::Zero(p + 2, p + 2);
  o_s(0, 0) = htrace(F, u4, F) / (n_d * s8) +
              2.0 / (n_d * s8) * htrace(h * ones.transpose(), u3, F);
  for (Index j = 0; j < p; ++j)
    o_s(1 + j, 0) = htrace(SSt * data.X.col(j) * ones.transpose(), u3, F) / (n_d * s8);
  o_s(p + 1, 0) = htrace(SSt, u4, F) / (n_d * s10) +
                  htrace(h * ones.transpose(), u3, SSt) / (n_d * s10);
  for (Index j = 0; j < p; ++j)
    o_s(1 + j, p + 1) = htrace(SSt * data.X.col(j) * ones.transpose(), u3, SSt) / (n_d * s10);
  o_s(p + 1, p + 1) = htrace(SSt, u4, SSt) / (n_d * s12);
  o_s.block(0, 1, 1, p) = o_s.block(1, 0, p, 1).transpose();
  o_s(0, p + 1) = o_s(p + 1, 0);
  o_s.block(p + 1, 1, 1, p) = o_s.block(1, p + 1, p, 1).transpose();
  out.Omega_S = o_s;

  // ----- U_S -----
  MatrixXd u_s = MatrixXd::Zero(p + 2, p + 2);
  u_s(0, 0) =
      (W.transpose() * W).trace() / (n_d * s2) +
      2.0 / (n_d * s2) * (Sinv.transpose() * W.transpose() * S * W.transpose()).trace() +
      1.0 / (n_d * s4) *
          (xb.transpose() * Sinv.transpose() * W.transpose() * SSt * W * Sinv * xb)(0) +
      1.0 / (n_d * s2) * (Sinv.transpose() * W.transpose() * SSt * W * Sinv).trace();
  u_s.block(1, 0, p, 1) = data.X.transpose() * SSt * W * Sinv * xb / (n_d * s4);
  u_s(p + 1, 0) = 2.0 * (S * W.transpose()).trace() / (n_d * s4);
  u_s.block(1, 1, p, p) = data.X.transpose() * SSt * data.X / (n_d * s4);
  u_s(p + 1, p + 1) = (S.transpose() * S).trace() / (n_d * s6);
  u_s.block(0, 1, 1, p) = u_s.block(1, 0, p, 1).transpose();
  u_s(0, p + 1) = u_s(p + 1, 0);
  out.U_S = u_s;

  // ----- V_M -----
  MatrixXd v_m = MatrixXd::Zero(p + 2, p + 2);
  v_m(0, 0) = (G * G + G.transpose() * G).trace() / n_d +
              (gxb.squaredNorm()) / (n_d * s2);
  v_m.block(1, 0, p, 1) = data.X.transpose() * gxb / (n_d * s2);
  v_m(p + 1, 0) = G.trace() / (n_d * s2);
  v_m.block(1, 1, p, p) = data.X.transpose() * data.X / (n_d * s2);
  v_m(p + 1, p + 1) = 1.0 / (2.0 * s4);
  v_m.block(0, 1, 1, p) = v_m.block(1, 0, p, 1).transpose();
  v_m(0, p + 1) = v_m(p + 1, 0);
  out.V_M = v_m;

  // ----- Omega_M -----
  MatrixXd o_m = MatrixXd::Zero(p + 2, p + 2);
  o_m(0, 0) = htrace(G, u4, G) / (n_d * s4) +
              2.0 / (n_d * s4) * htrace(gxb * ones.transpose(), u3, G);
  for (Index j = 0; j < p; ++j)
    o_m(1 + j, 0) = htrace(data.X.col(j) * ones.transpose(), u3, G) / (n_d * s4);
  o_m(p + 1, 0) = htrace2(u4, G) / (2.0 * n_d * s6) +
                  (ones.transpose() * u3.asDiagonal() * G * xb)(0) / (2.0 * n_d * s6);
  o_m.block(1, p + 1, p, 1) = data.X.transpose() * u3 / (2.0 * n_d * s6);
  o_m(p + 1, p + 1) = u4.sum() / (4.0 * n_d * s8);
  o_m.block(0, 1, 1, p) = o_m.block(1, 0, p, 1).transpose();
  o_m(0, p + 1) = o_m(p + 1, 0);
  o_m.block(p + 1, 1, 1, p) = o_m.block(1, p + 1, p, 1).transpose();
  out.Omega_M = o_m;

  // ----- V_SM -----
  MatrixXd v_sm = MatrixXd::Zero(p + 2, p + 2);
  v_sm(0, 0) = 2.0 / (n_d * s2) * (W * S.transpose() * W * Sinv).trace() +
               1.0 / (n_d * s2) *
                   (W.transpose() * W +
                    Sinv.transpose() * W.transpose() * SSt * W * Sinv)
                       .trace() +
               1.0 / (n_d * s4) *
                   (xb.transpose() * Sinv.transpose() * W.transpose() * SSt * W * Sinv * xb)(0);
  v_sm.block(0, 1, 1, p) =
      (xb.transpose() * Sinv.transpose() * W.transpose() * SSt * data.X) / (n_d * s4);
  v_sm(0, p + 1) = 2.0 * (S * W.transpose()).trace() / (n_d * s4);
  v_sm.block(1, 0, p, 1) = data.X.transpose() * SSt * W * Sinv * xb / (n_d * s4);
  v_sm.block(1, 1, p, p) = data.X.transpose() * SSt * data.X / (n_d * s4);
  v_sm(p + 1, 0) = 2.0 * (S * W.transpose()).trace() / (n_d * s4);
  v_sm(p + 1, p + 1) = (S * S.transpose()).trace() / (n_d * s6);
  out.V_SM = v_sm;

  // ----- Omega_SM -----
  MatrixXd o_sm = MatrixXd::Zero(p + 2, p + 2);
  o_sm(0, 0) = htrace(F, u4, G) / (n_d * s6) +
               htrace(h * ones.transpose(), u3, G) / (n_d * s6) +
               htrace(F, u3, gxb * ones.transpose()) / (n_d * s6);
  for (Index j = 0; j < p; ++j)
    o_sm(0, 1 + j) = htrace(F, u3, data.X.col(j) * ones.transpose()) / (n_d * s6);
  o_sm(0, p + 1) = htrace2(u4, F) / (2.0 * n_d * s8) +
                   (ones.transpose() * u3.asDiagonal() * SSt * W * Sinv * xb)(0) /
                       (2.0 * n_d * s8);
  for (Index j = 0; j < p; ++j)
    o_sm(1 + j, 0) = htrace(SSt * data.X.col(j) * ones.transpose(), u3, G) / (n_d * s6);
  o_sm.block(1, p + 1, p, 1) =
      data.X.transpose() * SSt * u3 / (2.0 * n_d * s8);
  o_sm(p + 1, 0) = htrace(SSt, u4, G) / (n_d * s8) +
                   htrace(SSt, u3, gxb * ones.transpose()) / (n_d * s8);
  for (Index j = 0; j < p; ++j)
    o_sm(p + 1, 1 + j) = htrace(SSt, u3, data.X.col(j) * ones.transpose()) / (n_d * s8);
  o_sm(p + 1, p + 1) = htrace2(u4, SSt) / (2.0 * n_d * s10);
  out.Omega_SM = o_sm;

  return out;
}

}  // namespace sarsm::test
