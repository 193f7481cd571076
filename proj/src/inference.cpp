#include "sarsm/inference.hpp"

#include <cmath>

namespace sarsm {

MomentDiagonals moment_plugins(const SarData& data, const ParamVector& theta_hat) {
  const VectorXd eps = residuals(data, theta_hat);
  const double n = static_cast<double>(data.n());
  MomentDiagonals m;
  if (!(theta_hat.sigma2 > 0.0))
    throw std::invalid_argument("moment_plugins: sigma2 must be positive");
  m.m2 = VectorXd::Constant(data.n(), theta_hat.sigma2);
  m.m3 = VectorXd::Constant(data.n(), eps.array().cube().sum() / n);
  m.m4 = VectorXd::Constant(data.n(), eps.array().square().square().sum() / n);
  return m;
}

TraceEstimate trace_estimator(const LinearOperator& op, TraceMode mode, int probes,
                              std::uint64_t seed) {
  if (!op.apply || op.n <= 0) throw std::invalid_argument("trace_estimator: empty operator");
  TraceEstimate out;
  if (mode == TraceMode::exact_dense) {
    VectorXd e = VectorXd::Zero(op.n);
    for (Index i = 0; i < op.n; ++i) {
      e(i) = 1.0;
      out.value += op.apply(e)(i);
      e(i) = 0.0;
    }
    return out;
  }
  if (probes < 1) throw std::invalid_argument("trace_estimator: need at least one probe");
  SplitMix64 rng(seed);
  double sum = 0.0, sumsq = 0.0;
  VectorXd z(op.n);
  for (int k = 0; k < probes; ++k) {
    for (Index i = 0; i < op.n; ++i) z(i) = rng.next_u64() & 1u ? 1.0 : -1.0;
    const double t = z.dot(op.apply(z));
    sum += t;
    sumsq += t * t;
  }
  out.probes = probes;
  out.value = sum / probes;
  const double var = std::max(sumsq / probes - out.value * out.value, 0.0);
  out.mc_se = probes > 1 ? std::sqrt(var / (probes - 1)) : 0.0;
  return out;
}

namespace {

// Everything the printed covariance blocks need at one (data, theta, moments)
// point. The S^{-1}-bearing traces and diagonals come from a batched dense
// solve below n_dense_max and from Rademacher probes above it.
struct BlockWorkspace {
  const SarData& data;
  const ParamVector& theta;
  Index n, p;
  double s2, s4, s6, s8, s10, s12;
  double inv_n;

  CsrMatrix S, St;      // S(lambda), S(lambda)^T, row-compressed
  CsrMatrix SWt;        // S W^T
  VectorXd u3, u4;      // Upsilon^(3), Upsilon^(4) diagonals
  VectorXd dss;         // diag(S S^T)
  VectorXd dswt;        // diag(S W^T)

  // exact vector chains
  VectorXd g_xb;        // W S^{-1} X beta
  VectorXd sg_xb;       // S^T g_xb
  VectorXd h;           // S S^T W S^{-1} X beta
  MatrixXd StX;         // S^T X
  MatrixXd XS2;         // S S^T X
  double tr_w_sq;       // tr(W^T W)
  double tr_swt;        // tr(S W^T)
  double tr_sts;        // tr(S^T S)

  // S^{-1}-free traces
  double t1;            // tr(S^T W S^T W)
  double t2;            // tr(S W^T W S^T)
  double t4;            // tr(S S^T W W^T)
  double tr_stsstw;     // tr(S^T S S^T W)
  double tr_sst_sq;     // tr((S S^T)^2)

  // S^{-1}-bearing scalars / diagonals
  double t3;            // tr(S^{-T} W^T S S^T S W^T)
  double t5;            // tr(S^{-T} W^T (S S^T)^2 W S^{-1})
  double u2;            // tr(S^{-T} W^T S W^T)
  double u4t;           // tr(S^{-T} W^T S S^T W S^{-1})
  double tr_g;          // tr(W S^{-1})
  double tr_gg;         // tr(W S^{-1} W S^{-1})
  double frob_g;        // tr(S^{-T} W^T W S^{-1})
  double tr_wstg;       // tr(W S^T W S^{-1})
  VectorXd diag_f1;     // diag(S S^T W S^{-1})
  VectorXd diag_g;      // diag(W S^{-1})
  // split-probe products of estimated diagonals (unbiased), keyed by use
  double sum_u4_ff = 0, sum_u4_fg = 0, sum_u4_gg = 0;
  bool stochastic = false;
  std::map<std::string, double> mc_se;

  BlockWorkspace(const SarData& d, const ParamVector& th, const MomentDiagonals& moms,
                 const InferenceOptions& opts)
      : data(d), theta(th), n(d.n()), p(d.p()) {
    if (!(th.sigma2 > 0.0)) throw std::invalid_argument("inference: sigma2 must be positive");
    s2 = th.sigma2;
    s4 = s2 * s2;
    s6 = s4 * s2;
    s8 = s4 * s4;
    s10 = s8 * s2;
    s12 = s8 * s4;
    inv_n = 1.0 / static_cast<double>(n);
    u3 = moms.m3;
    u4 = moms.upsilon4();

    const CsrMatrix& W = d.W.csr();
    const CsrMatrix& Wt = d.W.csr_transposed();
    const double lambda = th.lambda;
    CsrMatrix identity(n, n);
    identity.setIdentity();
    S = identity - lambda * W;
    S.makeCompressed();
    St = identity - lambda * Wt;
    St.makeCompressed();

    SWt = (S * Wt).eval();
    SWt.makeCompressed();
    const CsrMatrix StW = (St * W).eval();
    const CsrMatrix WSt = (W * St).eval();
    const CsrMatrix StS = (St * S).eval();
    const CsrMatrix SSt = (S * St).eval();

    dss = product_diagonal(S, S);
    dswt = product_diagonal(S, W);

    const TraceCache tc = TraceCache::build(d.W);
    tr_w_sq = tc.frob_w_sq;
    tr_swt = tc.tr_w - lambda * tc.frob_w_sq;
    tr_sts = trace_sts(tc, n, lambda);

    t1 = trace_product(StW, StW);
    t2 = WSt.squaredNorm();
    t4 = StW.squaredNorm();
    tr_stsstw = trace_product(StS, StW);
    tr_sst_sq = SSt.squaredNorm();

    StX = St * d.X;
    XS2 = S * (St * d.X).eval();

    ShiftFactor factor(d.W, lambda);
    const VectorXd xb = d.X * th.beta;
    const VectorXd u_xb = factor.solve(xb);
    g_xb = W * u_xb;
    sg_xb = St * g_xb;
    h = S * sg_xb;

    if (n <= opts.n_dense_max) {
      MatrixXd Y = factor.solve_dense(MatrixXd::Identity(n, n));
      MatrixXd G = W * Y;
      Y.resize(0, 0);
      MatrixXd SG = St * G;
      MatrixXd F1 = S * SG;
      u4t = SG.squaredNorm();
      SG.resize(0, 0);
      t5 = F1.squaredNorm();
      diag_f1 = F1.diagonal();
      diag_g = G.diagonal();
      tr_g = G.trace();
      frob_g = G.squaredNorm();
      tr_gg = 0.0;
      for (Index i = 0; i < n; ++i) tr_gg += G.row(i).dot(G.col(i));
      // tr(S^{-T} W^T S S^T S W^T) = <K, G> with K = S S^T S W^T
      const CsrMatrix K = (S * (St * SWt).eval()).eval();
      t3 = 0.0;
      for (Index i = 0; i < n; ++i)
        for (CsrMatrix::InnerIterator it(K, i); it; ++it) t3 += it.value() * G(i, it.col());
      u2 = 0.0;
      for (Index i = 0; i < n; ++i)
        for (CsrMatrix::InnerIterator it(SWt, i); it; ++it) u2 += it.value() * G(i, it.col());
      tr_wstg = 0.0;
      for (Index i = 0; i < n; ++i)
        for (CsrMatrix::InnerIterator it(WSt, i); it; ++it) tr_wstg += it.value() * G(it.col(), i);
      const VectorXd f = diag_f1 + dswt;
      sum_u4_ff = (u4.array() * f.array().square()).sum();
      sum_u4_fg = (u4.array() * f.array() * diag_g.array()).sum();
      sum_u4_gg = (u4.array() * diag_g.array().square()).sum();
    } else {
      stochastic = true;
      estimate_inverse_terms(factor, W, Wt, SWt, WSt, opts);
    }
  }

  // Hutchinson traces and split-probe diagonals for the S^{-1} terms.
  void estimate_inverse_terms(const ShiftFactor& factor, const CsrMatrix& W, const CsrMatrix& Wt,
                              const CsrMatrix& SWt, const CsrMatrix& WSt,
                              const InferenceOptions& opts) {
    const int probes = std::max(opts.probes, 2);
    SplitMix64 rng(opts.seed);
    VectorXd z(n);
    struct Acc {
      double sum = 0, sumsq = 0;
      void add(double v) {
        sum += v;
        sumsq += v * v;
      }
    };
    Acc a_t3, a_t5, a_u2, a_u4t, a_trg, a_trgg, a_frobg, a_wstg;
    VectorXd df_a = VectorXd::Zero(n), df_b = VectorXd::Zero(n);
    VectorXd dg_a = VectorXd::Zero(n), dg_b = VectorXd::Zero(n);
    int count_a = 0, count_b = 0;
    for (int k = 0; k < probes; ++k) {
      for (Index i = 0; i < n; ++i) z(i) = rng.next_u64() & 1u ? 1.0 : -1.0;
      const VectorXd u = factor.solve(z);
      const VectorXd gz = W * u;                       // G z
      const VectorXd sgz = St * gz;                    // S^T G z
      const VectorXd f1z = S * sgz;                    // S S^T W S^{-1} z
      const VectorXd wtz = Wt * z;
      const VectorXd swtz = S * wtz;                   // S W^T z
      a_t3.add(u.dot(Wt * (S * (St * swtz).eval())));  // z^T S^{-T} W^T S S^T S W^T z
      a_t5.add(f1z.squaredNorm());
      a_u2.add(u.dot(Wt * swtz));
      a_u4t.add(sgz.squaredNorm());
      a_trg.add(z.dot(gz));
      a_trgg.add(z.dot(W * factor.solve(gz)));
      a_frobg.add(gz.squaredNorm());
      a_wstg.add(z.dot(W * (St * gz).eval()));
      if (k % 2 == 0) {
        df_a += z.cwiseProduct(f1z);
        dg_a += z.cwiseProduct(gz);
        ++count_a;
      } else {
        df_b += z.cwiseProduct(f1z);
        dg_b += z.cwiseProduct(gz);
        ++count_b;
      }
    }
    auto finish = [&](const Acc& a, const char* key) {
      const double mean = a.sum / probes;
      const double var = std::max(a.sumsq / probes - mean * mean, 0.0);
      mc_se[key] = std::sqrt(var / (probes - 1));
      return mean;
    };
    t3 = finish(a_t3, "t3");
    t5 = finish(a_t5, "t5");
    u2 = finish(a_u2, "u2");
    u4t = finish(a_u4t, "u4t");
    tr_g = finish(a_trg, "tr_g");
    tr_gg = finish(a_trgg, "tr_gg");
    frob_g = finish(a_frobg, "frob_g");
    tr_wstg = finish(a_wstg, "tr_wstg");
    df_a /= count_a;
    df_b /= count_b;
    dg_a /= count_a;
    dg_b /= count_b;
    diag_f1 = 0.5 * (df_a + df_b);
    diag_g = 0.5 * (dg_a + dg_b);
    // products of two estimated diagonals use independent probe halves so
    // E[d_a d_b] = d^2 (no variance bias)
    const VectorXd fa = df_a + dswt, fb = df_b + dswt;
    sum_u4_ff = (u4.array() * fa.array() * fb.array()).sum();
    sum_u4_fg = (u4.array() * 0.5 *
                 (fa.array() * dg_b.array() + fb.array() * dg_a.array())).sum();
    sum_u4_gg = (u4.array() * dg_a.array() * dg_b.array()).sum();
  }

  VectorXd f() const { return diag_f1 + dswt; }

  MatrixXd v_s() const {
    MatrixXd m = MatrixXd::Zero(p + 2, p + 2);
    m(0, 0) = inv_n / s4 * (2.0 * t1 + t2 + 2.0 * t3 + 2.0 * t4 + t5) +
              inv_n / s6 * h.squaredNorm();
    const VectorXd ssq_gxb = S * (St * h).eval();  // (S S^T)^2 W S^{-1} X beta
    m.block(1, 0, p, 1) = inv_n / s6 * (data.X.transpose() * ssq_gxb);
    m(p + 1, 0) = 4.0 * tr_stsstw * inv_n / s6;
    m.block(1, 1, p, p) = inv_n / s6 * (XS2.transpose() * XS2);
    m(p + 1, p + 1) = 2.0 * tr_sst_sq * inv_n / s8;
    m.block(0, 1, 1, p) = m.block(1, 0, p, 1).transpose();
    m(0, p + 1) = m(p + 1, 0);
    return m;
  }

  MatrixXd omega_s() const {
    MatrixXd m = MatrixXd::Zero(p + 2, p + 2);
    const VectorXd fd = f();
    m(0, 0) = inv_n / s8 * sum_u4_ff + 2.0 * inv_n / s8 * (h.array() * u3.array() * fd.array()).sum();
    m.block(1, 0, p, 1) = inv_n / s8 * (XS2.transpose() * u3.cwiseProduct(fd));
    m(p + 1, 0) = inv_n / s10 * ((dss.array() * u4.array() * fd.array()).sum() +
                                 (h.array() * u3.array() * dss.array()).sum());
    m.block(1, p + 1, p, 1) = inv_n / s10 * (XS2.transpose() * u3.cwiseProduct(dss));
    m(p + 1, p + 1) = inv_n / s12 * (dss.array().square() * u4.array()).sum();
    m.block(0, 1, 1, p) = m.block(1, 0, p, 1).transpose();
    m(0, p + 1) = m(p + 1, 0);
    m.block(p + 1, 1, 1, p) = m.block(1, p + 1, p, 1).transpose();
    return m;
  }

  MatrixXd u_s() const {
    MatrixXd m = MatrixXd::Zero(p + 2, p + 2);
    m(0, 0) = inv_n / s2 * (tr_w_sq + 2.0 * u2 + u4t) + inv_n / s4 * sg_xb.squaredNorm();
    m.block(1, 0, p, 1) = inv_n / s4 * (data.X.transpose() * h);
    m(p + 1, 0) = 2.0 * tr_swt * inv_n / s4;
    m.block(1, 1, p, p) = inv_n / s4 * (StX.transpose() * StX);
    m(p + 1, p + 1) = tr_sts * inv_n / s6;
    m.block(0, 1, 1, p) = m.block(1, 0, p, 1).transpose();
    m(0, p + 1) = m(p + 1, 0);
    return m;
  }

  MatrixXd v_m() const {
    MatrixXd m = MatrixXd::Zero(p + 2, p + 2);
    m(0, 0) = inv_n * (tr_gg + frob_g) + inv_n / s2 * g_xb.squaredNorm();
    m.block(1, 0, p, 1) = inv_n / s2 * (data.X.transpose() * g_xb);
    m(p + 1, 0) = inv_n / s2 * tr_g;
    m.block(1, 1, p, p) = inv_n / s2 * (data.X.transpose() * data.X);
    m(p + 1, p + 1) = 1.0 / (2.0 * s4);
    m.block(0, 1, 1, p) = m.block(1, 0, p, 1).transpose();
    m(0, p + 1) = m(p + 1, 0);
    return m;
  }

  MatrixXd omega_m() const {
    MatrixXd m = MatrixXd::Zero(p + 2, p + 2);
    m(0, 0) = inv_n / s4 * sum_u4_gg +
              2.0 * inv_n / s4 * (g_xb.array() * u3.array() * diag_g.array()).sum();
    m.block(1, 0, p, 1) = inv_n / s4 * (data.X.transpose() * u3.cwiseProduct(diag_g));
    m(p + 1, 0) = 0.5 * inv_n / s6 * ((u4.array() * diag_g.array()).sum() +
                                      (u3.array() * g_xb.array()).sum());
    m.block(1, p + 1, p, 1) = 0.5 * inv_n / s6 * (data.X.transpose() * u3);
    m(p + 1, p + 1) = 0.25 * inv_n / s8 * u4.sum();
    m.block(0, 1, 1, p) = m.block(1, 0, p, 1).transpose();
    m(0, p + 1) = m(p + 1, 0);
    m.block(p + 1, 1, 1, p) = m.block(1, p + 1, p, 1).transpose();
    return m;
  }

  MatrixXd v_sm() const {
    MatrixXd m = MatrixXd::Zero(p + 2, p + 2);
    m(0, 0) = 2.0 * inv_n / s2 * tr_wstg + inv_n / s2 * (tr_w_sq + u4t) +
              inv_n / s4 * sg_xb.squaredNorm();
    m.block(0, 1, 1, p) = inv_n / s4 * (XS2.transpose() * g_xb).transpose();
    m(0, p + 1) = 2.0 * tr_swt * inv_n / s4;
    m.block(1, 0, p, 1) = inv_n / s4 * (data.X.transpose() * h);
    m.block(1, 1, p, p) = inv_n / s4 * (StX.transpose() * StX);
    m(p + 1, 0) = 2.0 * tr_swt * inv_n / s4;
    m(p + 1, p + 1) = tr_sts * inv_n / s6;
    return m;
  }

  MatrixXd omega_sm() const {
    MatrixXd m = MatrixXd::Zero(p + 2, p + 2);
    const VectorXd fd = f();
    m(0, 0) = inv_n / s6 * (sum_u4_fg + (h.array() * u3.array() * diag_g.array()).sum() +
                            (fd.array() * u3.array() * g_xb.array()).sum());
    m.block(0, 1, 1, p) = inv_n / s6 * (data.X.transpose() * u3.cwiseProduct(fd)).transpose();
    m(0, p + 1) = 0.5 * inv_n / s8 * ((u4.array() * fd.array()).sum() +
                                      (u3.array() * h.array()).sum());
    m.block(1, 0, p, 1) = inv_n / s6 * (XS2.transpose() * u3.cwiseProduct(diag_g));
    m.block(1, p + 1, p, 1) = 0.5 * inv_n / s8 * (XS2.transpose() * u3);
    m(p + 1, 0) = inv_n / s8 * ((dss.array() * u4.array() * diag_g.array()).sum() +
                                (dss.array() * u3.array() * g_xb.array()).sum());
    m.block(p + 1, 1, 1, p) = inv_n / s8 * (data.X.transpose() * u3.cwiseProduct(dss)).transpose();
    m(p + 1, p + 1) = 0.5 * inv_n / s10 * (dss.array() * u4.array()).sum();
    return m;
  }
};

void check_invertible(const MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  const double lo = es.eigenvalues().cwiseAbs().minCoeff();
  const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(hi > 0.0) || lo < 1e-12 * hi)
    throw InferenceError(std::string("inference: singular ") + what);
}

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

AsymptoticCovariances qsm_sandwich(const SarData& data, const ParamVector& theta_hat,
                                   const MomentDiagonals& moms, const InferenceOptions& opts) {
  data.validate();
  BlockWorkspace w(data, theta_hat, moms, opts);
  AsymptoticCovariances out;
  out.V_S = w.v_s();
  out.Omega_S = w.omega_s();
  out.U_S = w.u_s();
  out.trace_mc_se = w.mc_se;
  check_invertible(out.U_S, "U_S");
  const MatrixXd u_inv = out.U_S.inverse();
  out.sandwich_qsm = symmetrize(u_inv * (out.V_S + out.Omega_S) * u_inv.transpose());
  return out;
}

AsymptoticCovariances improved_sandwich(const SarData& data, const ParamVector& theta_tilde_hat,
                                        const MomentDiagonals& moms,
                                        const InferenceOptions& opts) {
  data.validate();
  const Index p = data.p();
  BlockWorkspace w(data, theta_tilde_hat, moms, opts);
  AsymptoticCovariances out;
  out.V_S = w.v_s();
  out.Omega_S = w.omega_s();
  out.U_S = w.u_s();
  out.V_M = w.v_m();
  out.Omega_M = w.omega_m();
  out.V_SM = w.v_sm();
  out.Omega_SM = w.omega_sm();
  out.improved_filled = true;
  out.trace_mc_se = w.mc_se;

  check_invertible(out.U_S, "U_S");
  const MatrixXd u_inv = out.U_S.inverse();
  out.sandwich_qsm = symmetrize(u_inv * (out.V_S + out.Omega_S) * u_inv.transpose());

  // Xi per the partition of V_M into the lambda scalar and the rest
  const MatrixXd v_mm = out.V_M.block(1, 1, p + 1, p + 1);
  check_invertible(v_mm, "V_{M,-lambda,-lambda}");
  const MatrixXd v_mm_inv = v_mm.inverse();
  const VectorXd v_ml = out.V_M.block(1, 0, p + 1, 1);
  const Eigen::RowVectorXd e1_uinv = u_inv.row(0);  // (1, 0...) U_S^{-1}
  MatrixXd xi = MatrixXd::Zero(p + 2, 2 * (p + 2));
  xi.block(0, 0, 1, p + 2) = e1_uinv;
  xi.block(1, 0, p + 1, p + 2) = -(v_mm_inv * v_ml) * e1_uinv;
  xi.block(1, p + 3, p + 1, p + 1) = v_mm_inv;  // (0_{p+1}, I_{p+1}) selector
  out.Xi = xi;

  MatrixXd v2(2 * (p + 2), 2 * (p + 2)), o2(2 * (p + 2), 2 * (p + 2));
  v2 << out.V_S, out.V_SM, out.V_SM.transpose(), out.V_M;
  o2 << out.Omega_S, out.Omega_SM, out.Omega_SM.transpose(), out.Omega_M;
  out.sandwich_improved = symmetrize(xi * (v2 + o2) * xi.transpose());
  return out;
}

MatrixXd qmle_sandwich(const SarData& data, const ParamVector& theta_hat,
                       const MomentDiagonals& moms, const InferenceOptions& opts) {
  data.validate();
  BlockWorkspace w(data, theta_hat, moms, opts);
  const MatrixXd v_m = w.v_m();
  const MatrixXd omega_m = w.omega_m();
  check_invertible(v_m, "V_M");
  const MatrixXd v_inv = v_m.inverse();
  return symmetrize(v_inv * (v_m + omega_m) * v_inv.transpose());
}

}  // namespace sarsm
