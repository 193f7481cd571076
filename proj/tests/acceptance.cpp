// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria can be selected by number on the command line
// (e.g. `acceptance 6 7 9`); the default runs all of them.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "sarsm/netgen.hpp"
#include "sarsm/qmle.hpp"
#include "sarsm/qsm.hpp"
#include "sarsm/simharness.hpp"
#include "test_support.hpp"
#include "transcription_oracle.hpp"

using namespace sarsm;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
  int id;
  std::string label;
  std::function<bool(std::ostream&)> run;
};

bool within_band(double value, double target, double rel_tol, std::ostream& os,
                 const std::string& what) {
  const bool ok = std::abs(value - target) <= rel_tol * target;
  os << "  " << what << " = " << value << " (target " << target << " +/- " << rel_tol * 100
     << "%)" << (ok ? "" : "  <-- OUT OF BAND") << "\n";
  return ok;
}

// shared n = 1000 benchmark run for criteria 2 and 8
struct T1n1000 {
  MetricsTable table;
  std::vector<RepOutcome> outcomes;
};

const T1n1000& table1_n1000() {
  static T1n1000 cached = [] {
    SimDesign d;
    d.n = 1000;
    d.lambda0 = 0.3;
    d.reps = 1000;
    d.base_seed = 20240502;
    d.with_inference = true;
    T1n1000 out;
    out.table = run_design(d, &out.outcomes);
    return out;
  }();
  return cached;
}

bool criterion1(std::ostream& os) {
  SimDesign d;
  d.n = 500;
  d.lambda0 = 0.3;
  d.reps = 1000;
  d.base_seed = 20240501;
  const MetricsTable t = run_design(d);
  os << "  failures: " << t.failures << "\n";
  bool ok = t.failures <= 20;
  ok &= within_band(t.cell(Method::qmle, "lambda").rmse, 0.0608, 0.15, os, "RMSE(lambda qmle)");
  ok &= within_band(t.cell(Method::qsm, "lambda").rmse, 0.0669, 0.15, os, "RMSE(lambda qsm)");
  ok &= within_band(t.cell(Method::qsm, "sigma2").rmse, 0.0640, 0.15, os, "RMSE(sigma2 qsm)");
  ok &= within_band(t.cell(Method::qsm_improved, "beta_2").sd, 0.0447, 0.15, os,
                    "SD(beta_2 improved)");
  return ok;
}

bool criterion2(std::ostream& os) {
  const auto& run = table1_n1000();
  const MetricsTable& t = run.table;
  os << "  failures: " << t.failures << "\n";
  bool ok = t.failures <= 20;
  ok &= within_band(t.cell(Method::qmle, "lambda").rmse, 0.0406, 0.15, os, "RMSE(lambda qmle)");
  ok &= within_band(t.cell(Method::qsm, "lambda").rmse, 0.0426, 0.15, os, "RMSE(lambda qsm)");
  const double sd_improved = 100.0 * t.cell(Method::qsm_improved, "beta_2").sd;
  const double sd_qmle = 100.0 * t.cell(Method::qmle, "beta_2").sd;
  const double gap = std::abs(sd_improved - sd_qmle);
  os << "  SD(beta_2) x100: improved = " << sd_improved << ", qmle = " << sd_qmle
     << ", |gap| = " << gap << " (<= 0.005 for a 2-decimal match)\n";
  ok &= gap <= 0.005;
  return ok;
}

bool criterion3(std::ostream& os) {
  SimDesign d;
  d.n = 1000;
  d.lambda0 = 0.3;
  d.errors = ErrorKind::mixture;
  d.reps = 1000;
  d.base_seed = 20240503;
  d.estimators = {Method::qsm};
  std::vector<RepOutcome> outcomes;
  const MetricsTable t = run_design(d, &outcomes);
  bool ok = within_band(t.cell(Method::qsm, "lambda").rmse, 0.0462, 0.15, os, "RMSE(lambda qsm)");
  // pooled ratio of means: per-rep ratios m4/sigma4 carry a finite-n bias
  // from the heavy-tailed numerator correlating with the denominator
  std::vector<double> m4s, s2s;
  for (const auto& o : outcomes) {
    if (!o.ok) continue;
    const double s4 = o.qsm.sigma2 * o.qsm.sigma2;
    m4s.push_back(o.kurtosis_plugin * s4);
    s2s.push_back(o.qsm.sigma2);
  }
  const double mean_m4 = pairwise_sum(m4s) / static_cast<double>(m4s.size());
  const double mean_s2 = pairwise_sum(s2s) / static_cast<double>(s2s.size());
  const double kurt = mean_m4 / (mean_s2 * mean_s2);
  const bool kurt_ok = std::abs(kurt - 8.4) <= 0.3;
  os << "  pooled residual kurtosis plug-in = " << kurt << " (target 8.4 +/- 0.3)"
     << (kurt_ok ? "" : "  <-- OUT OF BAND") << "\n";
  return ok && kurt_ok;
}

bool criterion4(std::ostream& os) {
  // t_M / t_S over {500, 1000, 5000}: monotone and >= 50 at n = 5000
  std::vector<Index> sizes = {500, 1000, 5000};
  std::vector<double> ratios;
  for (Index n : sizes) {
    SparseWeights w =
        row_normalize(gen_bernoulli(n, 5.0 / static_cast<double>(n), derive_stream_seed(4, n)));
    MatrixXd x(n, 2);
    x.col(0).setOnes();
    SplitMix64 rng(derive_stream_seed(5, n));
    for (Index i = 0; i < n; ++i) x(i, 1) = rng.normal();
    ParamVector theta0{0.3, (VectorXd(2) << 2.0, 1.0).finished(), 1.0};
    const SarData data = simulate_sar(theta0, std::move(x), std::move(w),
                                      ErrorDistribution::standard_normal(),
                                      derive_stream_seed(6, n));
    FitOptions opts;
    opts.with_inference = false;
    auto t0 = Clock::now();
    const FitReport qsm = fit_qsm(data, opts);
    fit_improved(data, qsm.theta.lambda, opts);
    const double t_s = std::chrono::duration<double>(Clock::now() - t0).count();
    QmleOptions qopts;
    qopts.fit = opts;
    t0 = Clock::now();
    fit_qmle(data, qopts);
    const double t_m = std::chrono::duration<double>(Clock::now() - t0).count();
    ratios.push_back(t_m / t_s);
    os << "  n = " << n << ": t_S = " << t_s << " s, t_M = " << t_m
       << " s, ratio = " << t_m / t_s << "\n";
  }
  bool ok = ratios[0] < ratios[1] && ratios[1] < ratios[2];
  os << "  monotone ratios: " << (ok ? "yes" : "NO") << "\n";
  const bool big = ratios[2] >= 50.0;
  os << "  ratio at n = 5000 >= 50: " << (big ? "yes" : "NO") << "\n";
  ok &= big;

  // concentrated-objective cost slope over {1e3, 4e3, 1.6e4}, measured with
  // a cache-exceeding instance pool per size
  std::vector<Index> slope_sizes = {1000, 4000, 16000};
  std::vector<double> lx, ly;
  for (Index n : slope_sizes) {
    const double sec = time_concentrated_eval(n, 7, 200);
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(sec));
    os << "  eval at n = " << n << ": " << sec * 1e3 << " ms\n";
  }
  const double mx = (lx[0] + lx[1] + lx[2]) / 3.0, my = (ly[0] + ly[1] + ly[2]) / 3.0;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  const double slope = sxy / sxx;
  const bool slope_ok = std::abs(slope - 1.0) <= 0.15;
  os << "  log-log slope = " << slope << " (target 1.0 +/- 0.15)"
     << (slope_ok ? "" : "  <-- OUT OF BAND") << "\n";
  return ok && slope_ok;
}

bool criterion5(std::ostream& os) {
  bool ok = true;
  for (int inst = 0; inst < 10; ++inst) {
    const bool mixture = inst % 2 == 1;
    const ErrorDistribution err =
        mixture ? ErrorDistribution::mixture_normal() : ErrorDistribution::standard_normal();
    SplitMix64 rng(derive_stream_seed(500, static_cast<std::uint64_t>(inst)));
    const Index n = 30, d = 3;
    std::vector<MatrixXd> a;
    for (Index j = 0; j < d; ++j) {
      MatrixXd m(n, n);
      for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c) m(r, c) = rng.uniform01() < 0.3 ? rng.normal() : 0.0;
      a.push_back(m);
    }
    MatrixXd b(n, d);
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < d; ++c) b(r, c) = rng.normal();
    const LqForm lq(std::move(a), std::move(b));
    const auto mom = err.moments();
    const MomentDiagonals moms = MomentDiagonals::homoskedastic(n, mom[0], mom[1], mom[2]);
    const VectorXd mean = lq_mean(lq, moms);
    const MatrixXd cov = lq_cov(lq, moms);
    const auto mc = lq_sample(lq, err, 2000000, derive_stream_seed(501, inst));
    double worst_mean = 0.0, worst_cov = 0.0;
    for (Index j = 0; j < d; ++j)
      worst_mean = std::max(worst_mean, std::abs(mean(j) - mc.mean(j)) / mc.mean_se(j));
    for (Index j = 0; j < d; ++j)
      for (Index k = 0; k < d; ++k)
        worst_cov = std::max(worst_cov, std::abs(cov(j, k) - mc.cov(j, k)) / mc.cov_se(j, k));
    const bool inst_ok = worst_mean <= 4.0 && worst_cov <= 5.0;
    os << "  instance " << inst << (mixture ? " (mixture)" : " (gaussian)")
       << ": worst mean dev = " << worst_mean << " se, worst cov dev = " << worst_cov << " se"
       << (inst_ok ? "" : "  <-- FAIL") << "\n";
    ok &= inst_ok;
  }
  return ok;
}

bool criterion6(std::ostream& os) {
  double worst = 0.0;
  SplitMix64 seeds(600);
  for (int k = 0; k < 50; ++k) {
    const SarData data = test::random_instance(20, 2, 0.4, seeds.next_u64());
    ParamVector theta{-0.7 + 1.4 * seeds.uniform01(), VectorXd::Random(2),
                      0.6 + seeds.uniform01()};
    const VectorXd g = score_at(data, theta);
    const VectorXd v = theta.to_vector();
    for (Index j = 0; j < v.size(); ++j) {
      const double h = 1e-6;
      VectorXd up = v, dn = v;
      up(j) += h;
      dn(j) -= h;
      const double fd = (objective_full(data, ParamVector::from_vector(up)) -
                         objective_full(data, ParamVector::from_vector(dn))) /
                        (2.0 * h);
      worst = std::max(worst, std::abs(g(j) - fd) / std::max(1.0, std::abs(g(j))));
    }
  }
  os << "  max relative error over 50 instances = " << worst << " (< 1e-6)\n";
  return worst < 1e-6;
}

bool criterion7(std::ostream& os) {
  // concentration identity on 50 random (lambda, instance) pairs
  SplitMix64 seeds(700);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const SarData data =
        test::random_instance(40 + static_cast<Index>(seeds.uniform_below(120)), 2, 0.4,
                              seeds.next_u64());
    const double lambda = -0.9 + 1.8 * seeds.uniform01();
    const double dc = concentrated_objective(data, lambda);
    ParamVector theta{lambda, beta_hat_given_lambda(data, lambda),
                      sigma2_hat_given_lambda(data, lambda)};
    worst = std::max(worst, std::abs(dc - objective_full(data, theta)) / std::abs(dc));
  }
  os << "  worst concentration identity deviation = " << worst << " (< 1e-9 relative)\n";
  bool ok = worst < 1e-9;

  // joint minimization agreement at n = 100
  const SarData data = test::random_instance(100, 2, 0.4, 701);
  FitOptions opts;
  opts.with_inference = false;
  const FitReport fit = fit_qsm(data, opts);
  auto objective = [&](const VectorXd& v) {
    if (v(3) <= 1e-8 || std::abs(v(0)) >= 0.995) return 1e100;
    return objective_full(data, ParamVector{v(0), v.segment(1, 2), v(3)});
  };
  VectorXd start(4);
  start << fit.theta.lambda + 0.05, fit.theta.beta(0) - 0.25, fit.theta.beta(1) + 0.15,
      fit.theta.sigma2 * 1.4;
  const VectorXd joint = test::nelder_mead(objective, start, 0.05);
  const VectorXd fitted = fit.theta.to_vector();
  double worst_comp = 0.0;
  for (Index j = 0; j < 4; ++j)
    worst_comp =
        std::max(worst_comp, std::abs(joint(j) - fitted(j)) / std::max(1.0, std::abs(joint(j))));
  os << "  worst |joint - fit| componentwise = " << worst_comp << " (<= 1e-5)\n";
  return ok && worst_comp <= 1e-5;
}

bool criterion8(std::ostream& os) {
  const auto& run = table1_n1000();
  int covered = 0, usable = 0;
  std::vector<double> ses;
  for (const auto& o : run.outcomes) {
    if (!o.ok || !o.inference_ok) continue;
    ++usable;
    ses.push_back(o.se_lambda_qsm);
    const double lo = o.qsm.lambda - 1.959963984540054 * o.se_lambda_qsm;
    const double hi = o.qsm.lambda + 1.959963984540054 * o.se_lambda_qsm;
    if (lo <= 0.3 && 0.3 <= hi) ++covered;
  }
  const double rate = static_cast<double>(covered) / std::max(usable, 1);
  os << "  coverage = " << rate << " over " << usable
     << " usable replications (target 0.95 +/- 0.025)\n";
  bool ok = usable >= 950 && std::abs(rate - 0.95) <= 0.025;
  // the mean reported standard error should track the empirical SD
  const double mean_se = pairwise_sum(ses) / static_cast<double>(ses.size());
  const double emp_sd = run.table.cell(Method::qsm, "lambda").sd;
  os << "  mean reported se(lambda) = " << mean_se << ", empirical SD = " << emp_sd
     << " (within 10%)\n";
  ok &= std::abs(mean_se - emp_sd) <= 0.10 * emp_sd;
  return ok;
}

bool criterion9(std::ostream& os) {
  SplitMix64 seeds(900);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Index n = 20 + static_cast<Index>(seeds.uniform_below(21));
    const SarData data = test::random_instance(n, 2, 0.35, seeds.next_u64());
    ParamVector theta;
    theta.lambda = -0.5 + seeds.uniform01();
    theta.beta = (VectorXd(2) << 1.5 + seeds.normal() * 0.2, 0.8 + seeds.normal() * 0.2).finished();
    theta.sigma2 = 0.7 + seeds.uniform01();
    const MomentDiagonals moms = moment_plugins(data, theta);
    const auto oracle = test::dense_transcription(data, theta, moms);
    const auto got = improved_sandwich(data, theta, moms);
    auto check = [&](const MatrixXd& a, const MatrixXd& b) {
      worst = std::max(worst, (a - b).lpNorm<Eigen::Infinity>() /
                                  std::max(1e-12, b.lpNorm<Eigen::Infinity>()));
    };
    check(got.V_S, oracle.V_S);
    check(got.Omega_S, oracle.Omega_S);
    check(got.U_S, oracle.U_S);
    check(got.V_M, oracle.V_M);
    check(got.Omega_M, oracle.Omega_M);
    check(got.V_SM, oracle.V_SM);
    check(got.Omega_SM, oracle.Omega_SM);
  }
  os << "  worst block deviation = " << worst << " (< 1e-9 relative)\n";
  return worst < 1e-9;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  const std::vector<Criterion> criteria = {
      {1, "benchmark accuracy, Bernoulli design n = 500 (1000 reps)", criterion1},
      {2, "Bernoulli design n = 1000: RMSEs and the 2-decimal SD match", criterion2},
      {3, "mixture-error design: RMSE(lambda qsm) and kurtosis plug-in", criterion3},
      {4, "timing: monotone t_M/t_S, >= 50 at n = 5000, eval slope 1.0 +/- 0.15", criterion4},
      {5, "Theorem-1 closed moments vs 2e6-draw Monte Carlo (10 instances)", criterion5},
      {6, "analytic score vs central finite differences (50 instances)", criterion6},
      {7, "concentration identity and joint-optimization equivalence", criterion7},
      {8, "95% Wald coverage for lambda on the n = 1000 design", criterion8},
      {9, "covariance blocks vs independent dense transcription (20 instances)", criterion9},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    std::ostringstream detail;
    bool ok = false;
    const auto t0 = Clock::now();
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail << "  exception: " << e.what() << "\n";
    }
    const double sec = std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": " << c.label << " ("
              << sec << " s)\n"
              << detail.str();
    if (!ok) ++failures;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << "\n";
  return failures == 0 ? 0 : 1;
}
