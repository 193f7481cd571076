#include "sarsm/optim.hpp"

#include <cmath>
#include <limits>

namespace sarsm {

namespace {

constexpr double kGolden = 0.3819660112501051;  // (3 - sqrt(5)) / 2

}  // namespace

LineSearchResult minimize_scalar(const std::function<double(double)>& fn, double lo, double hi,
                                 int grid_points, double xtol, int max_iter) {
  if (!(lo < hi)) throw std::invalid_argument("minimize_scalar: empty interval");
  if (grid_points < 2) throw std::invalid_argument("minimize_scalar: need at least 2 grid points");

  LineSearchResult res;
  const double inf = std::numeric_limits<double>::infinity();
  auto safe_fn = [&](double x) {
    ++res.evaluations;
    double v;
    try {
      v = fn(x);
    } catch (const FitError&) {
      return inf;
    }
    return std::isfinite(v) ? v : inf;
  };

  res.grid.resize(grid_points);
  res.grid_values.resize(grid_points);
  int best = -1;
  for (int k = 0; k < grid_points; ++k) {
    const double x = lo + (hi - lo) * static_cast<double>(k) / (grid_points - 1);
    const double v = safe_fn(x);
    res.grid(k) = x;
    res.grid_values(k) = std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(v)) {
      ++res.skipped_grid_points;
      continue;
    }
    if (best < 0 || v < res.grid_values(best)) best = k;
  }
  if (best < 0) throw FitError("minimize_scalar: objective degenerate at every grid point");

  // bracket one grid step around the best point
  double a = res.grid(std::max(best - 1, 0));
  double b = res.grid(std::min(best + 1, grid_points - 1));
  double x = res.grid(best);
  double fx = res.grid_values(best);

  // bounded Brent
  double w = x, v = x, fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    const double xm = 0.5 * (a + b);
    const double tol1 = xtol * std::abs(x) + 1e-12;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;
    bool use_golden = true;
    if (std::abs(e) > tol1) {
      // parabolic step through (x, w, v)
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double e_prev = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = xm > x ? tol1 : -tol1;
        use_golden = false;
      }
    }
    if (use_golden) {
      e = (x >= xm ? a : b) - x;
      d = kGolden * e;
    }
    const double u = std::abs(d) >= tol1 ? x + d : x + (d > 0 ? tol1 : -tol1);
    const double fu = safe_fn(u);
    res.refine_trace.emplace_back(u, fu);
    if (fu <= fx) {
      if (u >= x)
        a = x;
      else
        b = x;
      v = w;
      fv = fw;
      w = x;
      fw = fx;
      x = u;
      fx = fu;
    } else {
      if (u < x)
        a = u;
      else
        b = u;
      if (fu <= fw || w == x) {
        v = w;
        fv = fw;
        w = u;
        fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u;
        fv = fu;
      }
    }
  }
  res.x = x;
  res.fx = fx;
  return res;
}

}  // namespace sarsm
