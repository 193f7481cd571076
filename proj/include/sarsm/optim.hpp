#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "sarsm/sparse_weights.hpp"

namespace sarsm {

struct LineSearchResult {
  double x = 0.0;
  double fx = 0.0;
  int evaluations = 0;
  int skipped_grid_points = 0;
  VectorXd grid;
  VectorXd grid_values;  // NaN where the objective was degenerate
  std::vector<std::pair<double, double>> refine_trace;
};

/// Coarse equispaced grid followed by bounded Brent refinement (golden-section
/// with parabolic steps) around the best grid point. Grid points where fn is
/// non-finite or throws FitError are skipped; if every point degenerates the
/// search fails with FitError.
LineSearchResult minimize_scalar(const std::function<double(double)>& fn, double lo, double hi,
                                 int grid_points = 21, double xtol = 1e-8, int max_iter = 200);

}  // namespace sarsm
