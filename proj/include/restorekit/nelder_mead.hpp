#pragma once

#include <functional>
#include <vector>

namespace restorekit {

struct NelderMeadOptions {
  int max_iterations = 300;
  /// Stop once every vertex lies within this distance of the best vertex.
  double diameter_tolerance = 1e-3;
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  /// Box constraint applied to every trial point (empty = unconstrained).
  std::vector<double> lower, upper;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Downhill simplex minimization started from x0 with an axis-aligned
/// initial simplex of the given per-axis steps. Trial points are projected
/// onto the box before evaluation.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const std::vector<double>& steps,
                             const NelderMeadOptions& options = {});

}  // namespace restorekit
