#include "restorekit/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "restorekit/errors.hpp"

namespace restorekit {

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const std::vector<double>& steps,
                             const NelderMeadOptions& opt) {
  const std::size_t n = x0.size();
  if (steps.size() != n) throw DomainError("nelder_mead: step vector size mismatch");
  const bool boxed = !opt.lower.empty();

  NelderMeadResult result;
  auto project = [&](std::vector<double> p) {
    if (boxed) {
      for (std::size_t i = 0; i < n; ++i) p[i] = std::clamp(p[i], opt.lower[i], opt.upper[i]);
    }
    return p;
  };
  auto eval = [&](const std::vector<double>& p) {
    ++result.evaluations;
    return f(p);
  };

  std::vector<std::vector<double>> simplex(n + 1, project(x0));
  for (std::size_t i = 0; i < n; ++i) {
    auto p = simplex[0];
    p[i] += steps[i];
    if (boxed && p[i] > opt.upper[i]) p[i] = simplex[0][i] - steps[i];
    simplex[i + 1] = project(p);
  }
  std::vector<double> values(n + 1);
  for (std::size_t i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<std::vector<double>> s2(n + 1);
    std::vector<double> v2(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      s2[i] = simplex[order[i]];
      v2[i] = values[order[i]];
    }
    simplex.swap(s2);
    values.swap(v2);
  };
  auto diameter = [&] {
    double d = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double diff = simplex[i][j] - simplex[0][j];
        s += diff * diff;
      }
      d = std::max(d, std::sqrt(s));
    }
    return d;
  };
  auto along = [&](const std::vector<double>& from, const std::vector<double>& to, double t) {
    std::vector<double> p(n);
    for (std::size_t j = 0; j < n; ++j) p[j] = from[j] + t * (to[j] - from[j]);
    return project(p);
  };

  for (result.iterations = 0; result.iterations < opt.max_iterations; ++result.iterations) {
    sort_simplex();
    if (diameter() < opt.diameter_tolerance) {
      result.converged = true;
      break;
    }
    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / n;
    }
    const auto& worst = simplex[n];

    const auto reflected = along(centroid, worst, -opt.reflection);
    const double f_reflected = eval(reflected);
    if (f_reflected < values[0]) {
      const auto expanded = along(centroid, worst, -opt.reflection * opt.expansion);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        simplex[n] = expanded;
        values[n] = f_expanded;
      } else {
        simplex[n] = reflected;
        values[n] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[n - 1]) {
      simplex[n] = reflected;
      values[n] = f_reflected;
      continue;
    }

    // Outside contraction when the reflection beat the worst vertex, inside otherwise.
    const bool outside = f_reflected < values[n];
    const auto contracted = outside ? along(centroid, reflected, opt.contraction)
                                    : along(centroid, worst, opt.contraction);
    const double f_contracted = eval(contracted);
    if (f_contracted < (outside ? f_reflected : values[n])) {
      simplex[n] = contracted;
      values[n] = f_contracted;
      continue;
    }

    for (std::size_t i = 1; i <= n; ++i) {
      simplex[i] = along(simplex[0], simplex[i], opt.shrink);
      values[i] = eval(simplex[i]);
    }
  }
  sort_simplex();
  result.x = simplex[0];
  result.value = values[0];
  return result;
}

}  // namespace restorekit
