#pragma once

// Derivative-free minimizers used by the likelihood fits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>

namespace rareq::optimize {

template <std::size_t N>
struct Minimum {
  std::array<double, N> x{};
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
};

struct NelderMeadOptions {
  int max_evaluations = 2000;
  double f_tolerance = 1e-10;
  double x_tolerance = 1e-9;
};

/// Nelder–Mead simplex minimization. Non-finite objective values are treated
/// as +inf, so infeasible regions simply repel the simplex.
template <std::size_t N, class F>
Minimum<N> nelder_mead(F&& f, std::array<double, N> start, std::array<double, N> step,
                       const NelderMeadOptions& opt = {}) {
  using Point = std::array<double, N>;
  constexpr double inf = std::numeric_limits<double>::infinity();
  int evals = 0;
  auto eval = [&](const Point& p) {
    ++evals;
    const double v = f(p);
    return std::isfinite(v) ? v : inf;
  };

  std::array<Point, N + 1> simplex;
  std::array<double, N + 1> fv;
  simplex[0] = start;
  fv[0] = eval(start);
  for (std::size_t i = 0; i < N; ++i) {
    simplex[i + 1] = start;
    simplex[i + 1][i] += step[i];
    fv[i + 1] = eval(simplex[i + 1]);
  }

  std::array<std::size_t, N + 1> order;
  while (evals < opt.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
    const auto best = order.front();
    const auto worst = order.back();
    const auto second = order[N - 1];

    double spread = 0.0;
    for (std::size_t i = 0; i <= N; ++i) {
      for (std::size_t k = 0; k < N; ++k) spread = std::max(spread, std::abs(simplex[i][k] - simplex[best][k]));
    }
    if (std::isfinite(fv[worst]) && std::abs(fv[worst] - fv[best]) <= opt.f_tolerance * (1.0 + std::abs(fv[best])) &&
        spread <= opt.x_tolerance) {
      break;
    }

    Point centroid{};
    for (std::size_t i = 0; i <= N; ++i) {
      if (i == worst) continue;
      for (std::size_t k = 0; k < N; ++k) centroid[k] += simplex[i][k] / static_cast<double>(N);
    }
    auto along = [&](double t) {
      Point p;
      for (std::size_t k = 0; k < N; ++k) p[k] = centroid[k] + t * (simplex[worst][k] - centroid[k]);
      return p;
    };

    const Point reflected = along(-1.0);
    const double fr = eval(reflected);
    if (fr < fv[best]) {
      const Point expanded = along(-2.0);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        fv[worst] = fe;
      } else {
        simplex[worst] = reflected;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = reflected;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    const Point contracted = along(outside ? -0.5 : 0.5);
    const double fc = eval(contracted);
    if (fc < (outside ? fr : fv[worst])) {
      simplex[worst] = contracted;
      fv[worst] = fc;
      continue;
    }
    // shrink toward the best vertex
    for (std::size_t i = 0; i <= N; ++i) {
      if (i == best) continue;
      for (std::size_t k = 0; k < N; ++k) simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
      fv[i] = eval(simplex[i]);
    }
  }

  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  return {simplex[best], fv[best], evals};
}

struct ScalarMinimum {
  double x = 0.0;
  double value = std::numeric_limits<double>::infinity();
};

/// Golden-section search for a minimum of f on [lo, hi].
template <class F>
ScalarMinimum golden_section(F&& f, double lo, double hi, double tolerance = 1e-8, int max_iterations = 200) {
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  auto value = [&](double x) {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  double a = lo;
  double b = hi;
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = value(c);
  double fd = value(d);
  for (int i = 0; i < max_iterations && (b - a) > tolerance * (1.0 + std::abs(a) + std::abs(b)); ++i) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = value(d);
    }
  }
  return fc <= fd ? ScalarMinimum{c, fc} : ScalarMinimum{d, fd};
}

}  // namespace rareq::optimize
