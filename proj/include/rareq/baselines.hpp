#pragma once

// Local-data-only baselines: the distribution-free order-statistic interval
// and a GPD profile-likelihood interval.

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "rareq/errors.hpp"
#include "rareq/evt_core.hpp"
#include "rareq/optimize.hpp"
#include "rareq/stats_core.hpp"

namespace rareq {

/// P(X_(r) ≤ X_ε) = I_ε(r, n+1−r), extended by 1 for r ≤ 0 and 0 for r > n.
inline double order_statistic_coverage(std::size_t n, double epsilon, long r) {
  if (r <= 0) return 1.0;
  if (static_cast<std::size_t>(r) > n) return 0.0;
  const auto rr = static_cast<double>(r);
  return beta_cdf(epsilon, rr, static_cast<double>(n) + 1.0 - rr);
}

/// Largest r with I_ε(r, n+1−r) ≥ 1−δ, or 0 when none qualifies.
inline std::size_t nonpar_baseline_rank(std::size_t n, double epsilon, double delta) {
  std::size_t lo = 0;  // invariant: rank lo qualifies (0 trivially)
  std::size_t hi = n + 1;
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (order_statistic_coverage(n, epsilon, static_cast<long>(mid)) >= 1.0 - delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

inline ConfidenceInterval nonpar_baseline_interval(const SampleSet& local, const QuantileSpec& spec,
                                                   Sided sided = Sided::one) {
  spec.validate();
  const std::size_t n = local.size();
  const double level = 1.0 - spec.delta;
  if (n == 0) return make_interval(0.0, kInf, level, sided);
  if (sided == Sided::one) {
    const std::size_t r = nonpar_baseline_rank(n, spec.epsilon, spec.delta);
    return make_interval(r == 0 ? 0.0 : order_statistic(local, r), kInf, level, sided);
  }
  const auto c = static_cast<long>(ceil_rank(n, spec.epsilon));
  const auto n_l = static_cast<long>(n);
  for (long k = 0;; ++k) {
    const long r1 = c - k;
    const long r2 = c + k;
    const double cov = order_statistic_coverage(n, spec.epsilon, r1) - order_statistic_coverage(n, spec.epsilon, r2);
    if (cov >= level || (r1 <= 0 && r2 > n_l)) {
      const double lo = r1 >= 1 ? order_statistic(local, static_cast<std::size_t>(r1)) : 0.0;
      const double hi = r2 <= n_l ? order_statistic(local, static_cast<std::size_t>(r2)) : kInf;
      return make_interval(lo, hi, level, sided);
    }
  }
}

struct ProfileGrid {
  std::vector<double> x_eps_grid;
  std::vector<double> profile_loglik;
};

inline constexpr double kProfileXiMin = -1.0;
inline constexpr double kProfileXiMax = 5.0;

/// sup over ξ of the deficit log-likelihood with σ_u implied by (X_ε, ξ, p̂_u).
/// −inf when no ξ in range puts every deficit inside the support.
inline double profile_loglik(double x_eps, const DeficitSet& d, double u, double p_u_hat, const QuantileSpec& spec) {
  detail::require(x_eps > 0.0 && x_eps <= u, "profile likelihood needs 0 < x_eps <= u");
  detail::require(p_u_hat > spec.epsilon && p_u_hat <= 1.0, "need epsilon < p_u_hat <= 1");
  if (x_eps == u) return -kInf;
  const double log_ratio = std::log(p_u_hat / spec.epsilon);
  auto nll = [&](double xi) {
    const double sigma = (u - x_eps) / detail::gpd_expm1_term(log_ratio, xi);
    if (!(sigma > 0.0) || !std::isfinite(sigma)) return kInf;
    return -gpd_log_likelihood(d.deficits, {sigma, xi});
  };

  // coarse scan first: the slice can be flat or multimodal near the support edge
  constexpr int kGrid = 41;
  const double step = (kProfileXiMax - kProfileXiMin) / (kGrid - 1);
  int best = -1;
  double best_value = kInf;
  for (int i = 0; i < kGrid; ++i) {
    const double v = nll(kProfileXiMin + step * i);
    if (v < best_value) {
      best_value = v;
      best = i;
    }
  }
  if (best < 0) return -kInf;
  const double lo = kProfileXiMin + step * std::max(best - 1, 0);
  const double hi = kProfileXiMin + step * std::min(best + 1, kGrid - 1);
  const auto m = optimize::golden_section(nll, lo, hi, 1e-10);
  return -std::min(best_value, m.value);
}

inline ProfileGrid profile_curve(std::span<const double> x_grid, const DeficitSet& d, double u, double p_u_hat,
                                 const QuantileSpec& spec) {
  ProfileGrid g;
  for (double x : x_grid) {
    detail::require(g.x_eps_grid.empty() || x > g.x_eps_grid.back(), "grid must be strictly increasing");
    g.x_eps_grid.push_back(x);
    g.profile_loglik.push_back(profile_loglik(x, d, u, p_u_hat, spec));
  }
  return g;
}

enum class BaselineFlag { none, insufficient_samples, fit_failed };

inline std::string to_string(BaselineFlag f) {
  switch (f) {
    case BaselineFlag::none: return "";
    case BaselineFlag::insufficient_samples: return "insufficient_samples";
    case BaselineFlag::fit_failed: return "fit_failed";
  }
  return "";
}

struct EvtBaselineResult {
  ConfidenceInterval interval;
  BaselineFlag flag = BaselineFlag::none;
  Threshold threshold;
  double x_hat = 0.0;
  double xi_hat = 0.0;
  double max_loglik = -kInf;
};

namespace detail {

/// First point from `inside` towards `outside` where the deviance reaches the
/// cutoff, by bisection to relative tolerance 1e-6.
template <class Dev>
double bisect_deviance(Dev&& dev, double inside, double outside, double cutoff) {
  for (int i = 0; i < 200 && std::abs(outside - inside) > 1e-6 * std::max(std::abs(inside), 1e-300); ++i) {
    const double mid = 0.5 * (inside + outside);
    if (dev(mid) >= cutoff) {
      outside = mid;
    } else {
      inside = mid;
    }
  }
  return 0.5 * (inside + outside);
}

}  // namespace detail

inline EvtBaselineResult evt_baseline_interval(const SampleSet& local, const QuantileSpec& spec, double zeta,
                                               std::size_t r_min, Sided sided = Sided::one) {
  spec.validate();
  const double level = 1.0 - spec.delta;
  EvtBaselineResult out;
  out.interval = make_interval(0.0, kInf, level, sided);
  const std::size_t n = local.size();
  try {
    out.threshold = select_threshold(local, zeta, r_min);
  } catch (const InsufficientSamples&) {
    out.flag = BaselineFlag::insufficient_samples;
    return out;
  }
  const double u = out.threshold.u;
  const double p_u_hat = static_cast<double>(out.threshold.r) / static_cast<double>(n);
  if (!(p_u_hat > spec.epsilon)) {
    out.flag = BaselineFlag::insufficient_samples;
    return out;
  }
  const auto d = compute_deficits(local, u);
  GpdParams mle;
  try {
    mle = fit_gpd_mle(d);
  } catch (const std::exception&) {
    out.flag = BaselineFlag::fit_failed;
    return out;
  }
  out.x_hat = tail_quantile(mle, u, p_u_hat, spec.epsilon);
  out.xi_hat = mle.xi;
  if (!(out.x_hat > 0.0) || !(out.x_hat < u)) {
    out.flag = BaselineFlag::fit_failed;
    return out;
  }
  out.max_loglik = std::max(gpd_log_likelihood(d.deficits, mle), profile_loglik(out.x_hat, d, u, p_u_hat, spec));

  const double cutoff = chi2_1dof_quantile(level);
  auto deviance = [&](double x) { return 2.0 * (out.max_loglik - profile_loglik(x, d, u, p_u_hat, spec)); };

  // lower end: geometric steps down from X̂; if the cutoff is never reached
  // before 0 the interval extends to 0
  const double x_hat = out.x_hat;
  const double h0 = 1e-3 * std::max(x_hat, u - x_hat);
  double inside = x_hat;
  double lower = 0.0;
  for (double h = h0;; h *= 2.0) {
    const double x = x_hat - h;
    if (x <= x_hat * 1e-9) {
      const double floor_x = x_hat * 1e-9;
      if (deviance(floor_x) >= cutoff) lower = detail::bisect_deviance(deviance, inside, floor_x, cutoff);
      break;
    }
    if (deviance(x) >= cutoff) {
      lower = detail::bisect_deviance(deviance, inside, x, cutoff);
      break;
    }
    inside = x;
  }

  double upper = kInf;
  if (sided == Sided::two) {
    // upper end lies below u: approach it by halving the remaining gap
    inside = x_hat;
    upper = u;
    for (int k = 1; k <= 60; ++k) {
      const double x = u - (u - x_hat) * std::ldexp(1.0, -k);
      if (deviance(x) >= cutoff) {
        upper = detail::bisect_deviance(deviance, inside, x, cutoff);
        break;
      }
      inside = x;
    }
  }
  out.interval = make_interval(lower, upper, level, sided);
  return out;
}

}  // namespace rareq
