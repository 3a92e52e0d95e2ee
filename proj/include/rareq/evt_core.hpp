#pragma once

// Lower-tail extreme value theory. Deficits y = u − X below a threshold u are
// modelled as generalized Pareto; the tail of X is then parametrized directly
// by its ε-quantile X_ε instead of the GPD scale.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "rareq/errors.hpp"
#include "rareq/optimize.hpp"
#include "rareq/stats_core.hpp"

namespace rareq {

inline constexpr double kXiLimit = 1e-8;

struct GpdParams {
  double sigma_u = 1.0;
  double xi = 0.0;
};

struct TailParams {
  double x_eps = 0.0;
  double xi = 0.0;
  double p_u = 0.1;
  double u = 1.0;
  double epsilon = 0.01;
};

struct DeficitSet {
  double u = 0.0;
  std::vector<double> deficits;
};

namespace detail {

/// ln(1 + ξz)/ξ, with the ξ → 0 limit z(1 − ξz/2).
inline double gpd_log_term(double z, double xi) {
  if (std::abs(xi) < kXiLimit) return z * (1.0 - 0.5 * xi * z);
  return std::log1p(xi * z) / xi;
}

/// (e^{ξL} − 1)/ξ, with the ξ → 0 limit L(1 + ξL/2).
inline double gpd_expm1_term(double log_ratio, double xi) {
  if (std::abs(xi) < kXiLimit) return log_ratio * (1.0 + 0.5 * xi * log_ratio);
  return std::expm1(xi * log_ratio) / xi;
}

inline bool in_support(double y, const GpdParams& p) { return y > 0.0 && 1.0 + p.xi * y / p.sigma_u > 0.0; }

}  // namespace detail

inline double gpd_log_pdf(double y, const GpdParams& p) {
  if (!(p.sigma_u > 0.0) || !detail::in_support(y, p)) return -kInf;
  const double z = y / p.sigma_u;
  // (1 + 1/ξ) ln(1 + ξz) = ln(1 + ξz) + ln(1 + ξz)/ξ
  const double log1p_term = std::abs(p.xi) < kXiLimit ? p.xi * z : std::log1p(p.xi * z);
  return -std::log(p.sigma_u) - log1p_term - detail::gpd_log_term(z, p.xi);
}

inline double gpd_pdf(double y, const GpdParams& p) { return std::exp(gpd_log_pdf(y, p)); }

inline double gpd_cdf(double y, const GpdParams& p) {
  if (y <= 0.0) return 0.0;
  if (p.xi < 0.0 && y >= -p.sigma_u / p.xi) return 1.0;
  return std::clamp(-std::expm1(-detail::gpd_log_term(y / p.sigma_u, p.xi)), 0.0, 1.0);
}

/// −n ln σ − (1 + 1/ξ) Σ ln(1 + ξy/σ), one log1p per deficit.
inline double gpd_log_likelihood(std::span<const double> deficits, const GpdParams& p) {
  if (!(p.sigma_u > 0.0)) return -kInf;
  const double inv_sigma = 1.0 / p.sigma_u;
  const bool limit = std::abs(p.xi) < kXiLimit;
  double sum = 0.0;
  for (double y : deficits) {
    const double t = p.xi * y * inv_sigma;
    if (!(y > 0.0) || !(t > -1.0)) return -kInf;
    if (limit) {
      const double z = y * inv_sigma;
      sum += t + z * (1.0 - 0.5 * t);
    } else {
      sum += std::log1p(t);
    }
  }
  const double n = static_cast<double>(deficits.size());
  return limit ? -n * std::log(p.sigma_u) - sum : -n * std::log(p.sigma_u) - (1.0 + 1.0 / p.xi) * sum;
}

/// X_ε = u − (σ_u/ξ)((p_u/ε)^ξ − 1).
inline double tail_quantile(const GpdParams& p, double u, double p_u, double epsilon) {
  detail::require(epsilon > 0.0 && p_u <= 1.0, "tail quantile needs 0 < epsilon and p_u <= 1");
  detail::require(epsilon <= p_u, "epsilon exceeds the threshold exceedance probability");
  detail::require(p.sigma_u > 0.0, "GPD scale must be positive");
  return u - p.sigma_u * detail::gpd_expm1_term(std::log(p_u / epsilon), p.xi);
}

/// σ_u implied by (X_ε, ξ, p_u): the inverse of tail_quantile in σ_u.
inline double sigma_from_reparam(const TailParams& t) {
  detail::require(t.epsilon > 0.0 && t.epsilon < t.p_u && t.p_u <= 1.0, "need 0 < epsilon < p_u <= 1");
  detail::require(t.x_eps < t.u, "X_eps must lie below the threshold");
  const double sigma = (t.u - t.x_eps) / detail::gpd_expm1_term(std::log(t.p_u / t.epsilon), t.xi);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ArgumentError("implied GPD scale is not positive");
  return sigma;
}

/// P(X ≤ x) for x below the threshold: p_u (1 + ξ(u − x)/σ_u)^{−1/ξ}.
inline double tail_cdf(double x, const TailParams& t) {
  detail::require(x < t.u, "tail_cdf is defined below the threshold only");
  const GpdParams g{sigma_from_reparam(t), t.xi};
  const double y = t.u - x;
  if (!detail::in_support(y, g)) return 0.0;
  return t.p_u * std::exp(-detail::gpd_log_term(y / g.sigma_u, g.xi));
}

struct Threshold {
  double u = 0.0;
  std::size_t r = 0;
};

/// u = X_(r) with r = max(⌈nζ⌉, r_min).
inline Threshold select_threshold(const SampleSet& s, double zeta, std::size_t r_min) {
  detail::require(zeta > 0.0 && zeta <= 1.0, "zeta must lie in (0,1]");
  detail::require(r_min >= 2, "r_min must be at least 2");
  const std::size_t r = std::max(ceil_rank(s.size(), zeta), r_min);
  if (r > s.size()) throw InsufficientSamples("threshold rank exceeds sample count");
  return {order_statistic(s, r), r};
}

/// Deficits u − X_i for the samples strictly below u.
inline DeficitSet compute_deficits(const SampleSet& s, double u) {
  DeficitSet d{u, {}};
  for (double x : s.sorted()) {
    if (x >= u) break;
    d.deficits.push_back(u - x);
  }
  return d;
}

/// Maximum-likelihood GPD fit by multi-start Nelder–Mead over (ln σ, ξ).
/// ξ is held at or above −1: below that the likelihood is unbounded as σ
/// approaches −ξ·max(y).
inline GpdParams fit_gpd_mle(const DeficitSet& d) {
  const auto& y = d.deficits;
  detail::require(y.size() >= 10, "GPD fit needs at least 10 deficits");
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*lo == *hi) throw FitError("all deficits are equal");
  const double ymax = *hi;
  const double n = static_cast<double>(y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= n - 1.0;

  auto nll = [&](const std::array<double, 2>& p) {
    if (p[1] < -1.0) return kInf;
    return -gpd_log_likelihood(y, {std::exp(p[0]), p[1]});
  };
  auto feasible = [&](double sigma, double xi) {
    if (xi < 0.0) sigma = std::max(sigma, -xi * ymax * 1.05);
    return std::array<double, 2>{std::log(sigma), xi};
  };

  const double xi_m = std::clamp(0.5 * (1.0 - mean * mean / var), -0.9, 0.9);
  const double sigma_m = 0.5 * mean * (mean * mean / var + 1.0);
  const std::array<std::array<double, 2>, 5> starts{
      feasible(sigma_m, xi_m), feasible(mean, 0.0), feasible(sigma_m, xi_m + 0.25), feasible(sigma_m, xi_m - 0.25),
      feasible(2.0 * mean, -0.5)};
  optimize::Minimum<2> best;
  for (const auto& s : starts) {
    const auto m = optimize::nelder_mead<2>(nll, s, {0.2, 0.1}, {1000, 1e-11, 1e-7});
    if (m.value < best.value) best = m;
  }
  // restart once from the winner; Nelder–Mead can stall on the curved ridge
  best = optimize::nelder_mead<2>(nll, best.x, {0.02, 0.01}, {1000, 1e-13, 1e-9});
  if (!std::isfinite(best.value)) throw FitError("GPD likelihood maximization failed");
  return {std::exp(best.x[0]), best.x[1]};
}

struct MeanDeficitPoint {
  double u = 0.0;
  double e_hat = 0.0;
  std::size_t count = 0;
};

/// Empirical mean deficit e(u) = mean(u − X | X < u) at each threshold.
/// Thresholds with no samples strictly below are omitted.
inline std::vector<MeanDeficitPoint> mean_deficit_curve(const SampleSet& s, std::span<const double> thresholds) {
  const auto sorted = s.sorted();
  std::vector<double> prefix(sorted.size() + 1, 0.0);
  for (std::size_t i = 0; i < sorted.size(); ++i) prefix[i + 1] = prefix[i] + sorted[i];
  std::vector<MeanDeficitPoint> out;
  for (double u : thresholds) {
    const auto k = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), u) - sorted.begin());
    if (k == 0) continue;
    out.push_back({u, u - prefix[k] / static_cast<double>(k), k});
  }
  return out;
}

struct ZetaOptions {
  int levels = 50;
  int window = 10;
  double min_r2 = 0.98;
  std::size_t min_count = 50;  // smallest number of samples below the lowest threshold
};

struct ZetaCalibration {
  double zeta = 0.0;
  std::vector<double> per_location;
  std::size_t skipped = 0;
};

namespace detail {

inline double r_squared(std::span<const MeanDeficitPoint> pts) {
  const double n = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    mx += p.u;
    my += p.e_hat;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const auto& p : pts) {
    sxx += (p.u - mx) * (p.u - mx);
    syy += (p.e_hat - my) * (p.e_hat - my);
    sxy += (p.u - mx) * (p.e_hat - my);
  }
  if (syy == 0.0) return 1.0;  // perfectly flat is perfectly linear
  if (sxx == 0.0) return 0.0;
  return sxy * sxy / (sxx * syy);
}

/// Largest fraction ζ such that the mean-deficit curve is linear below the
/// ζ-quantile, or a negative value if no window is linear.
inline double linear_region_fraction(const SampleSet& s, const ZetaOptions& opt) {
  const std::size_t n = s.size();
  const double q_lo = static_cast<double>(opt.min_count) / static_cast<double>(n);
  std::vector<double> thresholds;
  for (int j = 0; j < opt.levels; ++j) {
    const double q = q_lo * std::pow(1.0 / q_lo, static_cast<double>(j) / (opt.levels - 1));
    const auto r = std::clamp<std::size_t>(ceil_rank(n, q), 1, n);
    const double u = order_statistic(s, r);
    if (thresholds.empty() || u > thresholds.back()) thresholds.push_back(u);
  }
  const auto curve = mean_deficit_curve(s, thresholds);
  const auto w = static_cast<std::size_t>(opt.window);
  if (curve.size() < w) return -1.0;
  // Mean deficits at neighbouring thresholds share samples, so one noisy
  // point fails every window that contains it. The linear run starts at the
  // first accepted window and ends only after a full window's worth of
  // consecutive rejections.
  double upper = -1.0;
  std::size_t failures = 0;
  for (std::size_t start = 0; start + w <= curve.size(); ++start) {
    if (r_squared(std::span(curve).subspan(start, w)) >= opt.min_r2) {
      upper = curve[start + w - 1].u;
      failures = 0;
    } else if (upper >= 0.0 && ++failures >= w) {
      break;
    }
  }
  if (upper < 0.0) return -1.0;
  return ecdf_eval(s, upper);
}

}  // namespace detail

/// Threshold fraction from mean-deficit linearity: per location, the largest
/// ζ whose threshold keeps e(u) linear; the median over locations is returned.
inline ZetaCalibration calibrate_zeta(std::span<const SampleSet> samples, const ZetaOptions& opt = {}) {
  detail::require(!samples.empty(), "calibrate_zeta needs at least one location");
  detail::require(opt.levels >= opt.window && opt.window >= 3, "invalid zeta calibration grid");
  ZetaCalibration out;
  for (const auto& s : samples) {
    if (s.size() < opt.min_count * 2) {
      ++out.skipped;
      continue;
    }
    const double z = detail::linear_region_fraction(s, opt);
    if (z <= 0.0) {
      ++out.skipped;
      continue;
    }
    out.per_location.push_back(z);
  }
  if (out.per_location.empty()) throw FitError("no location has a linear mean-deficit region");
  out.zeta = median(out.per_location);
  return out;
}

}  // namespace rareq
