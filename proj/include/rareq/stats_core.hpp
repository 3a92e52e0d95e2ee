#pragma once

// Statistical primitives shared by every estimator: immutable sample sets,
// order statistics, the regularized incomplete beta function and the normal
// quantile function.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rareq/errors.hpp"

namespace rareq {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Immutable collection of strictly positive channel-metric samples.
///
/// Copies share storage. The ascending view is computed on first use and is
/// safe to request from several threads at once.
class SampleSet {
 public:
  SampleSet() : values_(std::make_shared<const std::vector<double>>()), cache_(std::make_shared<Cache>()) {}

  explicit SampleSet(std::vector<double> values) : cache_(std::make_shared<Cache>()) {
    for (double v : values) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw ArgumentError("SampleSet values must be strictly positive and finite");
      }
    }
    values_ = std::make_shared<const std::vector<double>>(std::move(values));
  }

  [[nodiscard]] std::size_t size() const noexcept { return values_->size(); }
  [[nodiscard]] bool empty() const noexcept { return values_->empty(); }
  [[nodiscard]] std::span<const double> values() const noexcept { return *values_; }

  [[nodiscard]] std::span<const double> sorted() const {
    std::call_once(cache_->once, [this] {
      cache_->sorted = *values_;
      std::sort(cache_->sorted.begin(), cache_->sorted.end());
    });
    return cache_->sorted;
  }

  /// First `n` samples in acquisition order.
  [[nodiscard]] SampleSet prefix(std::size_t n) const {
    detail::require(n <= size(), "prefix longer than sample set");
    if (n == size()) return *this;
    return SampleSet(std::vector<double>(values_->begin(), values_->begin() + static_cast<std::ptrdiff_t>(n)));
  }

 private:
  struct Cache {
    std::once_flag once;
    std::vector<double> sorted;
  };
  std::shared_ptr<const std::vector<double>> values_;
  std::shared_ptr<Cache> cache_;
};

struct QuantileSpec {
  double epsilon = 1e-2;
  double delta = 0.05;

  void validate() const {
    detail::require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0,1)");
    detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
  }
};

enum class Sided { one, two };

inline std::string to_string(Sided s) { return s == Sided::one ? "one-sided" : "two-sided"; }

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = kInf;
  double confidence = 0.95;
  Sided sided = Sided::one;

  [[nodiscard]] bool contains(double x) const noexcept { return lower <= x && x <= upper; }
};

/// Builds an interval, enforcing 0 <= lower <= upper.
inline ConfidenceInterval make_interval(double lower, double upper, double confidence, Sided sided) {
  lower = std::max(lower, 0.0);
  detail::require(!std::isnan(lower) && !std::isnan(upper), "interval bounds must not be NaN");
  detail::require(lower <= upper, "interval lower bound exceeds upper bound");
  return {lower, upper, confidence, sided};
}

/// Number of samples at or below level p out of n, i.e. ceil(n * p), with the
/// product rounded to guard against representation noise such as 100*0.07.
inline std::size_t ceil_rank(std::size_t n, double p) {
  const double x = static_cast<double>(n) * p;
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, x)) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(x));
}

/// r-th smallest value, 1-based.
inline double order_statistic(const SampleSet& s, std::size_t r) {
  if (r < 1 || r > s.size()) throw ArgumentError("order statistic rank out of range");
  return s.sorted()[r - 1];
}

inline double empirical_quantile(const SampleSet& s, double epsilon) {
  detail::require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0,1)");
  detail::require(!s.empty(), "empirical quantile of an empty sample set");
  return order_statistic(s, std::max<std::size_t>(1, ceil_rank(s.size(), epsilon)));
}

inline double ecdf_eval(const SampleSet& s, double x) {
  detail::require(!s.empty(), "ECDF of an empty sample set");
  const auto sorted = s.sorted();
  const auto count = std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin();
  return static_cast<double>(count) / static_cast<double>(sorted.size());
}

namespace detail {

// Error of Stirling's approximation, ln Γ(x+1) - [(x+1/2) ln x - x + ln √(2π)].
inline double stirling_error(double x) {
  constexpr double s0 = 1.0 / 12.0;
  constexpr double s1 = 1.0 / 360.0;
  constexpr double s2 = 1.0 / 1260.0;
  constexpr double s3 = 1.0 / 1680.0;
  constexpr double s4 = 1.0 / 1188.0;
  const double ln_sqrt_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  if (x <= 15.0) return std::lgamma(x + 1.0) - (x + 0.5) * std::log(x) + x - ln_sqrt_2pi;
  const double x2 = x * x;
  if (x > 500.0) return (s0 - s1 / x2) / x;
  if (x > 80.0) return (s0 - (s1 - s2 / x2) / x2) / x;
  if (x > 35.0) return (s0 - (s1 - (s2 - s3 / x2) / x2) / x2) / x;
  return (s0 - (s1 - (s2 - (s3 - s4 / x2) / x2) / x2) / x2) / x;
}

// x ln(x/m) + m - x, evaluated without cancellation when x ≈ m.
inline double deviance_term(double x, double m) {
  if (std::abs(x - m) < 0.1 * (x + m)) {
    const double v = (x - m) / (x + m);
    double s = (x - m) * v;
    double ej = 2.0 * x * v;
    const double v2 = v * v;
    for (int j = 1; j < 1000; ++j) {
      ej *= v2;
      const double next = s + ej / (2 * j + 1);
      if (next == s) return next;
      s = next;
    }
    return s;
  }
  return x * std::log(x / m) + m - x;
}

// ln[ x^a (1-x)^b / B(a,b) ] without the large cancellations of lgamma.
// `y` is 1 - x, supplied by the caller so it never has to be recomputed from a rounded x.
inline double log_beta_prefactor(double x, double y, double a, double b) {
  const double n = a + b;
  return -deviance_term(a, x * n) - deviance_term(b, y * n) +
         0.5 * std::log(a * b / (2.0 * std::numbers::pi * n)) +
         stirling_error(n) - stirling_error(a) - stirling_error(b);
}

// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_continued_fraction(double x, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 200000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  throw FitError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta function I_p(a, b).
inline double beta_cdf(double p, double a, double b) {
  if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("beta_cdf: p must lie in [0,1]");
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw ArgumentError("beta_cdf: shape parameters must be positive and finite");
  }
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  if (p < (a + 1.0) / (a + b + 2.0)) {
    const double front = std::exp(detail::log_beta_prefactor(p, 1.0 - p, a, b));
    return front * detail::beta_continued_fraction(p, a, b) / a;
  }
  const double front = std::exp(detail::log_beta_prefactor(1.0 - p, p, b, a));
  return 1.0 - front * detail::beta_continued_fraction(1.0 - p, b, a) / b;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Φ^{-1}(p): Acklam's rational approximation polished with one Newton step
/// on the erfc residual. The upper half is obtained by symmetry so that the
/// residual is always evaluated on a small, exactly representable tail mass.
inline double normal_inv_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ArgumentError("normal_inv_cdf: p must lie in (0,1)");
  if (p > 0.5) return -normal_inv_cdf(1.0 - p);

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double residual = normal_cdf(x) - p;
  return x - residual / normal_pdf(x);
}

/// Upper (1-alpha) quantile of the chi-squared distribution with one degree of freedom.
inline double chi2_1dof_quantile(double level) {
  detail::require(level > 0.0 && level < 1.0, "chi-squared level must lie in (0,1)");
  const double z = normal_inv_cdf(0.5 + 0.5 * level);
  return z * z;
}

/// Median of a non-empty sequence (mean of the two central values for even sizes).
inline double median(std::vector<double> values) {
  detail::require(!values.empty(), "median of an empty sequence");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

/// Linear-interpolation sample quantile (the usual "type 7" definition).
inline double interpolated_quantile(std::vector<double> values, double p) {
  detail::require(!values.empty(), "quantile of an empty sequence");
  detail::require(p >= 0.0 && p <= 1.0, "quantile level must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace rareq
