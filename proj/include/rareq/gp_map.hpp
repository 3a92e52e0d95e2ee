#pragma once

// Channel-distribution-information (CDI) maps: Gaussian-process regression of
// a per-location statistic θ̂ over space. The map turns a new location into a
// Gaussian prior N(μ(s), σ²(s)) for the local estimator.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "rareq/channel_sim.hpp"
#include "rareq/dataset_io.hpp"
#include "rareq/errors.hpp"
#include "rareq/optimize.hpp"
#include "rareq/stats_core.hpp"

namespace rareq {

struct CdiObservation {
  Location location;
  double theta_hat = 0.0;
};

struct GpHyperParams {
  double signal_variance = 1.0;
  double lengthscale_m = 10.0;
  double nugget = 0.0;
  double mean = 0.0;

  void validate() const {
    detail::require(signal_variance > 0.0 && std::isfinite(signal_variance), "signal variance must be positive");
    detail::require(lengthscale_m > 0.0 && std::isfinite(lengthscale_m), "lengthscale must be positive");
    detail::require(nugget >= 0.0 && std::isfinite(nugget), "nugget must be non-negative");
    detail::require(std::isfinite(mean), "mean must be finite");
  }
};

struct Prediction {
  double mu = 0.0;
  double sigma2 = 0.0;
};

namespace detail {

inline double squared_distance(const Location& a, const Location& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

/// Averages observations sharing identical coordinates. Returns the number of
/// observations folded into an earlier one.
inline std::size_t merge_duplicates(std::vector<CdiObservation>& obs) {
  std::map<std::tuple<double, double, double>, std::pair<std::size_t, int>> seen;
  std::vector<CdiObservation> merged;
  std::size_t folded = 0;
  for (const auto& o : obs) {
    const auto key = std::make_tuple(o.location.x, o.location.y, o.location.z);
    auto [it, inserted] = seen.try_emplace(key, merged.size(), 1);
    if (inserted) {
      merged.push_back(o);
    } else {
      auto& [idx, count] = it->second;
      auto& m = merged[idx];
      m.theta_hat = (m.theta_hat * count + o.theta_hat) / (count + 1);
      ++count;
      ++folded;
    }
  }
  obs = std::move(merged);
  return folded;
}

}  // namespace detail

/// A fitted, immutable GP map. Safe for concurrent predict() calls.
class CdiMap {
 public:
  /// Builds the predictive machinery for fixed hyperparameters. If the kernel
  /// matrix is numerically singular the nugget is raised by decades, up to
  /// 1e-2 of the signal variance, before giving up.
  static CdiMap from_hyper(std::vector<CdiObservation> obs, GpHyperParams hyper, bool log_domain) {
    hyper.validate();
    CdiMap map;
    map.duplicates_merged_ = detail::merge_duplicates(obs);
    detail::require(!obs.empty(), "a CDI map needs at least one observation");
    for (const auto& o : obs) detail::require(std::isfinite(o.theta_hat), "theta_hat must be finite");
    map.obs_ = std::move(obs);
    map.log_domain_ = log_domain;
    map.factorize(hyper);
    return map;
  }

  /// Maximum-likelihood fit. The signal variance is profiled out analytically,
  /// leaving a 2D multi-start search over (log lengthscale, log noise ratio).
  static CdiMap fit(std::vector<CdiObservation> obs, bool log_domain) {
    const auto folded = detail::merge_duplicates(obs);
    if (obs.size() < 2) throw ArgumentError("a CDI map needs observations at two or more distinct locations");
    for (const auto& o : obs) detail::require(std::isfinite(o.theta_hat), "theta_hat must be finite");

    const auto n = static_cast<Eigen::Index>(obs.size());
    double mean = 0.0;
    for (const auto& o : obs) mean += o.theta_hat;
    mean /= static_cast<double>(n);
    Eigen::VectorXd y(n);
    double spread = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      y(i) = obs[static_cast<std::size_t>(i)].theta_hat - mean;
      spread = std::max(spread, std::abs(y(i)));
    }

    Eigen::MatrixXd d2(n, n);
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        d2(i, j) = detail::squared_distance(obs[static_cast<std::size_t>(i)].location,
                                            obs[static_cast<std::size_t>(j)].location);
        if (i != j) dmin = std::min(dmin, d2(i, j));
        dmax = std::max(dmax, d2(i, j));
      }
    }
    dmin = std::sqrt(dmin);
    dmax = std::sqrt(dmax);

    GpHyperParams hyper;
    hyper.mean = mean;
    if (spread <= 1e-12 * std::max(1.0, std::abs(mean))) {
      // constant field: nothing to learn
      hyper.signal_variance = 1e-12 * std::max(1.0, mean * mean);
      hyper.lengthscale_m = dmax;
      hyper.nugget = 0.0;
      CdiMap map = from_hyper(std::move(obs), hyper, log_domain);
      map.duplicates_merged_ = folded;
      return map;
    }

    const double log_l_lo = std::log(0.1 * dmin);
    const double log_l_hi = std::log(10.0 * dmax);
    const double log_t_lo = std::log(1e-6);
    const double log_t_hi = std::log(1e2);
    auto objective = [&](const std::array<double, 2>& p) {
      if (p[0] < log_l_lo || p[0] > log_l_hi || p[1] < log_t_lo || p[1] > log_t_hi) {
        return std::numeric_limits<double>::infinity();
      }
      return concentrated_nll(d2, y, std::exp(p[0]), std::exp(p[1]));
    };

    optimize::Minimum<2> best;
    for (double lf : {0.02, 0.1, 0.3, 1.0}) {
      for (double tau : {0.01, 0.3}) {
        const std::array<double, 2> start{std::log(std::max(lf * dmax, 1.5 * dmin)), std::log(tau)};
        const auto m = optimize::nelder_mead<2>(objective, start, {0.7, 1.0}, {600, 1e-9, 1e-6});
        if (m.value < best.value) best = m;
      }
    }
    if (!std::isfinite(best.value)) throw FitError("GP marginal likelihood could not be evaluated at any start");

    const double ell = std::exp(best.x[0]);
    const double tau = std::exp(best.x[1]);
    const double s2 = profiled_signal_variance(d2, y, ell, tau);
    hyper.signal_variance = std::max(s2, 1e-300);
    hyper.lengthscale_m = ell;
    hyper.nugget = tau * hyper.signal_variance;
    CdiMap map = from_hyper(std::move(obs), hyper, log_domain);
    map.duplicates_merged_ = folded;
    return map;
  }

  [[nodiscard]] Prediction predict(const Location& loc) const {
    const auto n = static_cast<Eigen::Index>(obs_.size());
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k(i) = kernel(obs_[static_cast<std::size_t>(i)].location, loc);
    const double mu = hyper_.mean + k.dot(alpha_);
    const Eigen::VectorXd v = chol_.matrixL().solve(k);
    const double prior = hyper_.signal_variance + hyper_.nugget;
    const double sigma2 = std::clamp(prior - v.squaredNorm(), std::max(1e-14 * prior, 1e-300), prior);
    return {mu, sigma2};
  }

  [[nodiscard]] const GpHyperParams& hyper() const noexcept { return hyper_; }
  [[nodiscard]] const std::vector<CdiObservation>& observations() const noexcept { return obs_; }
  [[nodiscard]] bool log_domain() const noexcept { return log_domain_; }
  [[nodiscard]] std::size_t duplicates_merged() const noexcept { return duplicates_merged_; }
  /// Nugget actually used after any jitter escalation.
  [[nodiscard]] double effective_nugget() const noexcept { return hyper_.nugget; }

  void save(std::ostream& out) const {
    out << "[hyper]\n";
    out << "signal_variance = " << format_double(hyper_.signal_variance) << '\n';
    out << "lengthscale_m = " << format_double(hyper_.lengthscale_m) << '\n';
    out << "nugget = " << format_double(hyper_.nugget) << '\n';
    out << "mean = " << format_double(hyper_.mean) << '\n';
    out << "log_domain = " << (log_domain_ ? 1 : 0) << '\n';
    out << "[observations]\n";
    out << "location_id,x,y,z,theta_hat\n";
    for (const auto& o : obs_) {
      out << o.location.id << ',' << format_double(o.location.x) << ',' << format_double(o.location.y) << ','
          << format_double(o.location.z) << ',' << format_double(o.theta_hat) << '\n';
    }
  }

  static CdiMap load(std::istream& in) {
    std::string line;
    std::map<std::string, double> kv;
    bool in_obs = false;
    bool header_seen = false;
    std::vector<CdiObservation> obs;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line == "[hyper]") continue;
      if (line == "[observations]") {
        in_obs = true;
        continue;
      }
      if (!in_obs) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("map file line " + std::to_string(line_no) + ": expected key = value");
        auto trim = [](std::string s) {
          s.erase(0, s.find_first_not_of(" \t"));
          s.erase(s.find_last_not_of(" \t") + 1);
          return s;
        };
        kv[trim(line.substr(0, eq))] = detail::parse_double(trim(line.substr(eq + 1)), line_no);
        continue;
      }
      if (!header_seen) {
        if (line != "location_id,x,y,z,theta_hat") throw ConfigError("map file: bad observation header");
        header_seen = true;
        continue;
      }
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string field;
      while (std::getline(ss, field, ',')) f.push_back(field);
      if (f.size() != 5) throw ConfigError("map file line " + std::to_string(line_no) + ": expected 5 fields");
      obs.push_back({{static_cast<std::int64_t>(detail::parse_double(f[0], line_no)), detail::parse_double(f[1], line_no),
                      detail::parse_double(f[2], line_no), detail::parse_double(f[3], line_no)},
                     detail::parse_double(f[4], line_no)});
    }
    for (const char* key : {"signal_variance", "lengthscale_m", "nugget", "mean"}) {
      if (!kv.count(key)) throw ConfigError(std::string("map file: missing key ") + key);
    }
    GpHyperParams h{kv["signal_variance"], kv["lengthscale_m"], kv["nugget"], kv["mean"]};
    return from_hyper(std::move(obs), h, kv.count("log_domain") && kv["log_domain"] != 0.0);
  }

 private:
  CdiMap() = default;

  [[nodiscard]] double kernel(const Location& a, const Location& b) const {
    return hyper_.signal_variance *
           std::exp(-0.5 * detail::squared_distance(a, b) / (hyper_.lengthscale_m * hyper_.lengthscale_m));
  }

  void factorize(GpHyperParams hyper) {
    const auto n = static_cast<Eigen::Index>(obs_.size());
    const double max_nugget = std::max(hyper.nugget, 1e-2 * hyper.signal_variance);
    double nugget = hyper.nugget;
    double jitter = 1e-10 * hyper.signal_variance;
    while (true) {
      hyper_ = hyper;
      hyper_.nugget = nugget;
      Eigen::MatrixXd k(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
          k(i, j) = k(j, i) = kernel(obs_[static_cast<std::size_t>(i)].location, obs_[static_cast<std::size_t>(j)].location);
        }
        k(i, i) += nugget;
      }
      chol_.compute(k);
      if (chol_.info() == Eigen::Success && chol_.matrixLLT().diagonal().minCoeff() > 0.0) break;
      if (nugget >= max_nugget) throw FitError("GP kernel matrix is singular even with maximal nugget");
      nugget = std::min(std::max(nugget * 10.0, jitter), max_nugget);
      jitter *= 10.0;
    }
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = obs_[static_cast<std::size_t>(i)].theta_hat - hyper_.mean;
    alpha_ = chol_.solve(y);
  }

  static std::optional<Eigen::LLT<Eigen::MatrixXd>> correlation_factor(const Eigen::MatrixXd& d2, double ell,
                                                                     double tau) {
    const Eigen::MatrixXd r = (d2.array() * (-0.5 / (ell * ell))).exp().matrix() +
                              tau * Eigen::MatrixXd::Identity(d2.rows(), d2.cols());
    Eigen::LLT<Eigen::MatrixXd> llt(r);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0)) return std::nullopt;
    return llt;
  }

  static double profiled_signal_variance(const Eigen::MatrixXd& d2, const Eigen::VectorXd& y, double ell, double tau) {
    const auto llt = correlation_factor(d2, ell, tau);
    if (!llt) return std::numeric_limits<double>::quiet_NaN();
    return y.dot(llt->solve(y)) / static_cast<double>(y.size());
  }

  /// Negative log marginal likelihood with σ² at its closed-form maximizer
  /// yᵀR⁻¹y/n, up to an additive constant.
  static double concentrated_nll(const Eigen::MatrixXd& d2, const Eigen::VectorXd& y, double ell, double tau) {
    const auto llt = correlation_factor(d2, ell, tau);
    if (!llt) return std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(y.size());
    const double quad = y.dot(llt->solve(y));
    if (!(quad > 0.0)) return std::numeric_limits<double>::infinity();
    const double logdet = 2.0 * llt->matrixLLT().diagonal().array().log().sum();
    return 0.5 * n * std::log(quad / n) + 0.5 * logdet;
  }

  std::vector<CdiObservation> obs_;
  GpHyperParams hyper_;
  bool log_domain_ = false;
  std::size_t duplicates_merged_ = 0;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
};

inline CdiMap fit_cdi_map(std::vector<CdiObservation> obs, bool log_domain) {
  return CdiMap::fit(std::move(obs), log_domain);
}

/// θ̂ for the quantile map: the log of the empirical ε-quantile.
inline double estimate_theta_quantile(const SampleSet& s, double epsilon) {
  return std::log(empirical_quantile(s, epsilon));
}

inline std::size_t spacing_bandwidth(std::size_t n, double epsilon) {
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n) * epsilon * (1.0 - epsilon))));
}

/// Density of Y = ln X at its ε-quantile from symmetric order-statistic
/// spacings: f̂ = (2k/n) / (Y_(r+k) − Y_(r−k)), r = ⌈nε⌉. Near the sample edge
/// the window slides inward; ties widen it. Clamped to [1e-6, 1e6].
inline double estimate_theta_density(const SampleSet& s, double epsilon) {
  detail::require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0,1)");
  const std::size_t n = s.size();
  const std::size_t r = std::max<std::size_t>(1, ceil_rank(n, epsilon));
  std::size_t k = std::max<std::size_t>(1, spacing_bandwidth(n, epsilon));
  if (n < 2 * k + 1) throw InsufficientSamples("too few samples for a spacing density estimate");
  const auto sorted = s.sorted();
  while (2 * k + 1 <= n) {
    std::size_t lo = r > k ? r - k : 1;
    std::size_t hi = lo + 2 * k;
    if (hi > n) {
      hi = n;
      lo = n - 2 * k;
    }
    const double gap = std::log(sorted[hi - 1]) - std::log(sorted[lo - 1]);
    if (gap > 0.0) {
      const double f = (2.0 * static_cast<double>(k) / static_cast<double>(n)) / gap;
      return std::clamp(f, 1e-6, 1e6);
    }
    ++k;
  }
  throw FitError("all samples around the quantile are tied; density cannot be estimated");
}

}  // namespace rareq
