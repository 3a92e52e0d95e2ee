#pragma once

// Synthetic single-cell scenario: a regular grid of user positions, spatially
// correlated large-scale parameters, a K-path narrowband channel per location
// with i.i.d. uniform phases, and capacity samples C = log2(1 + |h|^2 / BN0).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "rareq/errors.hpp"
#include "rareq/rng.hpp"
#include "rareq/stats_core.hpp"

namespace rareq {

struct Location {
  std::int64_t id = -1;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline double distance(const Location& a, const Location& b) {
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

struct MultipathProfile {
  std::vector<double> magnitudes;  // per-path amplitude a_k, sqrt(W)

  [[nodiscard]] double total_power() const {
    double p = 0.0;
    for (double a : magnitudes) p += a * a;
    return p;
  }
};

struct CellBounds {
  double x_min = -50.0;
  double x_max = 50.0;
  double y_min = -50.0;
  double y_max = 50.0;

  [[nodiscard]] double width() const { return x_max - x_min; }
  [[nodiscard]] double height() const { return y_max - y_min; }
};

/// Thomas cluster process: Poisson parents, Poisson offspring counts, Gaussian scatter.
struct ThomasParams {
  double parent_intensity = 1e-3;  // parents per m^2
  double offspring_mean = 20.0;
  double offspring_sigma_m = 8.0;
  int max_rounds = 100000;
};

struct ScenarioConfig {
  CellBounds cell;
  Location bs{-1, -50.0, 0.0, 10.0};
  double user_height_m = 1.5;
  double grid_step_m = 2.0;
  int num_paths = 20;
  double noise_power_dbm = -90.0;
  double tx_power_dbm = 0.0;
  double pathloss_ref_db = 38.0;  // loss at 1 m
  double pathloss_exponent = 2.0;
  double shadowing_sigma_db = 4.0;
  double decorrelation_m = 15.0;
  double rice_k_db = 6.0;
  double rice_k_sigma_db = 3.0;  // spatial spread of the Rice factor
  double path_decay = 5.0;       // e-folding of the scattered-path power profile, in paths
  ThomasParams thomas;
  std::uint64_t master_seed = 1;

  void validate() const {
    detail::require(grid_step_m > 0.0, "grid step must be positive");
    detail::require(num_paths >= 1, "at least one multipath component is required");
    detail::require(std::isfinite(noise_power_dbm), "noise power must be finite");
    detail::require(path_decay > 0.0, "path decay must be positive");
    detail::require(decorrelation_m > 0.0, "decorrelation distance must be positive");
    detail::require(shadowing_sigma_db >= 0.0 && rice_k_sigma_db >= 0.0, "field spreads must be non-negative");
  }
};

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

namespace detail {

inline std::size_t grid_count(double extent, double step) {
  return static_cast<std::size_t>(std::floor(extent / step + 1e-9)) + 1;
}

}  // namespace detail

/// Row-major grid (x fastest) covering the cell, edges inclusive.
inline std::vector<Location> build_grid(const ScenarioConfig& cfg) {
  const auto& c = cfg.cell;
  detail::require(cfg.grid_step_m > 0.0, "grid step must be positive");
  detail::require(c.width() >= 0.0 && c.height() >= 0.0, "cell bounds are inverted");
  detail::require((c.width() > 0.0) == (c.height() > 0.0), "cell may degenerate only to a single point");
  const auto nx = detail::grid_count(c.width(), cfg.grid_step_m);
  const auto ny = detail::grid_count(c.height(), cfg.grid_step_m);
  std::vector<Location> grid;
  grid.reserve(nx * ny);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      grid.push_back({static_cast<std::int64_t>(grid.size()), c.x_min + static_cast<double>(ix) * cfg.grid_step_m,
                      c.y_min + static_cast<double>(iy) * cfg.grid_step_m, cfg.user_height_m});
    }
  }
  return grid;
}

/// Zero-mean, unit-variance Gaussian field on an nx-by-ny grid with separable
/// exponential correlation exp(-|dx|/D) exp(-|dy|/D): AR(1) filtering along
/// each axis is exact for this kernel.
inline std::vector<double> separable_exponential_field(std::size_t nx, std::size_t ny, double step,
                                                       double decorrelation, Rng& rng) {
  std::vector<double> f(nx * ny);
  for (auto& v : f) v = standard_normal(rng);
  const double rho = std::exp(-step / decorrelation);
  const double innov = std::sqrt(1.0 - rho * rho);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 1; ix < nx; ++ix) {
      f[iy * nx + ix] = rho * f[iy * nx + ix - 1] + innov * f[iy * nx + ix];
    }
  }
  for (std::size_t iy = 1; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      f[iy * nx + ix] = rho * f[(iy - 1) * nx + ix] + innov * f[iy * nx + ix];
    }
  }
  return f;
}

/// A fully generated scenario: grid plus large-scale fields. Immutable.
class Scenario {
 public:
  explicit Scenario(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    grid_ = build_grid(cfg_);
    nx_ = detail::grid_count(cfg_.cell.width(), cfg_.grid_step_m);
    ny_ = detail::grid_count(cfg_.cell.height(), cfg_.grid_step_m);
    auto shadow_rng = make_rng(cfg_.master_seed, StreamTag::shadowing);
    shadowing_db_ = separable_exponential_field(nx_, ny_, cfg_.grid_step_m, cfg_.decorrelation_m, shadow_rng);
    for (auto& v : shadowing_db_) v *= cfg_.shadowing_sigma_db;
    auto rice_rng = make_rng(cfg_.master_seed, StreamTag::rice);
    rice_dev_db_ = separable_exponential_field(nx_, ny_, cfg_.grid_step_m, cfg_.decorrelation_m, rice_rng);
    for (auto& v : rice_dev_db_) v *= cfg_.rice_k_sigma_db;
  }

  [[nodiscard]] const ScenarioConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] std::span<const Location> grid() const noexcept { return grid_; }
  [[nodiscard]] double noise_power_w() const { return dbm_to_watts(cfg_.noise_power_dbm); }

  [[nodiscard]] bool contains(const Location& loc) const noexcept {
    constexpr double tol = 1e-9;
    const auto& c = cfg_.cell;
    return std::isfinite(loc.x) && std::isfinite(loc.y) && loc.x >= c.x_min - tol && loc.x <= c.x_max + tol &&
           loc.y >= c.y_min - tol && loc.y <= c.y_max + tol;
  }

  [[nodiscard]] std::size_t nearest_grid_index(const Location& loc) const {
    auto snap = [&](double v, double lo, std::size_t count) {
      const double k = std::round((v - lo) / cfg_.grid_step_m);
      return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(count - 1)));
    };
    return snap(loc.y, cfg_.cell.y_min, ny_) * nx_ + snap(loc.x, cfg_.cell.x_min, nx_);
  }

  [[nodiscard]] double shadowing_db(const Location& loc) const { return shadowing_db_[nearest_grid_index(loc)]; }
  [[nodiscard]] double rice_k_db(const Location& loc) const {
    return cfg_.rice_k_db + rice_dev_db_[nearest_grid_index(loc)];
  }

  /// Log-distance path loss plus shadowing, in dBm.
  [[nodiscard]] double mean_received_power_dbm(const Location& loc) const {
    const double dist = std::max(distance(loc, cfg_.bs), 1.0);
    return cfg_.tx_power_dbm - cfg_.pathloss_ref_db - 10.0 * cfg_.pathloss_exponent * std::log10(dist) +
           shadowing_db(loc);
  }

 private:
  ScenarioConfig cfg_;
  std::vector<Location> grid_;
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<double> shadowing_db_;
  std::vector<double> rice_dev_db_;
};

/// Per-path amplitudes at `loc`. The line-of-sight path carries κ/(κ+1) of the
/// received power; the rest is spread over the K-1 scattered paths with
/// exponentially decaying mean power and exponential per-path variation.
/// Deterministic in (master_seed, loc.id).
inline MultipathProfile synthesize_profile(const Scenario& scenario, const Location& loc) {
  if (!scenario.contains(loc)) throw ArgumentError("location lies outside the cell");
  const auto& cfg = scenario.config();
  const double power = dbm_to_watts(scenario.mean_received_power_dbm(loc));
  const auto k_paths = static_cast<std::size_t>(cfg.num_paths);
  MultipathProfile profile;
  profile.magnitudes.assign(k_paths, 0.0);
  if (k_paths == 1) {
    profile.magnitudes[0] = std::sqrt(power);
    return profile;
  }
  const double kappa = std::pow(10.0, scenario.rice_k_db(loc) / 10.0);
  const double los_fraction = std::isfinite(kappa) ? kappa / (kappa + 1.0) : 1.0;
  auto rng = make_rng(cfg.master_seed, StreamTag::profile, {static_cast<std::uint64_t>(loc.id)});
  std::vector<double> weights(k_paths - 1);
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] = std::exp(-static_cast<double>(k) / cfg.path_decay) * exponential1(rng);
    total += weights[k];
  }
  profile.magnitudes[0] = std::sqrt(los_fraction * power);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    profile.magnitudes[k + 1] = std::sqrt((1.0 - los_fraction) * power * weights[k] / total);
  }
  return profile;
}

/// Fills `out` with i.i.d. capacity draws. Returns how many draws had to be
/// clamped up to the smallest positive normal double (|h| numerically zero).
inline std::size_t fill_capacity_samples(const MultipathProfile& profile, double noise_power_w, Rng& rng,
                                         std::span<double> out) {
  detail::require(noise_power_w > 0.0, "noise power must be positive");
  detail::require(!profile.magnitudes.empty(), "profile has no paths");
  const double inv_noise = 1.0 / noise_power_w;
  constexpr double floor = std::numeric_limits<double>::min();
  std::size_t clamped = 0;
  for (double& c : out) {
    double re = 0.0;
    double im = 0.0;
    for (double a : profile.magnitudes) {
      const double theta = std::numbers::pi * (2.0 * uniform01(rng) - 1.0);
      re += a * std::cos(theta);
      im += a * std::sin(theta);
    }
    c = std::log1p((re * re + im * im) * inv_noise) / std::numbers::ln2;
    if (!(c >= floor)) {
      c = floor;
      ++clamped;
    }
  }
  return clamped;
}

inline SampleSet draw_capacity_samples(const MultipathProfile& profile, double noise_power_w, std::size_t n,
                                       Rng& rng) {
  detail::require(n >= 1, "at least one capacity sample must be drawn");
  std::vector<double> values(n);
  fill_capacity_samples(profile, noise_power_w, rng, values);
  return SampleSet(std::move(values));
}

struct QuantileEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Large sorted sample of the channel used as ground truth: its empirical
/// ε-quantile stands in for C_ε and its ECDF for the outage probability.
class ReferenceSample {
 public:
  explicit ReferenceSample(SampleSet samples) : samples_(std::move(samples)) {
    detail::require(!samples_.empty(), "reference sample is empty");
  }

  static ReferenceSample draw(const MultipathProfile& profile, double noise_power_w, std::size_t n_ref, Rng& rng) {
    return ReferenceSample(draw_capacity_samples(profile, noise_power_w, n_ref, rng));
  }

  [[nodiscard]] std::size_t size() const noexcept { return samples_.size(); }
  [[nodiscard]] const SampleSet& samples() const noexcept { return samples_; }

  [[nodiscard]] double quantile(double epsilon) const { return empirical_quantile(samples_, epsilon); }

  /// Distribution-free standard error of the ε-quantile: half the spread of
  /// the order statistics one binomial standard deviation either side.
  [[nodiscard]] double standard_error(double epsilon) const {
    const auto n = samples_.size();
    const auto r = static_cast<double>(std::max<std::size_t>(1, ceil_rank(n, epsilon)));
    const double k = std::sqrt(static_cast<double>(n) * epsilon * (1.0 - epsilon));
    const auto lo = static_cast<std::size_t>(std::clamp(std::floor(r - k), 1.0, static_cast<double>(n)));
    const auto hi = static_cast<std::size_t>(std::clamp(std::ceil(r + k), 1.0, static_cast<double>(n)));
    const auto sorted = samples_.sorted();
    return 0.5 * (sorted[hi - 1] - sorted[lo - 1]);
  }

  /// Fraction of reference draws strictly below `rate`.
  [[nodiscard]] double outage(double rate) const {
    const auto sorted = samples_.sorted();
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), rate) - sorted.begin();
    return static_cast<double>(below) / static_cast<double>(sorted.size());
  }

 private:
  SampleSet samples_;
};

inline QuantileEstimate ground_truth_quantile(const MultipathProfile& profile, double noise_power_w, double epsilon,
                                              std::size_t n_ref, Rng& rng) {
  detail::require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0,1)");
  if (static_cast<double>(n_ref) * epsilon < 100.0) {
    throw ArgumentError("n_ref * epsilon must be at least 100 for a usable reference quantile");
  }
  const auto ref = ReferenceSample::draw(profile, noise_power_w, n_ref, rng);
  return {ref.quantile(epsilon), ref.standard_error(epsilon)};
}

struct LocationSplit {
  std::vector<Location> train;
  std::vector<Location> test;
};

/// Draws `train_count + test_count` distinct grid locations from a Thomas
/// cluster process restricted to the cell. Offspring falling outside the cell
/// are discarded; the rest snap to the nearest grid point not yet taken. The
/// selection is shuffled before being split so both sets follow the same law.
inline LocationSplit sample_locations_thomas(const ScenarioConfig& cfg, std::span<const Location> grid,
                                             std::size_t train_count, std::size_t test_count, Rng& rng) {
  const std::size_t total = train_count + test_count;
  detail::require(total <= grid.size(), "more locations requested than grid points");
  const auto& tp = cfg.thomas;
  const auto& cell = cfg.cell;
  detail::require(tp.parent_intensity > 0.0 && tp.offspring_mean > 0.0, "Thomas intensities must be positive");
  detail::require(tp.offspring_sigma_m >= 0.0, "offspring spread must be non-negative");

  std::vector<bool> used(grid.size(), false);
  std::vector<std::size_t> chosen;
  chosen.reserve(total);
  const double area = std::max(cell.width() * cell.height(), 1e-12);
  std::poisson_distribution<int> parents_dist(tp.parent_intensity * area);
  std::poisson_distribution<int> offspring_dist(tp.offspring_mean);

  auto snap = [&](double x, double y) {
    std::size_t best = grid.size();
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (used[i]) continue;
      const double d2 = (grid[i].x - x) * (grid[i].x - x) + (grid[i].y - y) * (grid[i].y - y);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    return best;
  };

  for (int round = 0; chosen.size() < total; ++round) {
    if (round >= tp.max_rounds) {
      throw FitError("Thomas process could not place enough distinct locations");
    }
    const int parents = parents_dist(rng);
    for (int p = 0; p < parents && chosen.size() < total; ++p) {
      const double px = cell.x_min + uniform01(rng) * cell.width();
      const double py = cell.y_min + uniform01(rng) * cell.height();
      const int kids = offspring_dist(rng);
      for (int k = 0; k < kids && chosen.size() < total; ++k) {
        const double x = px + tp.offspring_sigma_m * standard_normal(rng);
        const double y = py + tp.offspring_sigma_m * standard_normal(rng);
        if (x < cell.x_min || x > cell.x_max || y < cell.y_min || y > cell.y_max) continue;
        const auto idx = snap(x, y);
        used[idx] = true;
        chosen.push_back(idx);
      }
    }
  }

  for (std::size_t i = chosen.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(chosen[i - 1], chosen[std::min(j, i - 1)]);
  }
  LocationSplit split;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    (i < train_count ? split.train : split.test).push_back(grid[chosen[i]]);
  }
  return split;
}

/// Uniform selection without replacement, used for measured datasets.
inline LocationSplit sample_locations_uniform(std::span<const Location> pool, std::size_t train_count,
                                              std::size_t test_count, Rng& rng) {
  detail::require(train_count + test_count <= pool.size(), "more locations requested than available");
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
  }
  LocationSplit split;
  for (std::size_t i = 0; i < train_count + test_count; ++i) {
    (i < train_count ? split.train : split.test).push_back(pool[idx[i]]);
  }
  return split;
}

}  // namespace rareq
