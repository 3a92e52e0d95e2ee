#pragma once

// Rate-selection benchmark. Each redraw samples d training and d_test test
// locations, fits the three CDI maps (ln C_ε, ξ, ln f_Y) from m samples per
// training location, then runs every enabled estimator at each test location
// for each n in the sweep. The rate is the lower confidence bound; outage and
// normalized throughput are scored against a large reference sample.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "rareq/baselines.hpp"
#include "rareq/bayes_evt.hpp"
#include "rareq/bayes_nonpar.hpp"
#include "rareq/channel_sim.hpp"
#include "rareq/config.hpp"
#include "rareq/dataset_io.hpp"
#include "rareq/errors.hpp"
#include "rareq/evt_core.hpp"
#include "rareq/gp_map.hpp"
#include "rareq/rng.hpp"
#include "rareq/stats_core.hpp"

namespace rareq {

// ---- metrics ---------------------------------------------------------------

inline double select_rate(const ConfidenceInterval& interval) {
  detail::require(interval.sided == Sided::one, "rate selection needs a one-sided interval");
  return std::isfinite(interval.lower) ? std::max(interval.lower, 0.0) : 0.0;
}

/// Fraction of `n_ref` fresh capacity draws strictly below `rate`.
inline double eval_outage(const MultipathProfile& profile, double noise_power_w, double rate, std::size_t n_ref,
                          double epsilon, Rng& rng) {
  detail::require(static_cast<double>(n_ref) * epsilon >= 10.0, "n_ref must be at least 10/epsilon");
  if (!(rate > 0.0)) return 0.0;
  std::vector<double> chunk(std::min<std::size_t>(n_ref, 1 << 16));
  std::size_t below = 0;
  for (std::size_t done = 0; done < n_ref;) {
    const std::size_t k = std::min(chunk.size(), n_ref - done);
    fill_capacity_samples(profile, noise_power_w, rng, std::span<double>(chunk.data(), k));
    for (std::size_t i = 0; i < k; ++i) below += chunk[i] < rate;
    done += k;
  }
  return static_cast<double>(below) / static_cast<double>(n_ref);
}

inline double normalized_throughput(double rate, double p_out, double c_eps, double epsilon) {
  detail::require(c_eps > 0.0, "outage capacity must be positive");
  return rate * (1.0 - p_out) / (c_eps * (1.0 - epsilon));
}

struct MethodResult {
  std::size_t redraw = 0;
  long location_id = 0;
  std::size_t n = 0;
  Method method = Method::bayes_nonpar;
  double rate = 0.0;
  double p_out = 0.0;
  double throughput_norm = 0.0;
  double c_eps_truth = 0.0;
  std::string flag;
};

inline double meta_probability(std::span<const MethodResult> results, double epsilon) {
  detail::require(!results.empty(), "meta-probability of an empty result set");
  std::size_t ok = 0;
  for (const auto& r : results) ok += r.p_out <= epsilon;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

// ---- results CSV -----------------------------------------------------------

inline constexpr const char* kResultsHeader = "redraw,location_id,n,method,rate,p_out,throughput_norm,c_eps_truth,flag";

inline void write_result_row(std::ostream& out, const MethodResult& r) {
  out << r.redraw << ',' << r.location_id << ',' << r.n << ',' << to_string(r.method) << ',' << format_double(r.rate)
      << ',' << format_double(r.p_out) << ',' << format_double(r.throughput_norm) << ','
      << format_double(r.c_eps_truth) << ',' << r.flag << '\n';
}

inline std::vector<MethodResult> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kResultsHeader) {
    throw ConfigError("results CSV: unexpected header");
  }
  std::vector<MethodResult> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() == 8 && !line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 9) throw ConfigError("results CSV line " + std::to_string(line_no) + ": expected 9 fields");
    MethodResult r;
    r.redraw = static_cast<std::size_t>(detail::parse_double(f[0], line_no));
    r.location_id = static_cast<long>(detail::parse_double(f[1], line_no));
    r.n = static_cast<std::size_t>(detail::parse_double(f[2], line_no));
    r.method = parse_method(f[3]);
    r.rate = detail::parse_double(f[4], line_no);
    r.p_out = detail::parse_double(f[5], line_no);
    r.throughput_norm = detail::parse_double(f[6], line_no);
    r.c_eps_truth = detail::parse_double(f[7], line_no);
    r.flag = detail::trim(f[8]);
    out.push_back(std::move(r));
  }
  return out;
}

struct AggregateRow {
  Method method = Method::bayes_nonpar;
  std::size_t n = 0;
  std::size_t count = 0;
  double meta_probability = 0.0;
  double meta_se = 0.0;  // binomial Monte Carlo standard error
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
  double median_rate = 0.0;
  std::size_t flagged = 0;
};

inline constexpr const char* kAggregateHeader =
    "method,n,count,meta_probability,meta_se,throughput_q1,throughput_q2,throughput_q3,median_rate,flagged";

/// One row per (method, n), in method order then ascending n.
inline std::vector<AggregateRow> aggregate(std::span<const MethodResult> results, double epsilon) {
  std::vector<AggregateRow> rows;
  for (auto method : kAllMethods) {
    std::vector<std::size_t> ns;
    for (const auto& r : results) {
      if (r.method == method) ns.push_back(r.n);
    }
    std::sort(ns.begin(), ns.end());
    ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
    for (auto n : ns) {
      std::vector<MethodResult> group;
      std::vector<double> thr, rate;
      AggregateRow row{method, n};
      for (const auto& r : results) {
        if (r.method != method || r.n != n) continue;
        group.push_back(r);
        thr.push_back(r.throughput_norm);
        rate.push_back(r.rate);
        row.flagged += !r.flag.empty();
      }
      row.count = group.size();
      row.meta_probability = meta_probability(group, epsilon);
      row.meta_se = std::sqrt(row.meta_probability * (1.0 - row.meta_probability) / static_cast<double>(row.count));
      row.q1 = interpolated_quantile(thr, 0.25);
      row.q2 = interpolated_quantile(thr, 0.5);
      row.q3 = interpolated_quantile(thr, 0.75);
      row.median_rate = median(rate);
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_aggregate_csv(std::ostream& out, std::span<const AggregateRow> rows) {
  out << kAggregateHeader << '\n';
  for (const auto& a : rows) {
    out << to_string(a.method) << ',' << a.n << ',' << a.count << ',' << format_double(a.meta_probability) << ','
        << format_double(a.meta_se) << ',' << format_double(a.q1) << ',' << format_double(a.q2) << ','
        << format_double(a.q3) << ',' << format_double(a.median_rate) << ',' << a.flagged << '\n';
  }
}

/// Empirical CDF of one result column per (method, n): rows
/// `method,n,value,ecdf` with ecdf = i/N at the i-th smallest value.
inline void write_ecdf_csv(std::ostream& out, std::span<const MethodResult> results, const std::string& column) {
  double MethodResult::*field = nullptr;
  if (column == "p_out") field = &MethodResult::p_out;
  if (column == "throughput_norm") field = &MethodResult::throughput_norm;
  if (column == "rate") field = &MethodResult::rate;
  if (field == nullptr) throw ConfigError("ecdf: unknown column '" + column + "'");
  out << "method,n," << column << ",ecdf\n";
  for (const auto& a : aggregate(results, 0.5)) {
    std::vector<double> v;
    for (const auto& r : results) {
      if (r.method == a.method && r.n == a.n) v.push_back(r.*field);
    }
    std::sort(v.begin(), v.end());
    for (std::size_t i = 0; i < v.size(); ++i) {
      out << to_string(a.method) << ',' << a.n << ',' << format_double(v[i]) << ','
          << format_double(static_cast<double>(i + 1) / static_cast<double>(v.size())) << '\n';
    }
  }
}

// ---- channel sources ---------------------------------------------------------

/// Local samples at a test location (as many as the largest n) and the
/// reference sample that defines its ground truth.
struct TestSite {
  SampleSet local;
  ReferenceSample reference;
};

class ChannelSource {
 public:
  virtual ~ChannelSource() = default;
  [[nodiscard]] virtual LocationSplit split(std::size_t redraw, std::size_t d, std::size_t d_test) const = 0;
  [[nodiscard]] virtual SampleSet training_samples(const Location& loc, std::size_t redraw, std::size_t m) const = 0;
  [[nodiscard]] virtual TestSite test_site(const Location& loc, std::size_t redraw, std::size_t n_max,
                                           std::size_t n_ref) const = 0;
};

/// The synthetic multipath channel over a Thomas-clustered grid.
class SyntheticSource final : public ChannelSource {
 public:
  explicit SyntheticSource(const ScenarioConfig& cfg) : scenario_(cfg) {}

  [[nodiscard]] const Scenario& scenario() const noexcept { return scenario_; }

  [[nodiscard]] LocationSplit split(std::size_t redraw, std::size_t d, std::size_t d_test) const override {
    auto rng = make_rng(seed(), StreamTag::locations, {redraw});
    return sample_locations_thomas(scenario_.config(), scenario_.grid(), d, d_test, rng);
  }

  [[nodiscard]] SampleSet training_samples(const Location& loc, std::size_t redraw, std::size_t m) const override {
    auto rng = make_rng(seed(), StreamTag::training, {redraw, id(loc)});
    return draw_capacity_samples(synthesize_profile(scenario_, loc), scenario_.noise_power_w(), m, rng);
  }

  [[nodiscard]] TestSite test_site(const Location& loc, std::size_t redraw, std::size_t n_max,
                                   std::size_t n_ref) const override {
    const auto profile = synthesize_profile(scenario_, loc);
    auto local_rng = make_rng(seed(), StreamTag::local, {redraw, id(loc)});
    auto ref_rng = make_rng(seed(), StreamTag::reference, {redraw, id(loc)});
    SampleSet local = n_max == 0 ? SampleSet() : draw_capacity_samples(profile, scenario_.noise_power_w(), n_max, local_rng);
    return {std::move(local), ReferenceSample::draw(profile, scenario_.noise_power_w(), n_ref, ref_rng)};
  }

 private:
  [[nodiscard]] std::uint64_t seed() const { return scenario_.config().master_seed; }
  static std::uint64_t id(const Location& loc) { return static_cast<std::uint64_t>(loc.id); }

  Scenario scenario_;
};

/// Measured samples per location. Each redraw shuffles every location's
/// samples; the first m form the dataset (training data, or the local samples
/// at a test location) and the remainder the reference sample.
class DatasetSource final : public ChannelSource {
 public:
  DatasetSource(std::vector<LocationSamples> data, std::uint64_t seed, std::size_t m)
      : data_(std::move(data)), seed_(seed), m_(m) {
    if (data_.empty()) throw ConfigError("dataset has no locations");
    for (const auto& d : data_) {
      if (d.samples.size() <= m_) {
        throw ConfigError("dataset location " + std::to_string(d.location.id) + " has " +
                          std::to_string(d.samples.size()) + " samples; need more than m = " + std::to_string(m_));
      }
    }
  }

  [[nodiscard]] LocationSplit split(std::size_t redraw, std::size_t d, std::size_t d_test) const override {
    std::vector<Location> pool;
    for (const auto& x : data_) pool.push_back(x.location);
    auto rng = make_rng(seed_, StreamTag::split, {redraw});
    return sample_locations_uniform(pool, d, d_test, rng);
  }

  [[nodiscard]] SampleSet training_samples(const Location& loc, std::size_t redraw, std::size_t m) const override {
    detail::require(m == m_, "dataset source was built for a different m");
    auto v = shuffled(loc, redraw);
    v.resize(m_);
    return SampleSet(std::move(v));
  }

  [[nodiscard]] TestSite test_site(const Location& loc, std::size_t redraw, std::size_t n_max,
                                   std::size_t /*n_ref*/) const override {
    if (n_max > m_) throw ConfigError("largest n exceeds the per-location dataset size m");
    auto v = shuffled(loc, redraw);
    std::vector<double> ref(v.begin() + static_cast<std::ptrdiff_t>(m_), v.end());
    v.resize(n_max);
    return {n_max == 0 ? SampleSet() : SampleSet(std::move(v)), ReferenceSample(SampleSet(std::move(ref)))};
  }

 private:
  [[nodiscard]] std::vector<double> shuffled(const Location& loc, std::size_t redraw) const {
    const auto it = std::find_if(data_.begin(), data_.end(), [&](const auto& x) { return x.location.id == loc.id; });
    if (it == data_.end()) throw ArgumentError("location not in dataset");
    const auto src = it->samples.values();
    std::vector<double> v(src.begin(), src.end());
    auto rng = make_rng(seed_, StreamTag::split, {redraw, static_cast<std::uint64_t>(loc.id) + 1});
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
      std::swap(v[i - 1], v[std::min(j, i - 1)]);
    }
    return v;
  }

  std::vector<LocationSamples> data_;
  std::uint64_t seed_;
  std::size_t m_;
};

inline std::unique_ptr<ChannelSource> make_source(const ExperimentConfig& cfg) {
  if (cfg.dataset_path.empty()) return std::make_unique<SyntheticSource>(cfg.scenario);
  std::ifstream in(cfg.dataset_path);
  if (!in) throw ConfigError("cannot open dataset '" + cfg.dataset_path + "'");
  return std::make_unique<DatasetSource>(read_dataset_csv(in), cfg.scenario.master_seed, cfg.m);
}

// ---- parallel helper ---------------------------------------------------------

/// Runs fn(0..count-1) on up to `threads` workers. Each index writes only its
/// own output slot, so results do not depend on scheduling. The first failure
/// in index order is rethrown after all workers finish.
template <class F>
void parallel_for(std::size_t count, std::size_t threads, F&& fn) {
  std::vector<std::exception_ptr> errors(count);
  auto body = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, count); ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) body(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---- maps from training data -------------------------------------------------

struct TrainingSummary {
  Location location;
  double log_c_eps = 0.0;
  std::optional<double> xi;
  std::optional<double> log_density;
};

inline TrainingSummary summarize_training(const Location& loc, const SampleSet& s, const QuantileSpec& spec, double zeta,
                                          std::size_t r_min) {
  TrainingSummary t{loc, estimate_theta_quantile(s, spec.epsilon), std::nullopt, std::nullopt};
  try {
    const auto thr = select_threshold(s, zeta, r_min);
    t.xi = fit_gpd_mle(compute_deficits(s, thr.u)).xi;
  } catch (const std::exception&) {
  }
  try {
    t.log_density = std::log(estimate_theta_density(s, spec.epsilon));
  } catch (const std::exception&) {
  }
  return t;
}

struct CdiMaps {
  CdiMap x_eps;    // ln C_ε
  CdiMap xi;       // GPD shape
  CdiMap density;  // ln f_Y(Y_ε)
};

inline CdiMaps fit_maps(std::span<const TrainingSummary> training) {
  std::vector<CdiObservation> x, xi, f;
  for (const auto& t : training) {
    x.push_back({t.location, t.log_c_eps});
    if (t.xi) xi.push_back({t.location, *t.xi});
    if (t.log_density) f.push_back({t.location, *t.log_density});
  }
  return {fit_cdi_map(std::move(x), true), fit_cdi_map(std::move(xi), false), fit_cdi_map(std::move(f), true)};
}

// ---- one test location ---------------------------------------------------------

namespace detail {

inline std::string csv_safe(std::string s) {
  for (auto& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

inline void add_flag(std::string& flags, const std::string& f) {
  if (f.empty()) return;
  flags += (flags.empty() ? "" : "|") + f;
}

}  // namespace detail

inline std::vector<MethodResult> evaluate_site(const ExperimentConfig& cfg, const CdiMaps& maps, const Location& loc,
                                               const TestSite& site, std::size_t redraw) {
  const double eps = cfg.spec.epsilon;
  const double truth = site.reference.quantile(eps);
  std::vector<MethodResult> out;
  for (auto n : cfg.n_sweep) {
    const SampleSet local = n == 0 ? SampleSet() : site.local.prefix(n);
    for (auto method : cfg.methods) {
      MethodResult r{redraw, loc.id, n, method, 0.0, 0.0, 0.0, truth, {}};
      try {
        ConfidenceInterval iv;
        std::string flag;
        switch (method) {
          case Method::bayes_nonpar: {
            const auto p = maps.x_eps.predict(loc);
            const auto res = infer_nonpar_bayes({p.mu, p.sigma2}, local, cfg.spec, maps.density, loc);
            iv = res.interval;
            if (res.prior_only) detail::add_flag(flag, "prior_only");
            if (res.density_floored) detail::add_flag(flag, "density_floored");
            break;
          }
          case Method::bayes_evt: {
            auto mc = cfg.mcmc;
            mc.seed = derive_seed(cfg.scenario.master_seed, StreamTag::mcmc,
                                  {redraw, static_cast<std::uint64_t>(loc.id), n});
            const auto res = infer_evt_bayes(maps.x_eps, maps.xi, loc, local, cfg.spec, mc, {Sided::one, cfg.zeta, cfg.r_min});
            iv = res.interval;
            if (res.prior_only) detail::add_flag(flag, "prior_only");
            if (res.chain.mixing_warning) detail::add_flag(flag, "mixing_warning");
            break;
          }
          case Method::baseline_nonpar:
            iv = nonpar_baseline_interval(local, cfg.spec);
            break;
          case Method::baseline_evt: {
            const auto res = evt_baseline_interval(local, cfg.spec, cfg.zeta, cfg.r_min);
            iv = res.interval;
            detail::add_flag(flag, to_string(res.flag));
            break;
          }
        }
        r.rate = select_rate(iv);
        r.p_out = r.rate > 0.0 ? site.reference.outage(r.rate) : 0.0;
        r.throughput_norm = normalized_throughput(r.rate, r.p_out, truth, eps);
        r.flag = flag;
      } catch (const std::exception& e) {
        r.rate = r.p_out = r.throughput_norm = 0.0;
        r.flag = "error: " + detail::csv_safe(e.what());
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---- experiment ---------------------------------------------------------------

using ProgressFn = std::function<void(const std::string&)>;

/// All rows of one redraw, sorted by (location_id, n, method).
inline std::vector<MethodResult> run_redraw(const ExperimentConfig& cfg, const ChannelSource& source, std::size_t redraw,
                                            const ProgressFn& progress = {}) {
  const auto split = source.split(redraw, cfg.d, cfg.d_test);
  std::vector<TrainingSummary> training(split.train.size());
  parallel_for(split.train.size(), cfg.threads, [&](std::size_t i) {
    const auto s = source.training_samples(split.train[i], redraw, cfg.m);
    training[i] = summarize_training(split.train[i], s, cfg.spec, cfg.zeta, cfg.r_min);
  });
  const auto maps = fit_maps(training);
  if (progress) progress("redraw " + std::to_string(redraw) + ": maps fitted");

  auto test = split.test;
  std::sort(test.begin(), test.end(), [](const Location& a, const Location& b) { return a.id < b.id; });
  const std::size_t n_max = cfg.n_sweep.back();
  std::vector<std::vector<MethodResult>> per_site(test.size());
  parallel_for(test.size(), cfg.threads, [&](std::size_t j) {
    try {
      const auto site = source.test_site(test[j], redraw, n_max, cfg.n_ref);
      per_site[j] = evaluate_site(cfg, maps, test[j], site, redraw);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      // the site itself could not be built: one flagged row per (n, method)
      for (auto n : cfg.n_sweep) {
        for (auto method : cfg.methods) {
          per_site[j].push_back({redraw, test[j].id, n, method, 0.0, 0.0, 0.0, 0.0, "error: " + detail::csv_safe(e.what())});
        }
      }
    }
  });
  std::vector<MethodResult> rows;
  for (auto& v : per_site) {
    for (auto& r : v) rows.push_back(std::move(r));
  }
  if (progress) progress("redraw " + std::to_string(redraw) + ": " + std::to_string(rows.size()) + " rows");
  return rows;
}

/// Runs all L redraws, streaming rows to `sink` (header first) as each redraw
/// completes, so a failure keeps the rows already written.
inline std::vector<MethodResult> run_experiment(const ExperimentConfig& cfg, const ChannelSource& source,
                                                std::ostream* sink = nullptr, const ProgressFn& progress = {}) {
  cfg.validate();
  std::vector<MethodResult> all;
  if (sink) *sink << kResultsHeader << '\n';
  for (std::size_t l = 0; l < cfg.L; ++l) {
    auto rows = run_redraw(cfg, source, l, progress);
    if (sink) {
      for (const auto& r : rows) write_result_row(*sink, r);
      sink->flush();
    }
    for (auto& r : rows) all.push_back(std::move(r));
  }
  return all;
}

struct RunOutputs {
  std::filesystem::path results_csv;
  std::filesystem::path aggregate_csv;
  std::vector<MethodResult> results;
};

/// run_experiment into cfg.output_dir: results.csv, aggregate.csv and the
/// fully resolved config.
inline RunOutputs run_experiment_to_dir(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  const auto source = make_source(cfg);
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream c(dir / "config_resolved.cfg");
    write_config(c, cfg);
  }
  RunOutputs out{dir / "results.csv", dir / "aggregate.csv", {}};
  std::ofstream results(out.results_csv);
  if (!results) throw ConfigError("cannot write " + out.results_csv.string());
  out.results = run_experiment(cfg, *source, &results, progress);
  std::ofstream agg(out.aggregate_csv);
  write_aggregate_csv(agg, aggregate(out.results, cfg.spec.epsilon));
  return out;
}

// ---- bias limit -----------------------------------------------------------------

enum class BiasBase { empirical_quantile, nonpar_lower_bound };

inline std::string to_string(BiasBase b) {
  return b == BiasBase::empirical_quantile ? "empirical_quantile" : "nonpar_lower_bound";
}

inline BiasBase parse_bias_base(const std::string& s) {
  if (s == "empirical_quantile") return BiasBase::empirical_quantile;
  if (s == "nonpar_lower_bound") return BiasBase::nonpar_lower_bound;
  throw ConfigError("unknown bias base '" + s + "'");
}

struct BiasLimitOptions {
  BiasBase base = BiasBase::empirical_quantile;
  std::size_t n_ref = 1'000'000;
  std::uint64_t seed = 1;
  std::optional<double> truth;  // skip the reference draw when C_ε is known
};

struct BiasPoint {
  std::size_t n = 0;
  double coverage = 0.0;
  double se = 0.0;
};

struct BiasLimitResult {
  double truth = 0.0;
  double b = 0.0;
  std::vector<BiasPoint> points;
};

/// Coverage P(C_ε ≥ base_n + b) of a deliberately biased lower bound, where
/// base_n is a consistent estimate from n samples. Each replication draws the
/// largest n once and uses nested prefixes for the smaller ones.
inline BiasLimitResult bias_limit_experiment(const MultipathProfile& profile, double noise_power_w,
                                             const QuantileSpec& spec, double b, std::span<const std::size_t> n_list,
                                             std::size_t reps, const BiasLimitOptions& opt = {}) {
  spec.validate();
  detail::require(b != 0.0 && !std::isnan(b), "bias must be non-zero");
  detail::require(!n_list.empty() && reps >= 1, "need at least one n and one replication");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    detail::require(n_list[i] >= 1 && (i == 0 || n_list[i] > n_list[i - 1]), "n_list must be increasing and positive");
  }
  BiasLimitResult out;
  out.b = b;
  if (opt.truth) {
    out.truth = *opt.truth;
  } else {
    auto ref_rng = make_rng(opt.seed, StreamTag::reference);
    out.truth = ground_truth_quantile(profile, noise_power_w, spec.epsilon, opt.n_ref, ref_rng).value;
  }
  std::vector<std::size_t> covered(n_list.size(), 0);
  std::vector<double> buf(n_list.back());
  for (std::size_t rep = 0; rep < reps; ++rep) {
    auto rng = make_rng(opt.seed, StreamTag::bias, {rep});
    fill_capacity_samples(profile, noise_power_w, rng, buf);
    for (std::size_t i = 0; i < n_list.size(); ++i) {
      const SampleSet s(std::vector<double>(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(n_list[i])));
      const double base = opt.base == BiasBase::empirical_quantile ? empirical_quantile(s, spec.epsilon)
                                                                   : nonpar_baseline_interval(s, spec).lower;
      covered[i] += out.truth >= base + b;
    }
  }
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    const double p = static_cast<double>(covered[i]) / static_cast<double>(reps);
    out.points.push_back({n_list[i], p, std::sqrt(p * (1.0 - p) / static_cast<double>(reps))});
  }
  return out;
}

}  // namespace rareq
