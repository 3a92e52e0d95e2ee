// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are fixed here, not taken from the command line.

#include <CLI11.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rareq/rareq.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace rareq;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o << std::setprecision(prec) << v;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double draw_gpd(Rng& rng, double sigma, double xi) {
  const double u = std::max(uniform01(rng), 1e-300);
  return std::abs(xi) < 1e-12 ? -sigma * std::log(u) : sigma * std::expm1(-xi * std::log(u)) / xi;
}

MultipathProfile equal_power_profile(std::size_t paths, double mean_snr) {
  MultipathProfile prof;
  prof.magnitudes.assign(paths, std::sqrt(mean_snr / static_cast<double>(paths)));
  return prof;
}

// 1: smallest n with a positive lower bound at eps = 1e-4, delta = 0.05
Outcome exact_min_n() {
  const auto t0 = std::chrono::steady_clock::now();
  const QuantileSpec spec{1e-4, 0.05};
  Rng rng(1);
  auto sample = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = 1.0 + uniform01(rng);
    return SampleSet(std::move(v));
  };
  const double below = nonpar_baseline_interval(sample(29'955), spec).lower;
  const double at = nonpar_baseline_interval(sample(29'956), spec).lower;
  const double secs = seconds_since(t0);
  return {below == 0.0 && at > 0.0 && secs < 1.0,
          "n=29955 -> " + fmt(below) + ", n=29956 -> " + fmt(at) + ", " + fmt(secs, 3) + " s"};
}

// 2: empirical vs analytic coverage of the order-statistic bound on a
// 100-path equal-power (Rayleigh-limit) channel
Outcome nonpar_exact_coverage() {
  const QuantileSpec spec{1e-2, 0.05};
  constexpr std::size_t n = 1000;
  constexpr int reps = 10'000;
  const auto prof = equal_power_profile(100, 10.0);
  auto ref_rng = make_rng(2, StreamTag::reference);
  const double truth = ground_truth_quantile(prof, 1.0, spec.epsilon, 4'000'000, ref_rng).value;
  const auto r = nonpar_baseline_rank(n, spec.epsilon, spec.delta);
  const double analytic = order_statistic_coverage(n, spec.epsilon, static_cast<long>(r));
  auto rng = make_rng(2, StreamTag::local);
  int covered = 0;
  for (int i = 0; i < reps; ++i) {
    covered += nonpar_baseline_interval(draw_capacity_samples(prof, 1.0, n, rng), spec).lower <= truth;
  }
  const double emp = static_cast<double>(covered) / reps;
  return {std::abs(emp - analytic) <= 0.015,
          "r=" + std::to_string(r) + " empirical " + fmt(emp) + " analytic " + fmt(analytic) + " (tol 0.015)"};
}

// 3: truth drawn from the prior, estimate from the likelihood
Outcome conjugate_coverage() {
  Rng rng(3);
  const GaussianPrior prior{0.3, 0.04};
  const double s2n = 0.02;
  constexpr int reps = 10'000;
  int covered = 0;
  for (int i = 0; i < reps; ++i) {
    const double truth = prior.mu + std::sqrt(prior.sigma2) * standard_normal(rng);
    const double y_hat = truth + std::sqrt(s2n) * standard_normal(rng);
    covered += std::exp(truth) >= posterior_interval(posterior_update(prior, y_hat, s2n), 0.05, Sided::one).lower;
  }
  const double cov = static_cast<double>(covered) / reps;
  return {std::abs(cov - 0.95) <= 0.01, "coverage " + fmt(cov) + " (target 0.95 +- 0.01)"};
}

// 4: GPD fit, quantile/cdf round trip, continuity at xi = 0
Outcome gpd_machinery() {
  Rng rng(4);
  std::vector<double> sig, xis;
  for (int rep = 0; rep < 20; ++rep) {
    DeficitSet d{0.0, std::vector<double>(100'000)};
    for (auto& y : d.deficits) y = draw_gpd(rng, 1.0, -0.2);
    const auto fit = fit_gpd_mle(d);
    sig.push_back(fit.sigma_u);
    xis.push_back(fit.xi);
  }
  const double ms = median(sig);
  const double mx = median(xis);

  double round_trip = 0.0;
  for (double xi : {-0.6, -0.2, -1e-9, 0.0, 1e-9, 0.3, 1.0}) {
    const TailParams base{0.0, xi, 0.1, 2.0, 1e-4};
    const GpdParams g{0.4, xi};
    for (double e = 1e-7; e < base.p_u; e *= 1.9) {
      TailParams t = base;
      t.x_eps = tail_quantile(g, t.u, t.p_u, t.epsilon);
      round_trip = std::max(round_trip, std::abs(tail_cdf(tail_quantile(g, t.u, t.p_u, e), t) - e) / e);
    }
  }

  double cont = 0.0;
  for (double y = 0.01; y <= 8.0; y += 0.03) {
    for (double xi : {1e-9, -1e-9}) {
      cont = std::max(cont, std::abs(gpd_pdf(y, {1.0, xi}) - std::exp(-y)) / std::exp(-y));
      cont = std::max(cont, std::abs(gpd_cdf(y, {1.0, xi}) + std::expm1(-y)));
      cont = std::max(cont, std::abs(tail_quantile({1.0, xi}, 5.0, 0.1, 1e-3) - tail_quantile({1.0, 0.0}, 5.0, 0.1, 1e-3)));
    }
  }
  const bool ok = std::abs(ms - 1.0) <= 0.02 && std::abs(mx + 0.2) <= 0.02 && round_trip <= 1e-9 && cont <= 1e-7;
  return {ok, "median sigma " + fmt(ms, 5) + ", median xi " + fmt(mx, 5) + ", round trip " + fmt(round_trip, 3) +
                  " (rel), continuity " + fmt(cont, 3)};
}

// 5: MCMC on empty data, on a large exact-GPD sample, and on a 3-cell target
Outcome mcmc_correctness() {
  const PhiPrior prior{{std::log(2.0), 0.04}, {-0.2, 0.01}, {10.0, 91.0}};
  McmcConfig cfg;
  cfg.iterations = 20'000;
  cfg.proposal_scale = 2.4;
  cfg.seed = 5;
  const auto chain = metropolis_within_gibbs(prior, DeficitSet{100.0, {}}, 100.0, {1e-4, 0.05}, cfg);
  std::vector<double> x, xi, pu;
  for (const auto& s : chain.samples) {
    x.push_back(s.x_eps);
    xi.push_back(s.xi);
    pu.push_back(s.p_u);
  }
  const double ks_x = testing::ks_statistic(
      x, [&](double v) { return normal_cdf((std::log(v) - prior.x_eps.mu) / std::sqrt(prior.x_eps.sigma2)); });
  const double ks_xi = testing::ks_statistic(xi, [&](double v) { return normal_cdf((v + 0.2) / 0.1); });
  const double ks_pu =
      testing::ks_statistic(pu, [&](double v) { return beta_cdf(std::clamp(v, 0.0, 1.0), 10.0, 91.0); });
  const double ks = std::max({ks_x, ks_xi, ks_pu});

  Rng rng(5);
  std::vector<double> v(10'000);
  for (auto& s : v) s = 5.0 - draw_gpd(rng, 1.0, -0.2) + 1e-9;
  const SampleSet local(v);
  const double eps = 1e-3;
  const auto thr = select_threshold(local, 0.1, 50);
  const auto d = compute_deficits(local, thr.u);
  const double plug_in = tail_quantile(fit_gpd_mle(d), thr.u, static_cast<double>(thr.r) / 10'000.0, eps);
  const PhiPrior vague{{0.0, 4.0}, {0.0, 1.0}, {static_cast<double>(thr.r), 10'001.0 - thr.r}};
  McmcConfig big;
  big.iterations = 20'000;
  big.proposal_sd = {0.01, 0.02, 0.002};
  big.seed = 6;
  const auto post = metropolis_within_gibbs(vague, d, thr.u, {eps, 0.05}, big);
  std::vector<double> px;
  for (const auto& s : post.samples) px.push_back(s.x_eps);
  const double sd = std::sqrt(testing::sample_variance(px));
  const double gap = std::abs(chain_quantile(post, 0.5) - plug_in);

  const std::array<double, 3> mass{0.2, 0.5, 0.3};
  auto target = [&](const std::array<double, 1>& z) {
    const double c = std::floor(z[0] + 0.5);
    return c < 0 || c > 2 ? -kInf : std::log(mass[static_cast<std::size_t>(c)]);
  };
  Rng mrng(7);
  const auto run = metropolis_within_gibbs<1>(target, {1.0}, {1.0}, 100'000, 1000, mrng);
  std::array<double, 3> freq{};
  for (const auto& s : run.draws) freq[static_cast<std::size_t>(std::floor(s[0] + 0.5))] += 1.0;
  double tv = 0.0;
  for (std::size_t i = 0; i < 3; ++i) tv += 0.5 * std::abs(freq[i] / static_cast<double>(run.draws.size()) - mass[i]);

  return {ks <= 0.03 && gap <= 2.0 * sd && tv <= 0.05,
          "KS x/xi/p_u " + fmt(ks_x, 3) + "/" + fmt(ks_xi, 3) + "/" + fmt(ks_pu, 3) + ", |median - MLE| " +
              fmt(gap, 3) + " vs 2sd " + fmt(2.0 * sd, 3) + ", TV " + fmt(tv, 3)};
}

std::string curve(const BiasLimitResult& r) {
  std::string s;
  for (const auto& p : r.points) s += (s.empty() ? "" : " ") + std::to_string(p.n) + ":" + fmt(p.coverage, 3);
  return s;
}

// 6: coverage of a lower bound shifted by +-5% of C_eps drifts to 0 or 1
Outcome bias_limit() {
  const auto prof = equal_power_profile(16, 1e4);
  const QuantileSpec spec{1e-2, 0.05};
  const std::vector<std::size_t> ns{100, 1000, 10'000, 100'000};
  constexpr std::size_t reps = 300;
  BiasLimitOptions opt;
  opt.base = BiasBase::nonpar_lower_bound;
  opt.seed = 6;
  auto ref_rng = make_rng(opt.seed, StreamTag::reference);
  const double truth = ground_truth_quantile(prof, 1.0, spec.epsilon, 1'000'000, ref_rng).value;
  opt.truth = truth;
  const auto pos = bias_limit_experiment(prof, 1.0, spec, 0.05 * truth, ns, reps, opt);
  const auto neg = bias_limit_experiment(prof, 1.0, spec, -0.05 * truth, ns, reps, opt);
  opt.base = BiasBase::empirical_quantile;
  const auto emp_pos = bias_limit_experiment(prof, 1.0, spec, 0.05 * truth, ns, reps, opt);
  const auto emp_neg = bias_limit_experiment(prof, 1.0, spec, -0.05 * truth, ns, reps, opt);
  std::cout << "  info: empirical-quantile base: b>0 " << curve(emp_pos) << "; b<0 " << curve(emp_neg) << '\n';
  const bool ok = pos.points.front().coverage >= 0.9 && pos.points.back().coverage < 0.05 &&
                  neg.points.back().coverage > 0.95;
  return {ok, "C_eps " + fmt(truth) + "; b>0 " + curve(pos) + "; b<0 " + curve(neg)};
}

const AggregateRow* find_row(const std::vector<AggregateRow>& rows, Method m, std::size_t n) {
  for (const auto& r : rows) {
    if (r.method == m && r.n == n) return &r;
  }
  return nullptr;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return parse_config(in);
}

// 7: desk run trends
Outcome desk_trends(const fs::path& config_dir, const fs::path& work) {
  auto cfg = load_config(config_dir / "desk.cfg");
  cfg.output_dir = (work / "desk").string();
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = run_experiment_to_dir(cfg, [](const std::string& msg) { std::cout << "  " << msg << std::endl; });
  const double secs = seconds_since(t0);
  const auto rows = aggregate(out.results, cfg.spec.epsilon);
  const double target = 1.0 - cfg.spec.delta;

  bool a = true;
  bool b = true;
  bool c = true;
  std::string why;
  for (std::size_t n : {0u, 50u}) {
    for (auto m : {Method::bayes_nonpar, Method::bayes_evt}) {
      const auto* r = find_row(rows, m, n);
      if (!r || !(r->median_rate > 0.0)) {
        a = false;
        why += " " + to_string(m) + "@" + std::to_string(n) + " rate 0;";
      }
    }
    for (auto m : {Method::baseline_nonpar, Method::baseline_evt}) {
      const auto* r = find_row(rows, m, n);
      if (!r || !(r->median_rate == 0.0 || r->meta_probability < target)) {
        a = false;
        why += " " + to_string(m) + "@" + std::to_string(n) + " nonzero rate with coverage;";
      }
    }
  }
  for (auto m : kAllMethods) {
    const auto* r = find_row(rows, m, 10'000);
    if (!r || r->q2 < 0.9) {
      b = false;
      why += " " + to_string(m) + " median throughput " + (r ? fmt(r->q2, 3) : "missing") + " at 1e4;";
    }
  }
  for (const auto& r : rows) {
    if ((r.method == Method::bayes_nonpar || r.method == Method::bayes_evt) && r.n >= 100 &&
        (r.meta_probability < 0.85 || r.meta_probability > 1.0)) {
      c = false;
      why += " " + to_string(r.method) + "@" + std::to_string(r.n) + " meta " + fmt(r.meta_probability, 3) + ";";
    }
  }
  for (const auto& r : rows) {
    std::cout << "  " << std::left << std::setw(16) << to_string(r.method) << " n=" << std::setw(6) << r.n
              << " meta " << std::setw(8) << fmt(r.meta_probability, 3) << " throughput q2 " << std::setw(8)
              << fmt(r.q2, 3) << " median rate " << fmt(r.median_rate, 4) << '\n';
  }
  return {a && b && c, std::string("(a) ") + (a ? "ok" : "no") + " (b) " + (b ? "ok" : "no") + " (c) " +
                           (c ? "ok" : "no") + ", " + std::to_string(out.results.size()) + " rows, " +
                           fmt(secs / 60.0, 3) + " min" + why};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 8: two runs of the same config produce identical bytes
Outcome determinism(const fs::path& config_dir, const fs::path& work) {
  auto cfg = load_config(config_dir / "determinism.cfg");
  std::array<std::string, 2> results, aggregates;
  for (int i = 0; i < 2; ++i) {
    cfg.output_dir = (work / ("determinism_" + std::to_string(i))).string();
    const auto out = run_experiment_to_dir(cfg);
    results[i] = slurp(out.results_csv);
    aggregates[i] = slurp(out.aggregate_csv);
  }
  const bool ok = !results[0].empty() && results[0] == results[1] && aggregates[0] == aggregates[1];
  return {ok, "results.csv " + std::to_string(results[0].size()) + " bytes, " +
                  (results[0] == results[1] ? "identical" : "differ") + "; aggregate.csv " +
                  (aggregates[0] == aggregates[1] ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> only;
  std::string config_dir = RAREQ_CONFIG_DIR;
  std::string work = "acceptance_work";
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 8));
  app.add_option("--config-dir", config_dir, "directory holding desk.cfg and determinism.cfg");
  app.add_option("--work-dir", work, "scratch directory for run outputs");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Outcome()>> criteria{
      exact_min_n,
      nonpar_exact_coverage,
      conjugate_coverage,
      gpd_machinery,
      mcmc_correctness,
      bias_limit,
      [&] { return desk_trends(config_dir, work); },
      [&] { return determinism(config_dir, work); },
  };
  fs::create_directories(work);
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
