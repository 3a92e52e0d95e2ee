#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rareq/harness.hpp"

namespace rareq {
namespace {

MultipathProfile flat_profile(std::size_t paths, double power) {
  MultipathProfile p;
  p.magnitudes.assign(paths, std::sqrt(power / static_cast<double>(paths)));
  return p;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.d = 12;
  cfg.d_test = 2;
  cfg.L = 1;
  cfg.m = 5000;
  cfg.n_sweep = {0, 100, 500};
  cfg.n_ref = 20'000;
  cfg.mcmc.iterations = 1500;
  cfg.scenario.master_seed = 17;
  return cfg;
}

std::string run_to_string(const ExperimentConfig& cfg) {
  std::ostringstream out;
  const auto source = make_source(cfg);
  run_experiment(cfg, *source, &out);
  return out.str();
}

TEST(SelectRate, LowerBoundClampedAtZero) {
  EXPECT_EQ(select_rate(make_interval(0.0, kInf, 0.95, Sided::one)), 0.0);
  EXPECT_EQ(select_rate(make_interval(1.7, kInf, 0.95, Sided::one)), 1.7);
  EXPECT_THROW(select_rate(make_interval(1.0, 2.0, 0.95, Sided::two)), ArgumentError);
}

TEST(EvalOutage, LimitsAndSelfConsistency) {
  const auto prof = flat_profile(8, 10.0);
  Rng rng(1);
  EXPECT_EQ(eval_outage(prof, 1.0, 0.0, 1000, 0.01, rng), 0.0);
  // |h| never exceeds the sum of the magnitudes
  EXPECT_EQ(eval_outage(prof, 1.0, std::log2(1.0 + 8.0 * 10.0) + 1e-9, 1000, 0.01, rng), 1.0);
  EXPECT_THROW(eval_outage(prof, 1.0, 1.0, 999, 0.01, rng), ArgumentError);

  const double eps = 0.01;
  Rng truth_rng(2);
  const double truth = ground_truth_quantile(prof, 1.0, eps, 1'000'000, truth_rng).value;
  const double p = eval_outage(prof, 1.0, truth, 1'000'000, eps, rng);
  const double se = std::sqrt(2.0 * eps * (1.0 - eps) / 1e6);
  EXPECT_NEAR(p, eps, 3.0 * se);
}

TEST(EvalOutage, RateBelowQuantileIffOutageBelowTarget) {
  const auto prof = flat_profile(8, 10.0);
  Rng rng(3);
  const double eps = 0.01;
  const ReferenceSample ref = ReferenceSample::draw(prof, 1.0, 1'000'001, rng);
  const double c_eps = ref.quantile(eps);
  const auto sorted = ref.samples().sorted();
  for (std::size_t i = 9'000; i < 11'000; i += 7) {
    const double r = sorted[i];
    EXPECT_EQ(r <= c_eps, ref.outage(r) <= eps) << i;
  }
}

TEST(NormalizedThroughput, Values) {
  EXPECT_DOUBLE_EQ(normalized_throughput(2.0, 0.01, 2.0, 0.01), 1.0);
  EXPECT_EQ(normalized_throughput(0.0, 0.0, 2.0, 0.01), 0.0);
  EXPECT_DOUBLE_EQ(normalized_throughput(1.0, 0.01, 2.0, 0.01), 0.5);
  EXPECT_THROW(normalized_throughput(1.0, 0.0, 0.0, 0.01), ArgumentError);
}

TEST(MetaProbability, ZeroRatesAndNoiseSymmetry) {
  std::vector<MethodResult> zeros(10);
  EXPECT_EQ(meta_probability(zeros, 0.01), 1.0);
  EXPECT_THROW(meta_probability(std::vector<MethodResult>{}, 0.01), ArgumentError);

  // R at the true quantile: fresh-draw outage estimates scatter evenly around ε
  const auto prof = flat_profile(4, 5.0);
  const double eps = 0.1;
  Rng truth_rng(4);
  const double truth = ground_truth_quantile(prof, 1.0, eps, 2'000'000, truth_rng).value;
  std::vector<MethodResult> rows(400);
  Rng rng(5);
  for (auto& r : rows) r.p_out = eval_outage(prof, 1.0, truth, 10'000, eps, rng);
  EXPECT_NEAR(meta_probability(rows, eps), 0.5, 0.08);
}

TEST(Aggregate, QuartilesAndEcdfAgreeWithMetaProbability) {
  std::vector<MethodResult> rows;
  for (int i = 0; i < 20; ++i) {
    rows.push_back({0, i, 100, Method::bayes_evt, 1.0, 0.002 * i, 0.05 * i, 1.0, i % 3 == 0 ? "x" : ""});
  }
  const auto agg = aggregate(rows, 0.01);
  ASSERT_EQ(agg.size(), 1u);
  EXPECT_EQ(agg[0].count, 20u);
  EXPECT_DOUBLE_EQ(agg[0].meta_probability, 6.0 / 20.0);  // p_out ≤ 0.01 for i = 0..5
  EXPECT_NEAR(agg[0].q2, 0.475, 1e-12);
  EXPECT_NEAR(agg[0].q1, 0.2375, 1e-12);
  EXPECT_EQ(agg[0].flagged, 7u);

  std::ostringstream ecdf;
  write_ecdf_csv(ecdf, rows, "p_out");
  std::istringstream in(ecdf.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "method,n,p_out,ecdf");
  double at_eps = 0.0;
  while (std::getline(in, line)) {
    const auto a = line.find(',', line.find(',') + 1);
    const auto b = line.find(',', a + 1);
    if (std::stod(line.substr(a + 1, b - a - 1)) <= 0.01) at_eps = std::stod(line.substr(b + 1));
  }
  EXPECT_DOUBLE_EQ(at_eps, agg[0].meta_probability);
  EXPECT_THROW(write_ecdf_csv(ecdf, rows, "nope"), ConfigError);
}

TEST(ResultsCsv, RoundTrip) {
  std::vector<MethodResult> rows{{1, 42, 316, Method::baseline_evt, 1.25, 0.003, 0.97, 1.3, "fit_failed"},
                                 {1, 43, 0, Method::bayes_nonpar, 0.1 + 0.2, 0.0, 0.5, 0.6, ""}};
  std::ostringstream out;
  out << kResultsHeader << '\n';
  for (const auto& r : rows) write_result_row(out, r);
  std::istringstream in(out.str());
  const auto back = read_results_csv(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].location_id, 42);
  EXPECT_EQ(back[0].method, Method::baseline_evt);
  EXPECT_EQ(back[0].flag, "fit_failed");
  EXPECT_EQ(back[1].rate, 0.1 + 0.2);
  EXPECT_EQ(back[1].flag, "");
  std::istringstream bad("redraw,location\n");
  EXPECT_THROW(read_results_csv(bad), ConfigError);
}

TEST(Config, ParsesDottedKeysAndRejectsUnknown) {
  std::istringstream in(
      "# desk run\n"
      "spec.epsilon = 0.01\n"
      "n_sweep = 0, 50, 1e3\n"
      "methods = bayes_evt, baseline_nonpar  # two of four\n"
      "scenario.thomas.offspring_mean = 12\n"
      "mcmc.proposal_sd = 0.1, 0.2, 0.3\n"
      "seed = 99\n");
  const auto cfg = parse_config(in);
  EXPECT_EQ(cfg.n_sweep, (std::vector<std::size_t>{0, 50, 1000}));
  ASSERT_EQ(cfg.methods.size(), 2u);
  EXPECT_EQ(cfg.methods[1], Method::baseline_nonpar);
  EXPECT_EQ(cfg.scenario.thomas.offspring_mean, 12.0);
  EXPECT_EQ(cfg.mcmc.proposal_sd[2], 0.3);
  EXPECT_EQ(cfg.scenario.master_seed, 99u);

  auto parse = [](const std::string& s) {
    std::istringstream is(s);
    return parse_config(is);
  };
  EXPECT_THROW(parse("no_such_key = 1\n"), ConfigError);
  EXPECT_THROW(parse("d = ten\n"), ConfigError);
  EXPECT_THROW(parse("d = 2.5\n"), ConfigError);
  EXPECT_THROW(parse("d = 3\nd = 4\n"), ConfigError);
  EXPECT_THROW(parse("n_sweep = 100, 50\n"), ConfigError);
  EXPECT_THROW(parse("methods = magic\n"), ConfigError);
  EXPECT_THROW(parse("just text\n"), ConfigError);
  EXPECT_THROW(parse("zeta = 0.001\n"), ConfigError);
}

TEST(Config, WriteReadRoundTrip) {
  auto cfg = small_config();
  cfg.methods = {Method::baseline_evt};
  cfg.dataset_path = "";
  std::ostringstream a;
  write_config(a, cfg);
  std::istringstream in(a.str());
  std::ostringstream b;
  write_config(b, parse_config(in));
  EXPECT_EQ(a.str(), b.str());
}

TEST(ParallelFor, SlotsAreIndependentOfThreadCount) {
  std::vector<int> one(50), four(50);
  parallel_for(50, 1, [&](std::size_t i) { one[i] = static_cast<int>(i * i); });
  parallel_for(50, 4, [&](std::size_t i) { four[i] = static_cast<int>(i * i); });
  EXPECT_EQ(one, four);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw FitError("boom");
               }),
               FitError);
}

TEST(RunExperiment, CountsRowsAndIsDeterministic) {
  auto cfg = small_config();
  cfg.d_test = 1;
  cfg.methods = {Method::bayes_nonpar};
  const auto a = run_to_string(cfg);
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 1 + 3);
  EXPECT_EQ(a, run_to_string(cfg));
  cfg.threads = 3;
  EXPECT_EQ(a, run_to_string(cfg));
}

TEST(RunExperiment, RowInvariantsAcrossMethods) {
  const auto cfg = small_config();
  const auto source = make_source(cfg);
  const auto rows = run_experiment(cfg, *source);
  EXPECT_EQ(rows.size(), cfg.d_test * cfg.n_sweep.size() * 4);
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isfinite(r.rate) && r.rate >= 0.0);
    EXPECT_GT(r.c_eps_truth, 0.0);
    EXPECT_EQ(r.flag.rfind("error", 0), std::string::npos) << r.flag;
    if (r.rate == 0.0) {
      EXPECT_EQ(r.p_out, 0.0);
      EXPECT_EQ(r.throughput_norm, 0.0);
    }
    if (r.n == 0 && (r.method == Method::bayes_nonpar || r.method == Method::bayes_evt)) {
      EXPECT_EQ(r.flag, "prior_only");
      EXPECT_GT(r.rate, 0.0);
    }
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& p = rows[i - 1];
    const auto& q = rows[i];
    EXPECT_TRUE(std::tie(p.location_id, p.n, p.method) < std::tie(q.location_id, q.n, q.method));
  }
}

TEST(RunExperiment, NonparBaselineNeedsManySamplesAtSmallEpsilon) {
  auto cfg = small_config();
  cfg.spec = {1e-4, 0.05};
  cfg.zeta = 0.1;
  cfg.n_ref = 100'000;
  cfg.n_sweep = {100, 1000, 10'000};
  cfg.methods = {Method::baseline_nonpar};
  const auto source = make_source(cfg);
  const auto rows = run_experiment(cfg, *source);
  for (const auto& a : aggregate(rows, cfg.spec.epsilon)) {
    EXPECT_EQ(a.median_rate, 0.0);
    EXPECT_EQ(a.meta_probability, 1.0);
    EXPECT_EQ(a.q3, 0.0);
  }
}

TEST(RunExperiment, WritesOutputsToDirectory) {
  auto cfg = small_config();
  cfg.methods = {Method::baseline_nonpar, Method::baseline_evt};
  cfg.output_dir = (std::filesystem::temp_directory_path() / "rareq_run_test").string();
  std::filesystem::remove_all(cfg.output_dir);
  const auto out = run_experiment_to_dir(cfg);
  std::ifstream res(out.results_csv), agg(out.aggregate_csv), used(std::filesystem::path(cfg.output_dir) / "config_resolved.cfg");
  ASSERT_TRUE(res && agg && used);
  EXPECT_EQ(read_results_csv(res).size(), out.results.size());
  std::string header;
  std::getline(agg, header);
  EXPECT_EQ(header, kAggregateHeader);
  EXPECT_NO_THROW(parse_config(used));
}

TEST(RunExperiment, DatasetSourceSplitsDataAndReference) {
  const Scenario scn(ScenarioConfig{});
  std::vector<LocationSamples> data;
  Rng rng(8);
  for (std::size_t i = 0; i < 12; ++i) {
    const auto& loc = scn.grid()[i * 97];
    data.push_back({loc, draw_capacity_samples(synthesize_profile(scn, loc), scn.noise_power_w(), 801, rng)});
  }
  const auto path = std::filesystem::temp_directory_path() / "rareq_dataset_test.csv";
  {
    std::ofstream f(path);
    write_dataset_csv(f, data);
  }
  auto cfg = small_config();
  cfg.dataset_path = path.string();
  cfg.d = 8;
  cfg.d_test = 4;
  cfg.m = 400;
  cfg.n_sweep = {0, 100, 400};
  cfg.methods = {Method::bayes_nonpar, Method::baseline_nonpar};
  const auto a = run_to_string(cfg);
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 1 + 4 * 3 * 2);
  EXPECT_EQ(a, run_to_string(cfg));

  cfg.n_sweep = {0, 500};
  const auto source = make_source(cfg);
  EXPECT_THROW(run_experiment(cfg, *source), ConfigError);
  cfg.m = 900;
  EXPECT_THROW(make_source(cfg), ConfigError);
}

TEST(BiasLimit, DominatingBiasGivesZeroOrOne) {
  const auto prof = flat_profile(8, 100.0);
  const QuantileSpec spec{0.01, 0.05};
  const std::vector<std::size_t> ns{10, 100, 1000};
  BiasLimitOptions opt;
  opt.truth = 1.0;
  for (auto base : {BiasBase::empirical_quantile, BiasBase::nonpar_lower_bound}) {
    opt.base = base;
    for (const auto& p : bias_limit_experiment(prof, 1.0, spec, 1e6, ns, 50, opt).points) EXPECT_EQ(p.coverage, 0.0);
    for (const auto& p : bias_limit_experiment(prof, 1.0, spec, -1e6, ns, 50, opt).points) EXPECT_EQ(p.coverage, 1.0);
  }
  EXPECT_THROW(bias_limit_experiment(prof, 1.0, spec, 0.0, ns, 50, opt), ArgumentError);
  EXPECT_THROW(bias_limit_experiment(prof, 1.0, spec, 1.0, std::vector<std::size_t>{100, 10}, 50, opt), ArgumentError);
}

TEST(BiasLimit, CoverageDriftsTowardTheLimits) {
  const auto prof = flat_profile(16, 1e4);
  const QuantileSpec spec{0.01, 0.05};
  const std::vector<std::size_t> ns{100, 1000, 10'000};
  BiasLimitOptions opt;
  opt.base = BiasBase::nonpar_lower_bound;
  opt.n_ref = 400'000;
  const auto pos = bias_limit_experiment(prof, 1.0, spec, 0.3, ns, 300, opt);
  const auto neg = bias_limit_experiment(prof, 1.0, spec, -0.3, ns, 300, opt);
  EXPECT_GT(pos.truth, 5.0);
  EXPECT_GE(pos.points.front().coverage, 0.9);
  EXPECT_LT(pos.points.back().coverage, pos.points.front().coverage - 0.3);
  for (std::size_t i = 1; i < ns.size(); ++i) {
    EXPECT_LE(pos.points[i].coverage, pos.points[i - 1].coverage + 3.0 * pos.points[i].se + 1e-12);
    EXPECT_GE(neg.points[i].coverage, neg.points[i - 1].coverage - 3.0 * neg.points[i].se - 1e-12);
  }
  EXPECT_GE(neg.points.back().coverage, 0.95);
}

}  // namespace
}  // namespace rareq
