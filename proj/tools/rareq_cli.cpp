// rareq: command-line front end for the rate-selection toolkit.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure (partial
// results already written are kept).

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "rareq/rareq.hpp"

namespace {

using namespace rareq;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    cfg = parse_config(in);
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

int cmd_simulate(const std::string& cfg_path, const std::vector<std::string>& sets, std::size_t locations,
                 std::size_t samples, const std::string& out_path) {
  const auto cfg = load_config(cfg_path, sets);
  const SyntheticSource source(cfg.scenario);
  const std::size_t count = locations == 0 ? cfg.d + cfg.d_test : locations;
  const std::size_t m = samples == 0 ? cfg.m : samples;
  const auto split = source.split(0, count, 0);
  std::vector<LocationSamples> data;
  for (const auto& loc : split.train) data.push_back({loc, source.training_samples(loc, 0, m)});
  auto out = open_out(out_path);
  write_dataset_csv(out, data);
  log_line("wrote " + std::to_string(data.size()) + " locations x " + std::to_string(m) + " samples to " + out_path);
  return 0;
}

int cmd_calibrate(const std::string& cfg_path, const std::vector<std::string>& sets, const std::string& dataset,
                  std::size_t locations, const ZetaOptions& opt) {
  std::vector<SampleSet> samples;
  if (!dataset.empty()) {
    std::ifstream in(dataset);
    if (!in) throw ConfigError("cannot open dataset '" + dataset + "'");
    for (auto& d : read_dataset_csv(in)) samples.push_back(std::move(d.samples));
  } else {
    const auto cfg = load_config(cfg_path, sets);
    const SyntheticSource source(cfg.scenario);
    for (const auto& loc : source.split(0, locations, 0).train) samples.push_back(source.training_samples(loc, 0, cfg.m));
  }
  const auto cal = calibrate_zeta(samples, opt);
  std::cout << "location,zeta\n";
  for (std::size_t i = 0; i < cal.per_location.size(); ++i) std::cout << i << ',' << format_double(cal.per_location[i]) << '\n';
  std::cout << "# median zeta = " << format_double(cal.zeta) << ", skipped " << cal.skipped << " of " << samples.size()
            << " locations\n";
  return 0;
}

int cmd_fit_maps(const std::string& cfg_path, const std::vector<std::string>& sets, std::size_t redraw,
                 const std::string& out_dir) {
  auto cfg = load_config(cfg_path, sets);
  const auto source = make_source(cfg);
  const auto split = source->split(redraw, cfg.d, cfg.d_test);
  std::vector<TrainingSummary> training(split.train.size());
  parallel_for(split.train.size(), cfg.threads, [&](std::size_t i) {
    training[i] = summarize_training(split.train[i], source->training_samples(split.train[i], redraw, cfg.m), cfg.spec,
                                     cfg.zeta, cfg.r_min);
  });
  const auto maps = fit_maps(training);
  const std::filesystem::path dir(out_dir.empty() ? cfg.output_dir : out_dir);
  std::filesystem::create_directories(dir);
  const std::pair<const char*, const CdiMap*> files[] = {
      {"map_log_c_eps.txt", &maps.x_eps}, {"map_xi.txt", &maps.xi}, {"map_log_density.txt", &maps.density}};
  for (const auto& [name, map] : files) {
    auto out = open_out((dir / name).string());
    map->save(out);
    const auto& h = map->hyper();
    log_line(std::string(name) + ": " + std::to_string(map->observations().size()) + " obs, lengthscale " +
             format_double(h.lengthscale_m) + " m, signal variance " + format_double(h.signal_variance) +
             ", nugget " + format_double(h.nugget));
  }
  return 0;
}

int cmd_run(const std::string& cfg_path, const std::vector<std::string>& sets, bool print_config) {
  const auto cfg = load_config(cfg_path, sets);
  if (print_config) {
    write_config(std::cout, cfg);
    return 0;
  }
  const auto out = run_experiment_to_dir(cfg, log_line);
  log_line("results: " + out.results_csv.string() + " (" + std::to_string(out.results.size()) + " rows)");
  log_line("aggregate: " + out.aggregate_csv.string());
  return 0;
}

struct BiasArgs {
  std::size_t paths = 16;
  double snr_db = 40.0;
  double epsilon = 1e-2;
  double delta = 0.05;
  double b_rel = 0.05;
  std::vector<std::size_t> n_list{100, 1000, 10'000, 100'000};
  std::size_t reps = 500;
  std::size_t n_ref = 1'000'000;
  std::string base = "nonpar_lower_bound";
  std::uint64_t seed = 1;
};

int cmd_bias(const BiasArgs& a) {
  MultipathProfile prof;
  prof.magnitudes.assign(a.paths, std::sqrt(std::pow(10.0, a.snr_db / 10.0) / static_cast<double>(a.paths)));
  const QuantileSpec spec{a.epsilon, a.delta};
  BiasLimitOptions opt;
  opt.base = parse_bias_base(a.base);
  opt.n_ref = a.n_ref;
  opt.seed = a.seed;
  auto truth_rng = make_rng(a.seed, StreamTag::reference);
  opt.truth = ground_truth_quantile(prof, 1.0, a.epsilon, a.n_ref, truth_rng).value;
  const auto res = bias_limit_experiment(prof, 1.0, spec, a.b_rel * *opt.truth, a.n_list, a.reps, opt);
  std::cout << "# c_eps = " << format_double(res.truth) << ", b = " << format_double(res.b) << ", base = " << a.base
            << '\n';
  std::cout << "n,coverage,se\n";
  for (const auto& p : res.points) std::cout << p.n << ',' << format_double(p.coverage) << ',' << format_double(p.se) << '\n';
  return 0;
}

int cmd_ecdf(const std::string& results_path, const std::string& column, const std::string& out_path,
             const std::string& aggregate_path, double epsilon) {
  std::ifstream in(results_path);
  if (!in) throw ConfigError("cannot open results '" + results_path + "'");
  const auto rows = read_results_csv(in);
  if (out_path.empty()) {
    write_ecdf_csv(std::cout, rows, column);
  } else {
    auto out = open_out(out_path);
    write_ecdf_csv(out, rows, column);
  }
  if (!aggregate_path.empty()) {
    auto out = open_out(aggregate_path);
    write_aggregate_csv(out, aggregate(rows, epsilon));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rareq: tail-quantile rate selection from local and spatial channel data"};
  app.require_subcommand(1);

  std::string cfg_path;
  std::vector<std::string> sets;
  auto add_config_opts = [&](CLI::App* sub) {
    sub->add_option("-c,--config", cfg_path, "experiment config (flat key = value)");
    sub->add_option("--set", sets, "override one config key, key=value (repeatable)");
  };

  auto* simulate = app.add_subcommand("simulate", "write a synthetic measurement dataset CSV");
  add_config_opts(simulate);
  std::size_t sim_locations = 0;
  std::size_t sim_samples = 0;
  std::string sim_out = "dataset.csv";
  simulate->add_option("--locations", sim_locations, "number of locations (default d + d_test)");
  simulate->add_option("--samples", sim_samples, "samples per location (default m)");
  simulate->add_option("-o,--out", sim_out, "output CSV");

  auto* calibrate = app.add_subcommand("calibrate-zeta", "mean-deficit heuristic for the threshold fraction");
  add_config_opts(calibrate);
  std::string cal_dataset;
  std::size_t cal_locations = 20;
  ZetaOptions zopt;
  calibrate->add_option("--dataset", cal_dataset, "dataset CSV (default: simulate from the config)");
  calibrate->add_option("--locations", cal_locations, "simulated calibration locations");
  calibrate->add_option("--levels", zopt.levels, "threshold grid size");
  calibrate->add_option("--window", zopt.window, "points per linearity window");
  calibrate->add_option("--min-r2", zopt.min_r2, "R^2 a window must reach to count as linear");

  auto* fit = app.add_subcommand("fit-maps", "fit the three CDI maps for one redraw and save them");
  add_config_opts(fit);
  std::size_t fit_redraw = 0;
  std::string fit_dir;
  fit->add_option("--redraw", fit_redraw, "redraw index");
  fit->add_option("-o,--out-dir", fit_dir, "output directory (default output_dir)");

  auto* run = app.add_subcommand("run", "full experiment from a config");
  add_config_opts(run);
  bool print_config = false;
  run->add_flag("--print-config", print_config, "print the resolved config (all keys) and exit");

  auto* bias = app.add_subcommand("bias-demo", "coverage of a biased lower bound as n grows");
  BiasArgs bias_args;
  bias->add_option("--paths", bias_args.paths, "equal-power paths in the test channel");
  bias->add_option("--snr-db", bias_args.snr_db, "mean SNR in dB");
  bias->add_option("--epsilon", bias_args.epsilon, "target outage probability");
  bias->add_option("--delta", bias_args.delta, "1 - confidence");
  bias->add_option("--b-rel", bias_args.b_rel, "bias as a fraction of C_eps (sign matters)");
  bias->add_option("--n", bias_args.n_list, "sample sizes, ascending")->delimiter(',');
  bias->add_option("--reps", bias_args.reps, "replications per n");
  bias->add_option("--n-ref", bias_args.n_ref, "reference draws for C_eps");
  bias->add_option("--base", bias_args.base, "empirical_quantile or nonpar_lower_bound");
  bias->add_option("--seed", bias_args.seed, "seed");

  auto* ecdf = app.add_subcommand("ecdf", "ECDF (and optionally aggregates) from a results CSV");
  std::string ecdf_in;
  std::string ecdf_col = "p_out";
  std::string ecdf_out;
  std::string ecdf_agg;
  double ecdf_eps = 1e-2;
  ecdf->add_option("results", ecdf_in, "results CSV")->required();
  ecdf->add_option("--column", ecdf_col, "p_out, throughput_norm or rate");
  ecdf->add_option("-o,--out", ecdf_out, "output CSV (default stdout)");
  ecdf->add_option("--aggregate", ecdf_agg, "also write aggregate rows here");
  ecdf->add_option("--epsilon", ecdf_eps, "target for the meta-probability in --aggregate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*simulate) return cmd_simulate(cfg_path, sets, sim_locations, sim_samples, sim_out);
    if (*calibrate) return cmd_calibrate(cfg_path, sets, cal_dataset, cal_locations, zopt);
    if (*fit) return cmd_fit_maps(cfg_path, sets, fit_redraw, fit_dir);
    if (*run) return cmd_run(cfg_path, sets, print_config);
    if (*bias) return cmd_bias(bias_args);
    if (*ecdf) return cmd_ecdf(ecdf_in, ecdf_col, ecdf_out, ecdf_agg, ecdf_eps);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ArgumentError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
