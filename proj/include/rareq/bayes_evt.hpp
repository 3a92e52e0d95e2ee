#pragma once

// EVT-based Bayesian estimate. The parameters φ = (X_ε, ξ, p_u) get a
// log-normal × normal × beta prior (two CDI maps plus the order-statistic law
// of the threshold), the deficits below the threshold a GPD likelihood, and
// the posterior is sampled with Metropolis-within-Gibbs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "rareq/bayes_nonpar.hpp"
#include "rareq/errors.hpp"
#include "rareq/evt_core.hpp"
#include "rareq/gp_map.hpp"
#include "rareq/mcmc.hpp"
#include "rareq/rng.hpp"
#include "rareq/stats_core.hpp"

namespace rareq {

struct BetaShape {
  double alpha = 1.0;
  double beta = 1.0;

  [[nodiscard]] double mean() const { return alpha / (alpha + beta); }
  [[nodiscard]] double variance() const {
    const double s = alpha + beta;
    return alpha * beta / (s * s * (s + 1.0));
  }
};

struct PhiPrior {
  GaussianPrior x_eps;  // on ln X_ε
  GaussianPrior xi;     // on ξ, linear domain
  BetaShape p_u;
};

struct McmcConfig {
  int iterations = 10'000;
  int burn_in = -1;                             // negative: 20% of iterations
  std::array<double, 3> proposal_sd{0, 0, 0};   // (s_X, s_ξ, s_pu); zero entries use the default
  double proposal_scale = 0.25;                 // default sd as a multiple of the prior sd
  std::uint64_t seed = 1;
  std::optional<TailParams> init;

  [[nodiscard]] int effective_burn_in() const { return burn_in >= 0 ? burn_in : iterations / 5; }
};

struct PosteriorChain {
  std::vector<TailParams> samples;
  std::vector<std::uint8_t> accepted_mask;
  std::array<double, 3> acceptance_rates{};
  bool mixing_warning = false;  // some coordinate accepted < 1% or > 99% of proposals
};

inline PhiPrior build_phi_prior(const CdiMap& xeps_map, const CdiMap& xi_map, const Location& loc, std::size_t r,
                                std::size_t n) {
  detail::require(r >= 1 && r <= n, "need 1 <= r <= n");
  const auto x = xeps_map.predict(loc);
  const auto xi = xi_map.predict(loc);
  return {{x.mu, x.sigma2}, {xi.mu, xi.sigma2}, {static_cast<double>(r), static_cast<double>(n + 1 - r)}};
}

/// GPD log-likelihood of the deficits under φ, with σ_u implied by φ.
/// Invalid φ gives −inf; an empty deficit set gives 0.
inline double gpd_log_likelihood(const TailParams& phi, const DeficitSet& d) {
  if (d.deficits.empty()) return 0.0;
  if (!(phi.x_eps < phi.u) || !(phi.p_u > phi.epsilon) || !(phi.p_u < 1.0)) return -kInf;
  const double sigma = (phi.u - phi.x_eps) / detail::gpd_expm1_term(std::log(phi.p_u / phi.epsilon), phi.xi);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) return -kInf;
  return gpd_log_likelihood(d.deficits, {sigma, phi.xi});
}

inline double log_prior_density(const PhiPrior& prior, const TailParams& phi) {
  if (!(phi.x_eps > 0.0) || !(phi.p_u > 0.0) || !(phi.p_u < 1.0)) return -kInf;
  const double lx = std::log(phi.x_eps);
  const double zx = lx - prior.x_eps.mu;
  const double zxi = phi.xi - prior.xi.mu;
  return -lx - 0.5 * zx * zx / prior.x_eps.sigma2 - 0.5 * zxi * zxi / prior.xi.sigma2 +
         (prior.p_u.alpha - 1.0) * std::log(phi.p_u) + (prior.p_u.beta - 1.0) * std::log1p(-phi.p_u);
}

namespace detail {

inline bool tail_params_valid(const TailParams& phi) {
  if (!(phi.x_eps > 0.0) || !(phi.x_eps < phi.u) || !(phi.p_u > phi.epsilon) || !(phi.p_u < 1.0)) return false;
  const double sigma = (phi.u - phi.x_eps) / gpd_expm1_term(std::log(phi.p_u / phi.epsilon), phi.xi);
  return sigma > 0.0 && std::isfinite(sigma);
}

inline std::array<double, 3> default_proposal_sd(const PhiPrior& prior, double scale) {
  const double s2 = prior.x_eps.sigma2;
  const double lognormal_sd = std::sqrt(std::expm1(s2) * std::exp(2.0 * prior.x_eps.mu + s2));
  return {scale * lognormal_sd, scale * std::sqrt(prior.xi.sigma2), scale * std::sqrt(prior.p_u.variance())};
}

}  // namespace detail

/// Samples the posterior of φ given deficits below `u`. The X_ε walk runs in
/// the linear domain; proposals outside the support are simply rejected.
inline PosteriorChain metropolis_within_gibbs(const PhiPrior& prior, const DeficitSet& d, double u,
                                              const QuantileSpec& spec, const McmcConfig& cfg,
                                              const std::function<double()>& uniform = {}) {
  spec.validate();
  detail::require(prior.x_eps.sigma2 > 0.0 && prior.xi.sigma2 > 0.0, "prior variances must be positive");
  detail::require(prior.p_u.alpha > 0.0 && prior.p_u.beta > 0.0, "beta prior shapes must be positive");
  detail::require(u > 0.0 && std::isfinite(u), "threshold must be positive");

  auto sd = detail::default_proposal_sd(prior, cfg.proposal_scale);
  for (std::size_t i = 0; i < 3; ++i) {
    if (cfg.proposal_sd[i] > 0.0) sd[i] = cfg.proposal_sd[i];
  }

  auto to_phi = [&](const std::array<double, 3>& s) { return TailParams{s[0], s[1], s[2], u, spec.epsilon}; };
  auto log_post = [&](const std::array<double, 3>& s) {
    const auto phi = to_phi(s);
    if (!detail::tail_params_valid(phi)) return -kInf;
    const double lp = log_prior_density(prior, phi);
    if (lp == -kInf) return -kInf;
    return lp + gpd_log_likelihood(phi, d);
  };

  std::array<double, 3> init{std::exp(prior.x_eps.mu), prior.xi.mu, prior.p_u.mean()};
  if (cfg.init) init = {cfg.init->x_eps, cfg.init->xi, cfg.init->p_u};
  if (log_post(init) == -kInf) {
    // pull the start into the support: unbounded GPD tail, X_ε below u, p_u above ε
    init[1] = std::max(init[1], 0.0);
    if (!(init[0] < u) || !(init[0] > 0.0)) init[0] = 0.5 * u;
    if (!(init[2] > spec.epsilon) || !(init[2] < 1.0)) init[2] = std::min(2.0 * spec.epsilon, 0.5 * (1.0 + spec.epsilon));
    if (log_post(init) == -kInf) {
      const double y_max = d.deficits.empty() ? 0.0 : *std::max_element(d.deficits.begin(), d.deficits.end());
      init[0] = std::max(u - y_max, 0.5 * u) * 0.5;
    }
    if (log_post(init) == -kInf) throw FitError("no valid initial state for the tail posterior");
  }

  Rng rng(cfg.seed);
  const auto run = metropolis_within_gibbs<3>(log_post, init, sd, cfg.iterations, cfg.effective_burn_in(), rng, uniform);
  PosteriorChain chain;
  chain.samples.reserve(run.draws.size());
  for (const auto& s : run.draws) chain.samples.push_back(to_phi(s));
  chain.accepted_mask = run.accepted_mask;
  chain.acceptance_rates = run.acceptance;
  for (double a : run.acceptance) chain.mixing_warning = chain.mixing_warning || a < 0.01 || a > 0.99;
  return chain;
}

/// X_ε,(⌈pT'⌉) over the retained draws.
inline double chain_quantile(const PosteriorChain& chain, double p) {
  detail::require(!chain.samples.empty(), "chain is empty");
  detail::require(p > 0.0 && p <= 1.0, "p must lie in (0,1]");
  std::vector<double> x;
  x.reserve(chain.samples.size());
  for (const auto& s : chain.samples) x.push_back(s.x_eps);
  const auto r = std::clamp<std::size_t>(ceil_rank(x.size(), p), 1, x.size());
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(r - 1), x.end());
  return x[r - 1];
}

inline void write_chain_csv(std::ostream& out, const PosteriorChain& chain) {
  out << "iter,x_eps,xi,p_u,accepted_coord\n";
  for (std::size_t i = 0; i < chain.samples.size(); ++i) {
    const auto& s = chain.samples[i];
    out << i << ',' << format_double(s.x_eps) << ',' << format_double(s.xi) << ',' << format_double(s.p_u) << ','
        << static_cast<int>(chain.accepted_mask[i]) << '\n';
  }
}

struct EvtBayesOptions {
  Sided sided = Sided::one;
  double zeta = 0.1;
  std::size_t r_min = 50;
};

struct EvtBayesResult {
  ConfidenceInterval interval;
  bool prior_only = false;
  Threshold threshold;
  PosteriorChain chain;
};

/// End-to-end estimate from an explicit base prior on (ln X_ε, ξ). The p_u
/// prior is Beta(r, n+1−r) from the threshold actually selected.
inline EvtBayesResult infer_evt_bayes(const GaussianPrior& x_eps_prior, const GaussianPrior& xi_prior,
                                      const SampleSet& local, const QuantileSpec& spec, const McmcConfig& cfg,
                                      const EvtBayesOptions& opt = {}) {
  spec.validate();
  EvtBayesResult out;
  auto prior_only = [&] {
    out.prior_only = true;
    out.interval = prior_interval(x_eps_prior, spec.delta, opt.sided);
    return out;
  };
  if (local.empty()) return prior_only();
  try {
    out.threshold = select_threshold(local, opt.zeta, opt.r_min);
  } catch (const InsufficientSamples&) {
    return prior_only();
  }
  const auto n = local.size();
  const PhiPrior prior{x_eps_prior, xi_prior,
                       {static_cast<double>(out.threshold.r), static_cast<double>(n + 1 - out.threshold.r)}};
  const auto d = compute_deficits(local, out.threshold.u);
  out.chain = metropolis_within_gibbs(prior, d, out.threshold.u, spec, cfg);
  if (opt.sided == Sided::one) {
    out.interval = make_interval(chain_quantile(out.chain, spec.delta), kInf, 1.0 - spec.delta, opt.sided);
  } else {
    out.interval = make_interval(chain_quantile(out.chain, 0.5 * spec.delta),
                                 chain_quantile(out.chain, 1.0 - 0.5 * spec.delta), 1.0 - spec.delta, opt.sided);
  }
  return out;
}

inline EvtBayesResult infer_evt_bayes(const CdiMap& xeps_map, const CdiMap& xi_map, const Location& loc,
                                      const SampleSet& local, const QuantileSpec& spec, const McmcConfig& cfg,
                                      const EvtBayesOptions& opt = {}) {
  const auto x = xeps_map.predict(loc);
  const auto xi = xi_map.predict(loc);
  return infer_evt_bayes({x.mu, x.sigma2}, {xi.mu, xi.sigma2}, local, spec, cfg, opt);
}

}  // namespace rareq
