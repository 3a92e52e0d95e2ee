#pragma once

// Non-parametric Bayesian quantile estimate. In the log domain the empirical
// quantile is asymptotically normal around Y_ε, so a Gaussian CDI-map prior
// gives a Gaussian posterior in closed form.

#include <algorithm>
#include <cmath>

#include "rareq/channel_sim.hpp"
#include "rareq/errors.hpp"
#include "rareq/gp_map.hpp"
#include "rareq/stats_core.hpp"

namespace rareq {

struct GaussianPrior {
  double mu = 0.0;
  double sigma2 = 1.0;
};

struct GaussianPosterior {
  double mu_post = 0.0;
  double sigma2_post = 1.0;
};

/// σ_n² = ε(1−ε)/(n f²), the asymptotic variance of the empirical quantile.
inline double likelihood_variance(std::size_t n, double epsilon, double f_y_at_quantile) {
  detail::require(n >= 1, "likelihood variance needs n >= 1");
  detail::require(f_y_at_quantile > 0.0 && std::isfinite(f_y_at_quantile), "density at the quantile must be positive");
  return epsilon * (1.0 - epsilon) / (static_cast<double>(n) * f_y_at_quantile * f_y_at_quantile);
}

inline GaussianPosterior posterior_update(const GaussianPrior& prior, double y_hat, double sigma_n2) {
  detail::require(sigma_n2 > 0.0, "likelihood variance must be positive");
  detail::require(prior.sigma2 > 0.0, "prior variance must be positive");
  const double total = sigma_n2 + prior.sigma2;
  return {(sigma_n2 * prior.mu + prior.sigma2 * y_hat) / total, sigma_n2 * prior.sigma2 / total};
}

/// Log-normal interval: [exp(μ + σΦ⁻¹(δ)), ∞) or the central 1−δ interval.
inline ConfidenceInterval posterior_interval(const GaussianPosterior& post, double delta, Sided sided) {
  detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
  const double sd = std::sqrt(post.sigma2_post);
  if (sided == Sided::one) {
    return make_interval(std::exp(post.mu_post + sd * normal_inv_cdf(delta)), kInf, 1.0 - delta, sided);
  }
  const double z = normal_inv_cdf(1.0 - 0.5 * delta);
  return make_interval(std::exp(post.mu_post - sd * z), std::exp(post.mu_post + sd * z), 1.0 - delta, sided);
}

inline ConfidenceInterval prior_interval(const GaussianPrior& prior, double delta, Sided sided) {
  return posterior_interval({prior.mu, prior.sigma2}, delta, sided);
}

struct NonparBayesOptions {
  Sided sided = Sided::one;
  double density_floor = 1e-6;
};

struct NonparBayesResult {
  ConfidenceInterval interval;
  GaussianPosterior posterior;
  bool prior_only = false;
  bool density_floored = false;
};

/// End-to-end estimate at `loc`. The density map predicts ln f_Y(Y_ε) when it
/// is log-domain, f_Y directly otherwise.
inline NonparBayesResult infer_nonpar_bayes(const GaussianPrior& prior, const SampleSet& local,
                                            const QuantileSpec& spec, const CdiMap& density_map, const Location& loc,
                                            const NonparBayesOptions& opt = {}) {
  spec.validate();
  NonparBayesResult out;
  if (local.empty()) {
    out.prior_only = true;
    out.posterior = {prior.mu, prior.sigma2};
    out.interval = posterior_interval(out.posterior, spec.delta, opt.sided);
    return out;
  }
  const double pred = density_map.predict(loc).mu;
  double f = density_map.log_domain() ? std::exp(pred) : pred;
  if (!(f > opt.density_floor) || !std::isfinite(f)) {
    out.density_floored = !(f > opt.density_floor);
    f = std::isfinite(f) ? opt.density_floor : 1.0 / opt.density_floor;
  }
  const double y_hat = estimate_theta_quantile(local, spec.epsilon);
  out.posterior = posterior_update(prior, y_hat, likelihood_variance(local.size(), spec.epsilon, f));
  out.interval = posterior_interval(out.posterior, spec.delta, opt.sided);
  return out;
}

}  // namespace rareq
