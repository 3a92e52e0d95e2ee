#pragma once

// Metropolis-within-Gibbs with Gaussian random-walk proposals, one coordinate
// at a time. The uniform source is injectable so the accept rule can be
// exercised deterministically.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "rareq/errors.hpp"
#include "rareq/rng.hpp"
#include "rareq/stats_core.hpp"

namespace rareq {

template <std::size_t D>
struct MwgRun {
  std::vector<std::array<double, D>> draws;  // post burn-in
  std::vector<std::uint8_t> accepted_mask;   // bit i set when coordinate i moved
  std::array<double, D> acceptance{};        // over all T iterations
};

/// Runs T sweeps and keeps the last T − burn_in states. `log_target` is the
/// unnormalized log posterior; −inf marks states outside the support, which
/// are never entered. A proposal is accepted when U ≤ A, A the posterior ratio.
template <std::size_t D, class LogTarget>
MwgRun<D> metropolis_within_gibbs(LogTarget&& log_target, std::array<double, D> state,
                                  const std::array<double, D>& proposal_sd, int iterations, int burn_in, Rng& rng,
                                  const std::function<double()>& uniform = {}) {
  static_assert(D <= 8, "accepted_mask holds at most 8 coordinates");
  detail::require(iterations > burn_in && burn_in >= 0, "need iterations > burn_in >= 0");
  for (double s : proposal_sd) detail::require(s > 0.0 && std::isfinite(s), "proposal sds must be positive");
  double current = log_target(state);
  detail::require(current > -kInf, "initial state has zero posterior density");

  MwgRun<D> run;
  run.draws.reserve(static_cast<std::size_t>(iterations - burn_in));
  run.accepted_mask.reserve(static_cast<std::size_t>(iterations - burn_in));
  std::array<long, D> accepted{};
  for (int t = 0; t < iterations; ++t) {
    std::uint8_t mask = 0;
    for (std::size_t i = 0; i < D; ++i) {
      const double old = state[i];
      state[i] = old + proposal_sd[i] * standard_normal(rng);
      const double proposed = log_target(state);
      const double u = uniform ? uniform() : uniform01(rng);
      if (proposed > -kInf && std::log(u) <= proposed - current) {
        current = proposed;
        ++accepted[i];
        mask |= static_cast<std::uint8_t>(1u << i);
      } else {
        state[i] = old;
      }
    }
    if (t >= burn_in) {
      run.draws.push_back(state);
      run.accepted_mask.push_back(mask);
    }
  }
  for (std::size_t i = 0; i < D; ++i) run.acceptance[i] = static_cast<double>(accepted[i]) / iterations;
  return run;
}

}  // namespace rareq
