#pragma once

#include "rareq/baselines.hpp"
#include "rareq/bayes_evt.hpp"
#include "rareq/bayes_nonpar.hpp"
#include "rareq/channel_sim.hpp"
#include "rareq/config.hpp"
#include "rareq/dataset_io.hpp"
#include "rareq/errors.hpp"
#include "rareq/evt_core.hpp"
#include "rareq/gp_map.hpp"
#include "rareq/harness.hpp"
#include "rareq/mcmc.hpp"
#include "rareq/optimize.hpp"
#include "rareq/rng.hpp"
#include "rareq/stats_core.hpp"
