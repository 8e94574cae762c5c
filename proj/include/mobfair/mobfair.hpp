#pragma once

#include "mobfair/domain.hpp"
#include "mobfair/experiment.hpp"
#include "mobfair/features.hpp"
#include "mobfair/metrics.hpp"
#include "mobfair/predictor.hpp"
#include "mobfair/rng.hpp"
#include "mobfair/run_config.hpp"
#include "mobfair/sampling.hpp"
#include "mobfair/size_aware_kmeans.hpp"
#include "mobfair/synth.hpp"
#include "mobfair/world_io.hpp"
