#pragma once

// Umbrella header.
#include "mfope/behavior.hpp"
#include "mfope/bench.hpp"
#include "mfope/error.hpp"
#include "mfope/estimators.hpp"
#include "mfope/features.hpp"
#include "mfope/ground_truth.hpp"
#include "mfope/kernel.hpp"
#include "mfope/mlp.hpp"
#include "mfope/parallel.hpp"
#include "mfope/q_estimator.hpp"
#include "mfope/ratio.hpp"
#include "mfope/rng.hpp"
#include "mfope/simulator.hpp"
#include "mfope/stats.hpp"
#include "mfope/topology.hpp"
#include "mfope/trajectory_io.hpp"
