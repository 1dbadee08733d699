#pragma once

// Umbrella header for the whole library.

#include "perfmodel/arch.hpp"
#include "perfmodel/commands.hpp"
#include "perfmodel/cross_validation.hpp"
#include "perfmodel/dataset.hpp"
#include "perfmodel/epr.hpp"
#include "perfmodel/error.hpp"
#include "perfmodel/features.hpp"
#include "perfmodel/json_util.hpp"
#include "perfmodel/lasso.hpp"
#include "perfmodel/layer_model.hpp"
#include "perfmodel/metrics.hpp"
#include "perfmodel/network.hpp"
#include "perfmodel/random.hpp"
#include "perfmodel/synth.hpp"
