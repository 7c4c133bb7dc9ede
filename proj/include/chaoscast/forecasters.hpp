#pragma once

#include "chaoscast/forecasters/baselines.hpp"
#include "chaoscast/forecasters/esn.hpp"
#include "chaoscast/forecasters/forecaster.hpp"
#include "chaoscast/forecasters/method_config.hpp"
#include "chaoscast/forecasters/propagator.hpp"
#include "chaoscast/forecasters/registry.hpp"
#include "chaoscast/forecasters/smoothers.hpp"
