#pragma once

#include "redqueen/common.hpp"
#include "redqueen/control_baselines.hpp"
#include "redqueen/control_online.hpp"
#include "redqueen/control_oracle.hpp"
#include "redqueen/data_io.hpp"
#include "redqueen/experiments.hpp"
#include "redqueen/feed_sim.hpp"
#include "redqueen/metrics.hpp"
#include "redqueen/parallel.hpp"
#include "redqueen/point_process.hpp"
#include "redqueen/random.hpp"
#include "redqueen/significance.hpp"
