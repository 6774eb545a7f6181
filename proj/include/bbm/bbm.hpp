// Umbrella header for the bbm library.
#pragma once

#include "special.hpp"
#include "rng.hpp"
#include "kernels.hpp"
#include "measures.hpp"
#include "volterra.hpp"
#include "spectral.hpp"
#include "fronts.hpp"
#include "simulator.hpp"
#include "stats.hpp"
#include "config.hpp"
#include "experiment.hpp"
