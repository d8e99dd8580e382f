#pragma once

// Umbrella header for the header-only engine.

#include "mheat/types.hpp"
#include "mheat/manifold.hpp"
#include "mheat/fields.hpp"
#include "mheat/differential.hpp"
#include "mheat/curvature.hpp"
#include "mheat/rng.hpp"
#include "mheat/montecarlo.hpp"
#include "mheat/transport.hpp"
#include "mheat/semigroup.hpp"
#include "mheat/oracle.hpp"
#include "mheat/verify.hpp"
#include "mheat/spectral.hpp"
