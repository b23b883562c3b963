#pragma once

#include "dexsim/types.hpp"
#include "dexsim/physics.hpp"
#include "dexsim/pulses.hpp"
#include "dexsim/ode.hpp"
#include "dexsim/lindblad.hpp"
#include "dexsim/rng.hpp"
#include "dexsim/clickstream.hpp"
#include "dexsim/trajectory.hpp"
#include "dexsim/photonics.hpp"
#include "dexsim/fit.hpp"
#include "dexsim/saturation.hpp"
#include "dexsim/seqlang.hpp"
#include "dexsim/presets.hpp"
