#pragma once

// Umbrella header for the thermolab library: thermostatted-oscillator vector
// fields and their averaged forms, reversible splitting integrators, Poincare
// sections and return-map analysis, ergodicity diagnostics, and the
// experiment catalog.

#include "analysis.hpp"
#include "dynamics.hpp"
#include "ergodicity.hpp"
#include "experiments.hpp"
#include "integrators.hpp"
#include "sections.hpp"
#include "states.hpp"
