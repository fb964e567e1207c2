#ifndef COLIQ_COLIQ_HPP
#define COLIQ_COLIQ_HPP

// Umbrella header: the full liquidation engine.
//
// params    - model parameters and market state
// rng       - seed derivation and normal sampling
// simulate  - exact path stepping and the path simulator
// closedform- g3 / g2 coefficients, optimal policy, value pieces
// bench     - benchmark policies, comparison and robustness harnesses
// fbsde     - tape autodiff, network, training and the network policy
// runconfig - strict JSON run configuration
// serialize - CSV/JSON exports

#include "coliq/bench.hpp"
#include "coliq/closedform.hpp"
#include "coliq/fbsde.hpp"
#include "coliq/math.hpp"
#include "coliq/parallel.hpp"
#include "coliq/params.hpp"
#include "coliq/policy.hpp"
#include "coliq/quadrature.hpp"
#include "coliq/rng.hpp"
#include "coliq/runconfig.hpp"
#include "coliq/serialize.hpp"
#include "coliq/simulate.hpp"

#endif
