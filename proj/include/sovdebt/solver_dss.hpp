#pragma once

#include "sovdebt/equilibrium.hpp"

namespace sovdebt {

// Value iteration on the discrete state space: the debt choice is an exact
// argmax over grid points, default is the indicator v_default > v_repay, and
// all updates read only the previous iterate. With long-duration bonds this
// map has no contraction guarantee through the price, so the iteration is
// expected to cycle rather than converge at fine grids; the terminal iterate
// and sup-norm history are returned either way.
Equilibrium solve_dss(const ModelParams& p, const OneAssetGrids& g, double tol = 1e-6,
                      int max_iter = 2000, const OneAssetInit* init = nullptr);

}  // namespace sovdebt
