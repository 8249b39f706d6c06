#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sovdebt/equilibrium.hpp"
#include "sovdebt/solver_portfolio.hpp"

namespace sovdebt {

// Binary snapshot of a solve: the surfaces needed to reseed any solver on the
// same grids, or to re-interpolate onto new ones. Fixed layout, eight-byte
// magic, version field, every float a little-endian 64-bit double.
inline constexpr char k_checkpoint_magic[8] = {'S', 'D', 'E', 'Q', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t k_checkpoint_version = 1;

struct CheckpointData {
  SolverKind kind = SolverKind::dss;
  Scheme scheme = Scheme::linear;
  ModelParams params;
  TasteParams taste;
  bool converged = false;
  int iterations = 0;
  double final_sup_norm = 0.0;

  // One-asset payload, populated unless kind == portfolio.
  std::vector<double> b_grid;
  IncomeGrid income;
  OneAssetInit one_asset;

  // Portfolio payload.
  double a_cap = 0.0;
  PortfolioMethod method = PortfolioMethod::bobyqa;
  std::vector<double> a_grid;
  PortfolioInit portfolio;
};

void save_checkpoint(const std::string& path, const Equilibrium& eq);
void save_checkpoint(const std::string& path, const PortfolioEquilibrium& eq);

// Throws std::runtime_error on a missing file, foreign magic, unsupported
// version, or truncated payload.
CheckpointData load_checkpoint(const std::string& path);

}  // namespace sovdebt
