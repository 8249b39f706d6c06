#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sovdebt/checkpoint.hpp"

using namespace sovdebt;

namespace {

std::filesystem::path temp_file(const char* stem) {
  return std::filesystem::temp_directory_path() / stem;
}

Equilibrium small_one_asset() {
  Equilibrium eq;
  eq.kind = SolverKind::taste;
  eq.scheme = Scheme::linear;
  eq.params.z = 0.025;
  eq.params.beta = 0.91;
  eq.params.ar1.rho = 0.9;
  eq.params.ar1.sigma_eps = 0.02;
  eq.params.ar1.mu = -0.0002;
  eq.taste.sigma_default = 0.001;
  eq.taste.sigma_debt = 0.0475;
  eq.b_grid = {0.0, 0.25, 0.5, 1.0};
  eq.income.nodes = {0.9, 1.0, 1.1};
  eq.income.transition = {0.8, 0.15, 0.05, 0.1, 0.8, 0.1, 0.05, 0.15, 0.8};
  int ny = 3, nb = 4;
  eq.v_repay = Grid2<double>(ny, nb);
  eq.price = Grid2<double>(ny, nb);
  eq.debt_policy = Grid2<double>(ny, nb);
  eq.v_default.resize(ny);
  for (int i = 0; i < ny; ++i) {
    eq.v_default[i] = -1.0 - 0.1 * i;
    for (int j = 0; j < nb; ++j) {
      eq.v_repay(i, j) = -1.0 + 0.01 * i - 0.02 * j;
      eq.price(i, j) = 1.3 - 0.05 * j + 0.001 * i;
      eq.debt_policy(i, j) = eq.b_grid[(i + j) % nb];
    }
  }
  eq.status.converged = true;
  eq.status.iterations = 321;
  eq.status.final_sup_norm = 7.75e-7;
  return eq;
}

PortfolioEquilibrium small_portfolio() {
  PortfolioEquilibrium eq;
  eq.params.beta = 0.93;
  eq.params.ar1.rho = 0.9;
  eq.params.ar1.sigma_eps = 0.02;
  eq.params.ar1.mu = -0.0002;
  eq.a_cap = 0.1;
  eq.method = PortfolioMethod::powell;
  eq.scheme = Scheme::linear;
  eq.b_grid = {0.0, 0.5, 1.0};
  eq.a_grid = {0.0, 0.05, 0.1};
  eq.income.nodes = {0.95, 1.05};
  int ny = 2, na = 3, nb = 3;
  eq.v_repay = Grid3<double>(ny, na, nb);
  eq.price = Grid3<double>(ny, na, nb);
  eq.policy_b = Grid3<double>(ny, na, nb);
  eq.policy_a = Grid3<double>(ny, na, nb);
  eq.v_default = Grid2<double>(ny, na);
  for (int i = 0; i < ny; ++i) {
    for (int a = 0; a < na; ++a) {
      eq.v_default(i, a) = -2.0 + 0.1 * i - 0.01 * a;
      for (int j = 0; j < nb; ++j) {
        eq.v_repay(i, a, j) = -1.0 + 0.1 * i - 0.01 * a - 0.001 * j;
        eq.price(i, a, j) = 1.2 - 0.01 * j;
        eq.policy_b(i, a, j) = eq.b_grid[j];
        eq.policy_a(i, a, j) = eq.a_grid[a];
      }
    }
  }
  eq.status.converged = false;
  eq.status.iterations = 400;
  eq.status.final_sup_norm = 3.25e-3;
  return eq;
}

}  // namespace

TEST_CASE("one-asset checkpoint round-trips bitwise") {
  Equilibrium eq = small_one_asset();
  auto path = temp_file("sovdebt_ckpt_one.bin");
  save_checkpoint(path.string(), eq);
  CheckpointData d = load_checkpoint(path.string());

  CHECK(d.kind == SolverKind::taste);
  CHECK(d.scheme == Scheme::linear);
  CHECK(d.params.z == eq.params.z);
  CHECK(d.params.beta == eq.params.beta);
  CHECK(d.params.ar1.rho == eq.params.ar1.rho);
  CHECK(d.taste.sigma_default == eq.taste.sigma_default);
  CHECK(d.taste.sigma_debt == eq.taste.sigma_debt);
  CHECK(d.converged == true);
  CHECK(d.iterations == 321);
  CHECK(d.final_sup_norm == eq.status.final_sup_norm);

  CHECK(d.b_grid == eq.b_grid);
  CHECK(d.income.nodes == eq.income.nodes);
  CHECK(d.income.transition == eq.income.transition);
  CHECK(d.one_asset.v_repay.v == eq.v_repay.v);
  CHECK(d.one_asset.v_default == eq.v_default);
  CHECK(d.one_asset.price.v == eq.price.v);
  CHECK(d.one_asset.debt_policy.v == eq.debt_policy.v);
  CHECK(d.one_asset.v_repay.n0 == 3);
  CHECK(d.one_asset.v_repay.n1 == 4);
  std::filesystem::remove(path);
}

TEST_CASE("portfolio checkpoint round-trips bitwise") {
  PortfolioEquilibrium eq = small_portfolio();
  auto path = temp_file("sovdebt_ckpt_port.bin");
  save_checkpoint(path.string(), eq);
  CheckpointData d = load_checkpoint(path.string());

  CHECK(d.kind == SolverKind::portfolio);
  CHECK(d.a_cap == eq.a_cap);
  CHECK(d.method == PortfolioMethod::powell);
  CHECK(d.converged == false);
  CHECK(d.iterations == 400);
  CHECK(d.b_grid == eq.b_grid);
  CHECK(d.a_grid == eq.a_grid);
  CHECK(d.income.nodes == eq.income.nodes);
  CHECK(d.portfolio.v_repay.v == eq.v_repay.v);
  CHECK(d.portfolio.v_default.v == eq.v_default.v);
  CHECK(d.portfolio.price.v == eq.price.v);
  CHECK(d.portfolio.policy_b.v == eq.policy_b.v);
  CHECK(d.portfolio.policy_a.v == eq.policy_a.v);
  CHECK(d.portfolio.v_repay.n0 == 2);
  CHECK(d.portfolio.v_repay.n1 == 3);
  CHECK(d.portfolio.v_repay.n2 == 3);
  std::filesystem::remove(path);
}

TEST_CASE("loading rejects missing and corrupt files") {
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/ckpt.bin"), std::runtime_error);

  Equilibrium eq = small_one_asset();
  auto path = temp_file("sovdebt_ckpt_bad.bin");
  save_checkpoint(path.string(), eq);

  // foreign magic
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("WRONGMAG", 8);
  }
  CHECK_THROWS_AS(load_checkpoint(path.string()), std::runtime_error);

  // unsupported version
  save_checkpoint(path.string(), eq);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    std::uint32_t v = 99;
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_AS(load_checkpoint(path.string()), std::runtime_error);

  // truncation at several depths
  save_checkpoint(path.string(), eq);
  auto full_size = std::filesystem::file_size(path);
  for (std::uintmax_t keep : {full_size / 2, full_size - 5, std::uintmax_t{10}}) {
    std::filesystem::resize_file(path, keep);
    CHECK_THROWS_AS(load_checkpoint(path.string()), std::runtime_error);
    save_checkpoint(path.string(), eq);
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoints survive an empty transition and empty policy") {
  Equilibrium eq = small_one_asset();
  eq.income.transition.clear();  // interp-style grids carry no chain
  eq.debt_policy = Grid2<double>();
  auto path = temp_file("sovdebt_ckpt_sparse.bin");
  save_checkpoint(path.string(), eq);
  CheckpointData d = load_checkpoint(path.string());
  CHECK(d.income.transition.empty());
  CHECK(d.one_asset.debt_policy.v.empty());
  CHECK(d.one_asset.v_repay.v == eq.v_repay.v);
  std::filesystem::remove(path);
}
