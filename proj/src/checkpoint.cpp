#include "sovdebt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <utility>

namespace sovdebt {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double x) {
  std::uint64_t v;
  std::memcpy(&v, &x, sizeof v);
  put_u64(out, v);
}

void put_array(std::string& out, const double* data, std::size_t n) {
  put_u64(out, n);
  for (std::size_t i = 0; i < n; ++i) put_f64(out, data[i]);
}

void put_array(std::string& out, const std::vector<double>& v) { put_array(out, v.data(), v.size()); }

void put_common(std::string& out, const ModelParams& p, const TasteParams& taste, Scheme scheme) {
  for (double x : {p.gamma, p.r, p.beta, p.psi, p.delta, p.z, p.kappa, p.d0, p.d1}) put_f64(out, x);
  put_u32(out, p.formulation == Formulation::ce ? 0u : 1u);
  for (double x : {p.ar1.rho, p.ar1.sigma_eps, p.ar1.mu}) put_f64(out, x);
  put_f64(out, taste.sigma_default);
  put_f64(out, taste.sigma_debt);
  put_u32(out, static_cast<std::uint32_t>(scheme));
}

void put_status(std::string& out, const ConvergenceStatus& s) {
  put_u32(out, s.converged ? 1u : 0u);
  put_u32(out, static_cast<std::uint32_t>(s.iterations));
  put_f64(out, s.final_sup_norm);
}

void write_file(const std::string& path, const std::string& payload) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!f) throw std::runtime_error("checkpoint: short write to " + path);
}

struct Cursor {
  const unsigned char* p;
  const unsigned char* end;

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - p) < n)
      throw std::runtime_error("checkpoint: truncated payload");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  double f64() {
    std::uint64_t v = u64();
    double x;
    std::memcpy(&x, &v, sizeof x);
    return x;
  }
  std::vector<double> array(std::size_t expected) {
    std::uint64_t n = u64();
    if (expected != static_cast<std::size_t>(-1) && n != expected)
      throw std::runtime_error("checkpoint: array length does not match the stored dimensions");
    need(static_cast<std::size_t>(n) * 8);
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& x : out) x = f64();
    return out;
  }

  // Optional payload block: either absent (length zero) or exactly expected.
  std::vector<double> array_optional(std::size_t expected) {
    std::uint64_t n = u64();
    if (n != 0 && n != expected)
      throw std::runtime_error("checkpoint: array length does not match the stored dimensions");
    need(static_cast<std::size_t>(n) * 8);
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& x : out) x = f64();
    return out;
  }
};

void get_common(Cursor& c, CheckpointData& d) {
  d.params.gamma = c.f64();
  d.params.r = c.f64();
  d.params.beta = c.f64();
  d.params.psi = c.f64();
  d.params.delta = c.f64();
  d.params.z = c.f64();
  d.params.kappa = c.f64();
  d.params.d0 = c.f64();
  d.params.d1 = c.f64();
  d.params.formulation = c.u32() == 0 ? Formulation::ce : Formulation::hm;
  d.params.ar1.rho = c.f64();
  d.params.ar1.sigma_eps = c.f64();
  d.params.ar1.mu = c.f64();
  d.taste.sigma_default = c.f64();
  d.taste.sigma_debt = c.f64();
  d.scheme = static_cast<Scheme>(c.u32());
}

}  // namespace

void save_checkpoint(const std::string& path, const Equilibrium& eq) {
  std::string out;
  out.append(k_checkpoint_magic, sizeof k_checkpoint_magic);
  put_u32(out, k_checkpoint_version);
  put_u32(out, static_cast<std::uint32_t>(eq.kind));
  put_common(out, eq.params, eq.taste, eq.scheme);
  const std::size_t nb = eq.b_grid.size(), ny = eq.income.nodes.size();
  put_u32(out, static_cast<std::uint32_t>(nb));
  put_u32(out, static_cast<std::uint32_t>(ny));
  put_array(out, eq.b_grid);
  put_array(out, eq.income.nodes);
  put_array(out, eq.income.transition);
  put_array(out, eq.v_repay.v);
  put_array(out, eq.v_default);
  put_array(out, eq.price.v);
  put_array(out, eq.debt_policy.v);
  put_status(out, eq.status);
  write_file(path, out);
}

void save_checkpoint(const std::string& path, const PortfolioEquilibrium& eq) {
  std::string out;
  out.append(k_checkpoint_magic, sizeof k_checkpoint_magic);
  put_u32(out, k_checkpoint_version);
  put_u32(out, static_cast<std::uint32_t>(SolverKind::portfolio));
  put_common(out, eq.params, eq.taste, eq.scheme);
  put_f64(out, eq.a_cap);
  put_u32(out, static_cast<std::uint32_t>(eq.method));
  const std::size_t nb = eq.b_grid.size(), na = eq.a_grid.size(), ny = eq.income.nodes.size();
  put_u32(out, static_cast<std::uint32_t>(nb));
  put_u32(out, static_cast<std::uint32_t>(na));
  put_u32(out, static_cast<std::uint32_t>(ny));
  put_array(out, eq.b_grid);
  put_array(out, eq.a_grid);
  put_array(out, eq.income.nodes);
  put_array(out, eq.income.transition);
  put_array(out, eq.v_repay.v);
  put_array(out, eq.v_default.v);
  put_array(out, eq.price.v);
  put_array(out, eq.policy_b.v);
  put_array(out, eq.policy_a.v);
  put_status(out, eq.status);
  write_file(path, out);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Cursor c{reinterpret_cast<const unsigned char*>(raw.data()),
           reinterpret_cast<const unsigned char*>(raw.data()) + raw.size()};

  c.need(sizeof k_checkpoint_magic);
  if (std::memcmp(c.p, k_checkpoint_magic, sizeof k_checkpoint_magic) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
  c.p += sizeof k_checkpoint_magic;
  std::uint32_t version = c.u32();
  if (version != k_checkpoint_version)
    throw std::runtime_error("checkpoint: unsupported version in " + path);

  CheckpointData d;
  d.kind = static_cast<SolverKind>(c.u32());
  get_common(c, d);

  if (d.kind == SolverKind::portfolio) {
    d.a_cap = c.f64();
    d.method = static_cast<PortfolioMethod>(c.u32());
    std::size_t nb = c.u32(), na = c.u32(), ny = c.u32();
    d.b_grid = c.array(nb);
    d.a_grid = c.array(na);
    d.income.nodes = c.array(ny);
    d.income.transition = c.array(static_cast<std::size_t>(-1));
    if (!d.income.transition.empty() && d.income.transition.size() != ny * ny)
      throw std::runtime_error("checkpoint: transition block has the wrong size");
    d.portfolio.v_repay = Grid3<double>(static_cast<int>(ny), static_cast<int>(na),
                                        static_cast<int>(nb));
    d.portfolio.v_repay.v = c.array(ny * na * nb);
    d.portfolio.v_default = Grid2<double>(static_cast<int>(ny), static_cast<int>(na));
    d.portfolio.v_default.v = c.array(ny * na);
    d.portfolio.price = Grid3<double>(static_cast<int>(ny), static_cast<int>(na),
                                      static_cast<int>(nb));
    d.portfolio.price.v = c.array(ny * na * nb);
    std::vector<double> pb = c.array_optional(ny * na * nb);
    if (!pb.empty()) {
      d.portfolio.policy_b = Grid3<double>(static_cast<int>(ny), static_cast<int>(na),
                                           static_cast<int>(nb));
      d.portfolio.policy_b.v = std::move(pb);
    }
    std::vector<double> pa = c.array_optional(ny * na * nb);
    if (!pa.empty()) {
      d.portfolio.policy_a = Grid3<double>(static_cast<int>(ny), static_cast<int>(na),
                                           static_cast<int>(nb));
      d.portfolio.policy_a.v = std::move(pa);
    }
  } else {
    std::size_t nb = c.u32(), ny = c.u32();
    d.b_grid = c.array(nb);
    d.income.nodes = c.array(ny);
    d.income.transition = c.array(static_cast<std::size_t>(-1));
    if (!d.income.transition.empty() && d.income.transition.size() != ny * ny)
      throw std::runtime_error("checkpoint: transition block has the wrong size");
    d.one_asset.v_repay = Grid2<double>(static_cast<int>(ny), static_cast<int>(nb));
    d.one_asset.v_repay.v = c.array(ny * nb);
    d.one_asset.v_default = c.array(ny);
    d.one_asset.price = Grid2<double>(static_cast<int>(ny), static_cast<int>(nb));
    d.one_asset.price.v = c.array(ny * nb);
    std::vector<double> pol = c.array_optional(ny * nb);
    if (!pol.empty()) {
      d.one_asset.debt_policy = Grid2<double>(static_cast<int>(ny), static_cast<int>(nb));
      d.one_asset.debt_policy.v = std::move(pol);
    }
  }
  d.converged = c.u32() != 0;
  d.iterations = static_cast<int>(c.u32());
  d.final_sup_norm = c.f64();
  return d;
}

}  // namespace sovdebt
