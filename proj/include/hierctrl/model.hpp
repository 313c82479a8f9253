// The hierarchic control problem: grid, operators, regions, coefficients,
// follower functionals, targets, initial data and Carleman weights, bundled
// as immutable data shared by the nash, leader and analysis modules.

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hierctrl/krylov.hpp"
#include "hierctrl/mesh.hpp"
#include "hierctrl/pde.hpp"
#include "hierctrl/weights.hpp"

namespace hierctrl {

struct SolverOptions {
  pde::CoupledOptions coupled;
  krylov::GmresOptions gmres;
  krylov::CgOptions cg{1e-10, 400};
  krylov::PowerOptions power{1e-8, 20000, 7};
  double mu_auto_factor = 2.0;  // μ_i = factor × coercivity threshold when "auto"
};

struct ProblemConfig {
  int dim = 1;
  int n_x = 31;
  int n_t = 40;
  double horizon = 1.0;
  mesh::Box domain{};

  mesh::Box omega{{0.3, 0.3}, {0.7, 0.7}};
  mesh::Box omega1{{0.05, 0.05}, {0.2, 0.2}};
  mesh::Box omega2{{0.8, 0.8}, {0.95, 0.95}};
  mesh::Box observation{{0.25, 0.25}, {0.75, 0.75}};
  mesh::Box omega_prime{{0.45, 0.45}, {0.55, 0.55}};

  // (x, y, t); y is ignored in 1-D.
  pde::ScalarFn a11, a12, a21, a22;
  std::array<double, 2> alpha{1.0, 1.0};
  std::array<std::optional<double>, 2> mu{};  // empty means automatic
  std::array<std::array<pde::ScalarFn, 2>, 2> target;  // [follower][component]
  std::array<pde::ScalarFn, 2> initial;                // t is passed as 0

  weights::CarlemanParams carleman{2.0, 1.0};
  double eta_max = 0.25;
  double c0_target = 0.0;

  SolverOptions solver;
  std::uint64_t seed = 1;

  /// Benchmark coefficients a11 = a22 = 0.5, a12 = 0.2, a21 = 1 and zero data.
  static ProblemConfig benchmark();
};

struct HierarchicProblem {
  mesh::SpaceTimeGrid grid;
  mesh::SparseOperator laplacian, bilaplacian;
  mesh::RegionMask omega, omega1, omega2, observation, omega_prime;

  pde::CoefficientField coefficients;
  std::shared_ptr<const pde::Propagator> propagator;
  pde::SignCertificate sign;

  std::array<double, 2> alpha{1.0, 1.0};
  std::array<double, 2> mu{1.0, 1.0};
  std::array<bool, 2> mu_auto{false, false};
  std::array<double, 2> mu_threshold{0.0, 0.0};  // coercivity lower bounds for μ_i
  double tau = 0.0;                               // coercivity constant at the chosen μ
  std::array<pde::TwoComponentState, 2> target;  // y_d^i on every level
  mesh::Vector initial1, initial2;

  weights::EtaFunction eta;
  weights::CarlemanWeights weights;
  std::vector<double> rho_inv2;  // ρ*^{-2} per level, 0 at t ∈ {0, T}

  SolverOptions solver;
  std::uint64_t seed = 1;
  std::vector<std::string> warnings;

  const mesh::RegionMask& follower_mask(int i) const { return i == 0 ? omega1 : omega2; }
  bool observation_meets_omega() const;
};

/// Validates regions (ω_i ∩ ω = ∅ and ω′ inside ω are errors, O_d ∩ ω = ∅
/// and a failed sign certificate are warnings) and builds all derived data.
/// Automatic μ_i are resolved by nash::resolve_automatic_mu, which this
/// function calls.
HierarchicProblem build_problem(const ProblemConfig& config);

}  // namespace hierctrl
