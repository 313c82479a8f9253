// Follower game: control-to-state maps Λ_i and their transposes, the Nash
// operator K, coercivity thresholds, and two routes to the Nash pair.
//
// Follower controls live in H_i: nodes of ω_i on levels 1..n_t-1. Level n_t
// is excluded because ρ* is infinite at t = T, which forces h̄_i(T) = 0.
// Inner products on H_i use the same quadrature as mesh::inner_product.

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "hierctrl/model.hpp"

namespace hierctrl::nash {

using mesh::Field;
using mesh::Vector;
using pde::TwoComponentState;

struct ControlProfile {
  Field values;
  mesh::RegionMask mask;
  mesh::TimeWindow window;
};

/// Copies `values` and zeroes everything outside mask × window.
ControlProfile make_profile(const mesh::SpaceTimeGrid& grid, const Field& values,
                            const mesh::RegionMask& mask, mesh::TimeWindow window);

/// Packed coordinates of H = H_1 × H_2.
class ControlSpace {
 public:
  explicit ControlSpace(const HierarchicProblem& problem);

  Eigen::Index size() const { return offset_[2]; }
  Eigen::Index size(int i) const { return offset_[i + 1] - offset_[i]; }
  const mesh::TimeWindow& window() const { return window_; }

  Vector pack(const std::array<Field, 2>& h) const;
  std::array<Field, 2> unpack(const Vector& v) const;
  /// Embeds follower i's coordinates, zero elsewhere.
  Vector embed(int i, const Field& h) const;
  Vector restrict_to(int i, const Vector& v) const;  // zero outside follower i

  double inner(const Vector& a, const Vector& b) const;
  double norm(const Vector& a) const;
  krylov::InnerProduct inner_product() const;

  /// μ_i ρ*² at every coordinate.
  Vector penalty_diagonal(const HierarchicProblem& problem) const;

 private:
  const mesh::SpaceTimeGrid* grid_;
  std::array<std::vector<int>, 2> nodes_;
  mesh::TimeWindow window_;
  std::array<Eigen::Index, 3> offset_{};
  double weight_ = 0.0;
};

/// Λ_i h: forward solve with zero initial data and source χ_{ω_i} h in the
/// first equation.
TwoComponentState apply_Lambda(const HierarchicProblem& problem, int i, const Field& h);

/// Λ_i^* w: backward solve driven by w with zero terminal data, first
/// component shifted onto forward levels and restricted to ω_i × H-levels.
Field apply_Lambda_star(const HierarchicProblem& problem, int i, const TwoComponentState& w);

/// K h on packed coordinates. Costs one forward and one backward solve.
Vector apply_K(const HierarchicProblem& problem, const ControlSpace& space, const Vector& h);
std::array<Field, 2> apply_K(const HierarchicProblem& problem, const std::array<Field, 2>& h);

struct CoercivityReport {
  std::array<double, 2> norm_sq{};     // ‖χ_{O_d} Λ_i‖² by power iteration
  std::array<double, 2> thresholds{};  // lower bounds for μ_1, μ_2
  double tau = 0.0;
  double rho0 = 0.0;
  std::array<int, 2> iterations{};
  bool converged = false;
};

/// Thresholds μ_1 > α_2 n_1²/(4ρ0²), μ_2 > α_1 n_2²/(4ρ0²) with n_i = ‖χ_{O_d} Λ_i‖,
/// and τ = min_i { μ_i ρ0² - α_{3-i} n_i² / 4 } for the problem's μ.
CoercivityReport coercivity_tau(const HierarchicProblem& problem);

/// Sets every automatic μ_i to factor × threshold (or 1/ρ0² when the
/// threshold vanishes). Returns the report used.
CoercivityReport resolve_automatic_mu(HierarchicProblem& problem);

/// u(g): initial data y⁰ and leader source g χ_ω, no followers.
TwoComponentState free_state(const HierarchicProblem& problem, const Field& g);

/// State under all three controls.
TwoComponentState controlled_state(const HierarchicProblem& problem, const Field& g,
                                   const std::array<Field, 2>& h);

struct NashSolution {
  std::array<ControlProfile, 2> h_bar;
  std::string route;
  double residual = 0.0;  // operator route: ‖K h̄ - v‖/‖v‖; optimality route: space-time residual
  int iterations = 0;
  bool converged = false;
};

/// Right-hand side v_i = α_i Λ_i^* [χ_{O_d}(y_d^i - u(g))], packed.
Vector nash_rhs(const HierarchicProblem& problem, const ControlSpace& space, const Field& g);

/// Solves K h̄ = v with GMRES, right-preconditioned by μ_i ρ*².
NashSolution solve_nash_operator(const HierarchicProblem& problem, const Field& g,
                                 const Vector& initial_guess = Vector());

/// Factored optimality system: y forward, φ¹ and φ² backward, followers
/// eliminated through h̄_i = -(1/μ_i) ρ*^{-2} χ_{ω_i} φ^i_1.
class OptimalitySystem {
 public:
  explicit OptimalitySystem(const HierarchicProblem& problem);

  struct Solution {
    NashSolution nash;
    TwoComponentState y, phi1, phi2;
  };

  /// With `with_data` false, the initial data and targets are replaced by zero.
  Solution solve(const Field& g, bool with_data = true) const;
  /// Only y(T), stacked [y1; y2].
  Vector terminal_state(const Field& g, bool with_data = true) const;

 private:
  const HierarchicProblem* problem_;
  pde::CoupledSolver solver_;
};

OptimalitySystem::Solution solve_nash_optimality(const HierarchicProblem& problem,
                                                 const Field& g);

struct StationarityReport {
  std::array<double, 2> residual{};  // max over directions of |LHS| / (‖ĥ‖ ‖v‖)
  double scale = 1.0;                // ‖v‖_H used in the normalization
  int directions = 0;
};

/// Evaluates μ_i (ρ*² h̄_i, ĥ_i) + α_i (χ_{O_d}(y - y_d^i), Λ_i ĥ_i) for random
/// directions ĥ_i in H_i, where y is the state under (g, h̄).
StationarityReport check_nash_stationarity(const HierarchicProblem& problem, const Field& g,
                                           const std::array<Field, 2>& h_bar, int directions,
                                           std::uint64_t seed);

/// J(g) = ½ ∫_{ω×(0,T)} g².
double leader_cost(const HierarchicProblem& problem, const Field& g);
/// J_i(g; h_1, h_2) for i = 1, 2.
std::array<double, 2> follower_costs(const HierarchicProblem& problem, const Field& g,
                                     const std::array<Field, 2>& h);

/// CSV with columns t,x[,y],h over follower i's region, one row per node and level.
void write_control_csv(const mesh::SpaceTimeGrid& grid, const ControlProfile& profile,
                       std::ostream& out);

}  // namespace hierctrl::nash
