// Leader null controllability by penalized HUM.
//
// Dual system for terminal data ψ^T: ψ runs backward driven by θ χ_{O_d},
// θ = α_1 γ¹ + α_2 γ², and each γ^i runs forward from 0 driven by
// -(1/μ_i) ρ*^{-2} ψ_1 χ_{ω_i}. For any primal solution of the optimality
// system with leader control g,
//
//   (y(T), ψ^T) = ∫∫ g χ_ω ψ_1 + (y⁰, ψ(0)) - Σ_i α_i ∫∫_{O_d} γ^i · y_d^i
//
// holds exactly at the discrete level, so the Gramian G: ψ^T ↦ y(T) (with
// g = ψ_1 χ_ω and zero data) is self-adjoint and positive semidefinite.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hierctrl/nash.hpp"

namespace hierctrl::leader {

using mesh::Field;
using mesh::Vector;
using pde::TwoComponentState;

/// Terminal adjoint data stacked as [ψ_1^T; ψ_2^T].
using TerminalData = Vector;

struct DualTrajectories {
  TwoComponentState psi, gamma1, gamma2, theta;
  double residual = 0.0;
};

/// Factored dual system, reusable across terminal data.
class DualSystem {
 public:
  explicit DualSystem(const HierarchicProblem& problem);
  DualTrajectories solve(const TerminalData& psi_T) const;

 private:
  const HierarchicProblem* problem_;
  pde::CoupledSolver solver_;
};

DualTrajectories solve_dual(const HierarchicProblem& problem, const TerminalData& psi_T);

/// Leader control generated by dual data: g = χ_ω ψ_1 on forward levels.
Field leader_control(const HierarchicProblem& problem, const DualTrajectories& dual);

/// ½ ∫∫_ω ψ_1² + (y⁰, ψ(0)) - Σ_i α_i ∫∫_{O_d} γ^i · y_d^i.
double evaluate_F_tilde(const HierarchicProblem& problem, const DualTrajectories& dual);
double evaluate_F_tilde(const HierarchicProblem& problem, const TerminalData& psi_T);

/// ∫ a · b over Ω for stacked two-component spatial data.
double terminal_inner(const HierarchicProblem& problem, const Vector& a, const Vector& b);

/// Dual solve followed by an optimality-system solve; both factorizations are cached.
class Gramian {
 public:
  explicit Gramian(const HierarchicProblem& problem);

  Vector apply(const TerminalData& psi_T) const;
  /// y_free(T): optimality system with g = 0 and the problem's data. F̃ has
  /// linear part (y_free(T), ψ^T).
  Vector linear_term() const;

  const DualSystem& dual() const { return dual_; }
  const nash::OptimalitySystem& optimality() const { return optimality_; }

 private:
  const HierarchicProblem* problem_;
  DualSystem dual_;
  nash::OptimalitySystem optimality_;
};

Vector gramian_apply(const HierarchicProblem& problem, const TerminalData& psi_T);

struct HUMResult {
  TerminalData psi_T_hat;
  nash::ControlProfile g_bar;
  double epsilon = 0.0;
  double terminal_norm = 0.0;     // ‖y(T)‖ from the controlled optimality system
  double free_terminal_norm = 0.0;  // ‖y_free(T)‖
  double leader_cost = 0.0;
  double f_tilde = 0.0;            // F̃_ε at the minimizer
  int cg_iterations = 0;
  double cg_residual = 0.0;
  bool converged = false;
  std::vector<double> f_history;   // F̃_ε per CG iteration
  double tt_residual = 0.0;        // max over directions of the first-order identity
  double duality_residual = 0.0;
  TwoComponentState y;             // controlled trajectory
  nash::NashSolution nash;         // followers for ḡ
};

/// Conjugate gradients on (G + εI) ψ = -y_free(T), then ḡ = χ_ω ψ̂_1.
/// `gramian` may be null, in which case one is built.
HUMResult minimize_F_tilde(const HierarchicProblem& problem, double epsilon,
                           const Gramian* gramian = nullptr, int tt_directions = 20);

/// Left side of the first-order identity for F̃_ε at ψ̂ in direction ψ̃,
/// normalized by ‖y_free(T)‖ ‖ψ̃‖ (or ‖ψ̃‖ when y_free(T) = 0).
double first_order_residual(const HierarchicProblem& problem, const Gramian& gramian,
                            const TerminalData& psi_hat, double epsilon,
                            const TerminalData& direction);

struct DualityCheck {
  double lhs = 0.0;  // (y(T), ψ^T)
  double rhs = 0.0;  // ∫∫ g χ_ω ψ_1 + (y⁰, ψ(0)) - Σ α_i ∫∫ γ^i · y_d^i
  double gap = 0.0;  // |lhs - rhs| / (sum of absolute values of all terms)
};

DualityCheck verify_duality_identity(const HierarchicProblem& problem, const Field& g,
                                     const TwoComponentState& y, const DualTrajectories& dual);

struct HierarchicReport {
  HUMResult hum;
  double leader_cost = 0.0;
  std::array<double, 2> follower_costs{};
  nash::StationarityReport stationarity;
  double duality_gap = 0.0;
  std::vector<std::string> warnings;
};

HierarchicReport run_hierarchic_control(const HierarchicProblem& problem, double epsilon,
                                        const Gramian* gramian = nullptr);

}  // namespace hierctrl::leader
