// Auxiliary function η and the singular Carleman weights built from it.
//
// σ(x,t) = (e^{4λM} - e^{λ(2M + η(x))}) / d(t),   τ(x,t) = e^{λ(2M + η(x))} / d(t)
// with M = ‖η‖∞ and d(t) = sqrt(t (T - t)). The modified weights σ̄, τ̄ use
// l(t) = T/2 on [0, T/2] and l(t) = d(t) on [T/2, T] instead of d(t).

#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "hierctrl/mesh.hpp"

namespace hierctrl::weights {

using mesh::Field;
using mesh::SpaceTimeGrid;
using mesh::Vector;

struct EtaFunction {
  Vector value;
  std::vector<Vector> gradient;       // one array per axis
  Vector laplacian;
  std::vector<Vector> grad_laplacian; // one array per axis
  Vector bilaplacian;
  Vector gradient_norm;

  std::array<double, 2> critical_point{0.0, 0.0};
  double max_value = 1.0;  // ‖η‖∞, attained at the critical point
  double c0 = 0.0;         // min |∇η| over nodes outside ω′
  double boundary_max_abs = 0.0;  // max |η| over boundary sample points
};

/// Separable polynomial η vanishing on ∂Ω with its only interior critical
/// point at the centroid of `omega_prime`, scaled so that max η = eta_max.
/// Throws std::invalid_argument when ω′ touches the boundary and
/// std::runtime_error when the achieved C0 falls below `c0_target`.
EtaFunction build_eta(const SpaceTimeGrid& grid, const mesh::RegionMask& omega_prime,
                      double c0_target, double eta_max = 1.0);

struct CarlemanParams {
  double lambda = 1.0;
  double s = 1.0;
};

struct CarlemanWeights {
  CarlemanParams params;
  double eta_max = 1.0;
  Field sigma, tau;          // +inf at t = 0 and t = T
  std::vector<double> sigma_star;  // per level, +inf at the endpoints
  std::vector<double> rho_star;    // e^{s σ*/2}, +inf at the endpoints
  double rho0 = 1.0;               // ρ*(T/2) = min_t ρ*(t)
  std::vector<double> l;           // per level
  Field sigma_bar, tau_bar;        // +inf only at t = T

  /// e^{-2sσ} (sτ)^power at (level, node); exactly 0 at t ∈ {0, T}.
  double damped(int level, int node, double power) const;
  /// Same with σ̄, τ̄; finite at t = 0, 0 at t = T.
  double damped_bar(int level, int node, double power) const;
  /// ρ*^{-2}(t_k) = e^{-sσ*}, 0 at t ∈ {0, T}.
  double rho_star_inv2(int level) const;
  /// ρ*^{2}(t_k), +inf at the endpoints.
  double rho_star_sq(int level) const;
};

struct SigmaTau {
  Field sigma, tau;
};

SigmaTau eval_sigma_tau(const EtaFunction& eta, double lambda,
                        const SpaceTimeGrid& grid);

struct SigmaStar {
  std::vector<double> sigma_star;
  std::vector<double> rho_star;
  double rho0 = 1.0;
};

/// Node-wise max of σ per level and ρ* = e^{sσ*/2}. ρ0 is evaluated at T/2,
/// where d(t) is maximal, whether or not T/2 is a grid level.
SigmaStar eval_sigma_star_rho_star(const Field& sigma, double s,
                                   const SpaceTimeGrid& grid);

struct ModifiedWeights {
  std::vector<double> l;
  Field sigma_bar, tau_bar;
};

ModifiedWeights eval_modified_weights(const EtaFunction& eta, double lambda,
                                      const SpaceTimeGrid& grid);

CarlemanWeights build_weights(const EtaFunction& eta, const CarlemanParams& params,
                              const SpaceTimeGrid& grid);

/// CSV with columns t,x[,y],sigma,tau,sigma_bar,tau_bar.
void write_weights_csv(const SpaceTimeGrid& grid, const CarlemanWeights& w,
                       std::ostream& out);

}  // namespace hierctrl::weights
