// Sampled checks of the weighted inequalities: the Carleman functional and
// its ratio, the observability constant, and energy-estimate constants.

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hierctrl/leader.hpp"

namespace hierctrl::analysis {

using mesh::Field;
using mesh::Vector;

struct CarlemanTerms {
  // λ⁸(sτ)⁶φ², λ⁶(sτ)⁴|∇φ|², λ⁴(sτ)³|Δφ|², λ⁴(sτ)²|∇²φ|², λ²(sτ)|∇Δφ|²,
  // (sτ)⁻¹(φ_t² + |Δ²φ|²), each against e^{-2sσ}.
  std::array<double, 6> terms{};
  double total = 0.0;
};

/// Weighted functional I(φ) for a field stored on every level. Spatial
/// derivatives use centered differences with zero boundary values; φ_t is a
/// forward difference. Levels with t ∈ {0, T} carry zero weight.
CarlemanTerms carleman_I(const HierarchicProblem& problem, const Field& phi,
                         const weights::CarlemanWeights& w);

/// λ²⁴ ∫∫_ω e^{-2sσ} (sτ)³⁴ φ².
double carleman_observation(const HierarchicProblem& problem, const Field& phi,
                            const weights::CarlemanWeights& w);

/// ∫∫ e^{-2sσ̄}(sτ̄)⁶ φ² + e^{-2sσ̄}(sτ̄)³ |Δφ|² over the window.
double carleman_I_bar(const HierarchicProblem& problem, const Field& phi,
                      const weights::CarlemanWeights& w, mesh::TimeWindow window);
/// Same integrand with (σ, τ) in place of (σ̄, τ̄).
double carleman_I_unbarred(const HierarchicProblem& problem, const Field& phi,
                           const weights::CarlemanWeights& w, mesh::TimeWindow window);

enum class Sampler { smooth, white };

Sampler parse_sampler(const std::string& name);

/// Random terminal data. `smooth` draws sums of the first `modes` sine modes
/// per axis with uniform coefficients in [-1, 1]; `white` draws node values.
Vector sample_terminal_data(const HierarchicProblem& problem, std::uint64_t seed,
                            Sampler sampler = Sampler::smooth, int modes = 8);

struct SampleRow {
  std::uint64_t seed = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;  // +inf when rhs = 0 < lhs; NaN when both vanish
};

struct RatioSummary {
  double max = 0.0, median = 0.0, min = 0.0, p90 = 0.0;
  int counted = 0;
  int excluded = 0;   // both sides zero
  int infinite = 0;   // rhs = 0 < lhs
};

RatioSummary summarize(const std::vector<SampleRow>& rows);

struct CarlemanReport {
  double lambda = 1.0, s = 1.0;
  double lhs = 0.0, rhs = 0.0, ratio = 0.0;  // at the maximizing sample
  CarlemanTerms breakdown;                   // I(ψ1)+I(ψ2)+I(θ1)+I(θ2) term-wise, same sample
  std::vector<SampleRow> samples;
  RatioSummary summary;
};

/// Samples ψ^T, solves the dual system with the problem's own ρ*, and
/// evaluates both sides of the Carleman inequality with weights for (λ, s).
CarlemanReport carleman_ratio_check(const HierarchicProblem& problem, double lambda, double s,
                                    int n_samples, std::uint64_t seed,
                                    Sampler sampler = Sampler::smooth);

struct ObservabilitySides {
  double lhs = 0.0;  // ‖ψ(0)‖² + Σ_i ∫∫ |γ^i|²
  double rhs = 0.0;  // ∫∫_ω ψ_1²
};

ObservabilitySides observability_sides(const HierarchicProblem& problem,
                                       const leader::DualTrajectories& dual);

struct ObservabilityReport {
  double lhs = 0.0, rhs = 0.0, ratio = 0.0;  // maximizing sample
  double power_estimate = 0.0;
  int power_iterations = 0;
  bool power_converged = false;
  double regularization = 0.0;
  Vector maximizer;  // terminal data of the maximizing sample
  std::vector<SampleRow> samples;
  RatioSummary summary;
};

/// Dense quadratic forms of both sides over terminal data (one dual solve per
/// basis vector): returns {lhs form, rhs form} in Euclidean coordinates.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> observability_forms(const HierarchicProblem& problem);

/// Sample maximum of lhs/rhs and a power-iteration estimate of the supremum
/// of the form ratio, with the rhs form regularized by 1e-14 times the terminal mass matrix.
ObservabilityReport observability_ratio(const HierarchicProblem& problem, int n_samples,
                                        std::uint64_t seed, Sampler sampler = Sampler::smooth);

enum class EnergyCheck { theta_Q, theta_half, gamma };

EnergyCheck parse_energy_check(const std::string& name);
std::string to_string(EnergyCheck which);

struct EnergyReport {
  EnergyCheck which = EnergyCheck::theta_Q;
  double constant = 0.0;  // max ratio over counted samples
  std::vector<SampleRow> samples;
  RatioSummary summary;
};

/// theta_Q:    ∫∫_Q |θ|²                      vs (α1²/μ1² + α2²/μ2²) ∫∫_Q |ρ*^{-2}ψ1|²
/// theta_half: ∫_0^{T/2}∫ |θ|² + |Δθ|²        vs (α1²/μ1² + α2²/μ2²) ∫_0^{T/2}∫ |ρ*^{-2}ψ1|²
/// gamma:      Σ_i ∫∫_Q |γ^i|²                 vs Σ_i μ_i^{-2} ∫∫_{ω_i} |ρ*^{-2}ψ1|²
EnergyReport energy_constant_check(EnergyCheck which, const HierarchicProblem& problem,
                                   int n_samples, std::uint64_t seed,
                                   Sampler sampler = Sampler::smooth);

struct WeightChecks {
  double bar_mismatch = 0.0;      // max relative |σ̄-σ|, |τ̄-τ| on levels with t >= T/2, t < T
  double rho_bound_violation = 0.0;  // max of (-2sσ*) - (-2sσ) over interior nodes; <= 0 when it holds
  int gradient_violations = 0;    // nodes outside ω′ with |∇η| < C0
  double c0 = 0.0;
};

WeightChecks check_weights(const HierarchicProblem& problem, const weights::CarlemanWeights& w);

/// CSV rows: seed,lhs,rhs,ratio.
void write_samples_csv(const std::vector<SampleRow>& rows, std::ostream& out);

}  // namespace hierctrl::analysis
