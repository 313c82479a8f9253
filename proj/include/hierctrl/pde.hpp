// Implicit-Euler solvers for two-component systems
//
//   ∂t c + Δ²c + a(x,t) c = f,  a = [[a11, a12], [a21, a22]],
//
// and their exact discrete transposes. One forward step at level k >= 1 is
//
//   M_k c^k = c^{k-1} + dt f^k,   M_k = I + dt (diag(B, B) + a(t_k)).
//
// A backward state ψ stores the terminal data at level n_t and is obtained from
//
//   ψ[k-1] = M_k^{-T} (ψ[k] + dt w^k),   k = n_t, ..., 1.
//
// With these conventions, for every f, w, c^0 and ψ[n_t],
//
//   (c^{n_t}, ψ[n_t]) + Σ_k dt (c^k, w^k) = (c^0, ψ[0]) + Σ_k dt (f^k, ψ[k-1]),
//
// so a forward source at level k pairs with the backward state stored at
// level k-1. `aligned` performs that shift.

#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseLU>

#include "hierctrl/mesh.hpp"

namespace hierctrl::pde {

using mesh::Field;
using mesh::RegionMask;
using mesh::SpaceTimeGrid;
using mesh::SparseMatrix;
using mesh::SparseOperator;
using mesh::Vector;

/// Coupling coefficients a11, a12, a21, a22, sampled on every level.
struct CoefficientField {
  std::array<Field, 4> a;  // a11, a12, a21, a22
  bool time_constant = true;

  const Field& get(int row, int col) const { return a[2 * row + col]; }
  Field& get(int row, int col) { return a[2 * row + col]; }
  double sup_norm(int row, int col) const;
  /// Σ ‖a_ij‖∞.
  double total_sup_norm() const;
};

CoefficientField constant_coefficients(const SpaceTimeGrid& grid, double a11, double a12,
                                       double a21, double a22);

using ScalarFn = std::function<double(double, double, double)>;  // (x, y, t)

/// Samples each coefficient on every node and level; `time_constant` is detected.
CoefficientField sampled_coefficients(const SpaceTimeGrid& grid, const ScalarFn& a11,
                                      const ScalarFn& a12, const ScalarFn& a21,
                                      const ScalarFn& a22);

/// Throws std::invalid_argument if any coefficient is non-finite or the shape
/// does not match the grid.
void validate(const SpaceTimeGrid& grid, const CoefficientField& coeffs);

struct SignCertificate {
  bool holds = false;
  int sign = 0;      // +1 when a21 >= a0, -1 when -a21 >= a0
  double a0 = 0.0;   // min of sign * a21 over region × levels 1..n_t
};

SignCertificate sign_certificate(const SpaceTimeGrid& grid, const CoefficientField& coeffs,
                                 const RegionMask& region);

enum class Orientation { forward, backward };

struct TwoComponentState {
  Field c1, c2;
  Orientation orientation = Orientation::forward;

  TwoComponentState() = default;
  TwoComponentState(const SpaceTimeGrid& grid, Orientation o)
      : c1(grid), c2(grid), orientation(o) {}

  Field& component(int j) { return j == 0 ? c1 : c2; }
  const Field& component(int j) const { return j == 0 ? c1 : c2; }
  Vector at(int level) const;  // stacked [c1; c2]
  void set(int level, const Vector& stacked);
};

/// Per-component space-time sources. Terms are added through `add`, which
/// multiplies by the mask so that sources vanish outside their support.
struct SourceSpec {
  Field f1, f2;

  SourceSpec() = default;
  explicit SourceSpec(const SpaceTimeGrid& grid) : f1(grid), f2(grid) {}

  Field& component(int j) { return j == 0 ? f1 : f2; }
  const Field& component(int j) const { return j == 0 ? f1 : f2; }
  SourceSpec& add(int component, const Field& values, const RegionMask* mask = nullptr,
                  double scale = 1.0);
  bool empty() const { return f1.values.size() == 0; }
};

/// Backward state shifted onto forward levels: out[k] = state[k-1], out[0] = 0.
Field aligned(const Field& backward);

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Step matrices and their factorizations for a fixed grid, bilaplacian and
/// coefficient field. Immutable after construction; concurrent solves are safe.
class Propagator {
 public:
  Propagator(const SpaceTimeGrid& grid, const SparseOperator& bilap,
             const CoefficientField& coeffs);

  const SpaceTimeGrid& grid() const { return grid_; }
  const CoefficientField& coefficients() const { return coeffs_; }
  int block_size() const { return 2 * grid_.num_nodes(); }

  /// M_k for k = 1..n_t.
  const SparseMatrix& step_matrix(int level) const;
  Vector step(int level, const Vector& rhs) const;            // M_k^{-1} rhs
  Vector step_transposed(int level, const Vector& rhs) const; // M_k^{-T} rhs

  /// An empty SourceSpec means zero sources.
  TwoComponentState solve_forward(const SourceSpec& sources, const Vector& init1,
                                  const Vector& init2) const;
  TwoComponentState solve_backward(const SourceSpec& sources, const Vector& term1,
                                   const Vector& term2) const;

 private:
  int slot(int level) const { return coeffs_.time_constant ? 0 : level - 1; }

  SpaceTimeGrid grid_;
  CoefficientField coeffs_;
  std::vector<SparseMatrix> matrices_;
  std::vector<std::unique_ptr<Eigen::SparseLU<SparseMatrix>>> lu_;
  std::vector<std::unique_ptr<Eigen::SparseLU<SparseMatrix>>> lu_t_;
};

// ---------------------------------------------------------------------------
// Coupled forward-backward systems.
//
// A system consists of blocks, each a two-component state running forward
// (initial data) or backward (terminal data), plus linear coupling terms
// that feed one block's component into another block's source. Couplings
// must connect blocks of opposite orientation. For a target at level k the
// contribution is  scale * time_factor[k] * mask * source, where a backward
// source is read at level k-1 and a forward source at level k.

struct CouplingTerm {
  int target_block = 0;
  int target_component = 0;
  int source_block = 0;
  int source_component = 0;
  Vector mask;                       // per node; empty means 1
  std::vector<double> time_factor;   // per level; empty means 1
  double scale = 1.0;
};

struct CoupledSystemSpec {
  std::vector<Orientation> blocks;
  std::vector<CouplingTerm> couplings;
};

struct BlockData {
  Vector data1, data2;  // initial (forward) or terminal (backward) values
  SourceSpec source;    // may be empty
};

enum class CoupledBackend { assembled, fixed_point, automatic };

std::string to_string(CoupledBackend backend);
CoupledBackend parse_backend(const std::string& name);

struct CoupledOptions {
  CoupledBackend backend = CoupledBackend::automatic;
  double tol = 1e-12;
  int max_iters = 2000;
  double relaxation = 0.5;
  long assembled_limit = 300000;  // unknowns; larger systems use fixed_point
};

struct CoupledResult {
  std::vector<TwoComponentState> states;
  double residual = 0.0;
  int iterations = 0;
  CoupledBackend backend = CoupledBackend::assembled;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Factors the space-time operator once (assembled backend) so that many
/// right-hand sides can be solved cheaply.
class CoupledSolver {
 public:
  CoupledSolver(std::shared_ptr<const Propagator> prop, CoupledSystemSpec spec,
                CoupledOptions opts = {});
  ~CoupledSolver();
  CoupledSolver(CoupledSolver&&) noexcept;
  CoupledSolver& operator=(CoupledSolver&&) noexcept;

  CoupledResult solve(const std::vector<BlockData>& data) const;
  CoupledBackend backend() const { return backend_; }
  const CoupledSystemSpec& spec() const { return spec_; }
  long unknowns() const;

 private:
  struct Assembled;

  CoupledResult solve_assembled(const std::vector<BlockData>& data) const;
  CoupledResult solve_fixed_point(const std::vector<BlockData>& data) const;
  SourceSpec coupled_source(int block, const std::vector<TwoComponentState>& states,
                            const BlockData& data) const;

  std::shared_ptr<const Propagator> prop_;
  CoupledSystemSpec spec_;
  CoupledOptions opts_;
  CoupledBackend backend_;
  std::unique_ptr<Assembled> assembled_;
};

CoupledResult solve_coupled_forward_backward(std::shared_ptr<const Propagator> prop,
                                             const CoupledSystemSpec& spec,
                                             const std::vector<BlockData>& data,
                                             const CoupledOptions& opts = {});

// ---------------------------------------------------------------------------
// Trajectory export.

/// Columns t,x[,y],c1,c2 with 17 significant digits.
void write_trajectory_csv(const SpaceTimeGrid& grid, const TwoComponentState& state,
                          std::ostream& out);

/// Binary layout (little-endian host order): 8-byte magic "HIERTRJ1", then
/// uint32 dim, n_x, n_levels, n_components, then n_components blocks of
/// n_levels × num_nodes doubles in row-major order.
void write_trajectory_binary(const SpaceTimeGrid& grid, const TwoComponentState& state,
                             std::ostream& out);
TwoComponentState read_trajectory_binary(const SpaceTimeGrid& grid, std::istream& in);

}  // namespace hierctrl::pde
