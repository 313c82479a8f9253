// Matrix-free Krylov and power iterations over a caller-supplied inner product.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace hierctrl::krylov {

using Vector = Eigen::VectorXd;
using LinearMap = std::function<Vector(const Vector&)>;
using InnerProduct = std::function<double(const Vector&, const Vector&)>;

/// Euclidean inner product.
InnerProduct euclidean();

struct GmresOptions {
  double tol = 1e-10;   // on ‖b - Ax‖ / ‖b‖
  int restart = 60;
  int max_iters = 600;  // total inner iterations
};

struct SolveReport {
  Vector x;
  int iterations = 0;
  double residual = 0.0;  // relative, recomputed from the final iterate
  bool converged = false;
  std::vector<double> history;  // per iteration; meaning depends on the method
};

/// Restarted GMRES with right preconditioning: solves A P⁻¹ z = b and
/// returns x = P⁻¹ z. `precond` may be empty. Norms use `ip`.
SolveReport gmres(const LinearMap& A, const Vector& b, const Vector& x0,
                  const LinearMap& precond, const InnerProduct& ip,
                  const GmresOptions& opts);

struct CgOptions {
  double tol = 1e-10;  // on ‖b - Ax‖ / ‖b‖
  int max_iters = 500;
};

/// Conjugate gradients for A self-adjoint positive definite in `ip`.
/// history[k] = ½⟨A x_k, x_k⟩ - ⟨b, x_k⟩ for k = 0..iterations.
SolveReport conjugate_gradient(const LinearMap& A, const Vector& b, const Vector& x0,
                               const InnerProduct& ip, const CgOptions& opts);

struct PowerOptions {
  double tol = 1e-10;  // relative change of the Rayleigh quotient
  int max_iters = 500;
  std::uint64_t seed = 7;
};

struct PowerReport {
  double value = 0.0;
  Vector vector;
  int iterations = 0;
  bool converged = false;
};

/// Dominant eigenvalue of A, assumed self-adjoint and positive semidefinite
/// in `ip`. The start vector is a seeded uniform draw in [-1, 1]^n unless
/// `start` is non-empty.
PowerReport power_iteration(const LinearMap& A, Eigen::Index n, const InnerProduct& ip,
                            const PowerOptions& opts, const Vector& start = Vector());

}  // namespace hierctrl::krylov
