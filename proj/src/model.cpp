#include "hierctrl/model.hpp"

#include <cmath>
#include <stdexcept>

#include "hierctrl/nash.hpp"

namespace hierctrl {

namespace {

bool open_boxes_intersect(const mesh::Box& a, const mesh::Box& b, int dim) {
  for (int ax = 0; ax < dim; ++ax)
    if (!(a.lo[ax] < b.hi[ax] && b.lo[ax] < a.hi[ax])) return false;
  return true;
}

bool closure_inside(const mesh::Box& inner, const mesh::Box& outer, int dim) {
  for (int ax = 0; ax < dim; ++ax)
    if (!(inner.lo[ax] > outer.lo[ax] && inner.hi[ax] < outer.hi[ax])) return false;
  return true;
}

pde::ScalarFn or_zero(const pde::ScalarFn& f) {
  return f ? f : pde::ScalarFn([](double, double, double) { return 0.0; });
}

}  // namespace

ProblemConfig ProblemConfig::benchmark() {
  ProblemConfig c;
  c.a11 = [](double, double, double) { return 0.5; };
  c.a12 = [](double, double, double) { return 0.2; };
  c.a21 = [](double, double, double) { return 1.0; };
  c.a22 = [](double, double, double) { return 0.5; };
  return c;
}

bool HierarchicProblem::observation_meets_omega() const {
  return !mesh::disjoint(observation, omega);
}

HierarchicProblem build_problem(const ProblemConfig& config) {
  using mesh::RegionLabel;
  HierarchicProblem p;
  p.grid = mesh::build_grid(config.dim, config.n_x, config.n_t, config.horizon, config.domain);
  const int dim = p.grid.dim();
  p.laplacian = mesh::dirichlet_laplacian(p.grid);
  p.bilaplacian = mesh::bilaplacian(p.laplacian);

  p.omega = mesh::region_mask(p.grid, config.omega, RegionLabel::omega);
  p.omega1 = mesh::region_mask(p.grid, config.omega1, RegionLabel::omega1);
  p.omega2 = mesh::region_mask(p.grid, config.omega2, RegionLabel::omega2);
  p.observation = mesh::region_mask(p.grid, config.observation, RegionLabel::observation);
  p.omega_prime = mesh::region_mask(p.grid, config.omega_prime, RegionLabel::omega_prime);

  if (open_boxes_intersect(config.omega1, config.omega, dim) || !mesh::disjoint(p.omega1, p.omega))
    throw std::invalid_argument("omega1 intersects omega");
  if (open_boxes_intersect(config.omega2, config.omega, dim) || !mesh::disjoint(p.omega2, p.omega))
    throw std::invalid_argument("omega2 intersects omega");
  if (!closure_inside(config.omega_prime, config.omega, dim))
    throw std::invalid_argument("closure of omega_prime is not contained in omega");
  if (!p.observation_meets_omega())
    p.warnings.push_back("Od does not intersect omega");

  p.coefficients = pde::sampled_coefficients(p.grid, or_zero(config.a11), or_zero(config.a12),
                                             or_zero(config.a21), or_zero(config.a22));
  p.propagator = std::make_shared<pde::Propagator>(p.grid, p.bilaplacian, p.coefficients);
  p.sign = pde::sign_certificate(p.grid, p.coefficients, mesh::intersect(p.observation, p.omega));
  if (!p.sign.holds)
    p.warnings.push_back("a21 has no fixed sign bounded away from 0 on (Od ∩ omega) × (0,T)");

  for (int i = 0; i < 2; ++i) {
    if (!(config.alpha[i] >= 0.0) || !std::isfinite(config.alpha[i]))
      throw std::invalid_argument("alpha" + std::to_string(i + 1) + " must be non-negative");
    if (config.alpha[i] == 0.0)
      p.warnings.push_back("alpha" + std::to_string(i + 1) + " is 0");
    p.alpha[i] = config.alpha[i];
    p.mu_auto[i] = !config.mu[i].has_value();
    if (!p.mu_auto[i]) {
      if (!(*config.mu[i] > 0.0) || !std::isfinite(*config.mu[i]))
        throw std::invalid_argument("mu" + std::to_string(i + 1) + " must be positive");
      p.mu[i] = *config.mu[i];
    }
    p.target[i] = pde::TwoComponentState(p.grid, pde::Orientation::forward);
    for (int j = 0; j < 2; ++j) {
      p.target[i].component(j) = mesh::sample_field(p.grid, or_zero(config.target[i][j]));
      if (!p.target[i].component(j).values.allFinite())
        throw std::invalid_argument("target y_d has non-finite values");
    }
  }
  auto init = [&](int j) {
    const auto f = or_zero(config.initial[j]);
    return mesh::sample(p.grid, [&](double x, double y) { return f(x, y, 0.0); });
  };
  p.initial1 = init(0);
  p.initial2 = init(1);
  if (!p.initial1.allFinite() || !p.initial2.allFinite())
    throw std::invalid_argument("initial data has non-finite values");

  p.eta = weights::build_eta(p.grid, p.omega_prime, config.c0_target, config.eta_max);
  p.weights = weights::build_weights(p.eta, config.carleman, p.grid);
  for (int k = 1; k < p.grid.n_t(); ++k)
    if (!std::isfinite(p.weights.rho_star_sq(k)))
      throw std::invalid_argument(
          "Carleman weight rho_*^2 overflows double precision; reduce eta_max, lambda or s");
  p.rho_inv2.resize(p.grid.num_levels());
  for (int k = 0; k < p.grid.num_levels(); ++k) p.rho_inv2[k] = p.weights.rho_star_inv2(k);

  p.solver = config.solver;
  p.seed = config.seed;
  nash::resolve_automatic_mu(p);
  return p;
}

}  // namespace hierctrl
