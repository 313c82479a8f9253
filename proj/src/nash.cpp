#include "hierctrl/nash.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

namespace hierctrl::nash {

using pde::Orientation;

ControlProfile make_profile(const mesh::SpaceTimeGrid& grid, const Field& values,
                            const mesh::RegionMask& mask, mesh::TimeWindow window) {
  if (!values.matches(grid)) throw std::invalid_argument("control does not match the grid");
  ControlProfile p{Field(grid), mask, window};
  for (int k = std::max(window.first, 0); k <= std::min(window.last, grid.n_t()); ++k)
    for (int n = 0; n < grid.num_nodes(); ++n)
      if (mask.contains(n)) p.values.values(k, n) = values.values(k, n);
  return p;
}

// ---------------------------------------------------------------------------

ControlSpace::ControlSpace(const HierarchicProblem& problem) : grid_(&problem.grid) {
  window_ = {1, problem.grid.n_t() - 1};
  const int levels = window_.last - window_.first + 1;
  for (int i = 0; i < 2; ++i) {
    const auto& m = problem.follower_mask(i);
    for (int n = 0; n < problem.grid.num_nodes(); ++n)
      if (m.contains(n)) nodes_[i].push_back(n);
    offset_[i + 1] = offset_[i] + static_cast<Eigen::Index>(nodes_[i].size()) * levels;
  }
  weight_ = problem.grid.dt() * problem.grid.cell_volume();
}

Vector ControlSpace::pack(const std::array<Field, 2>& h) const {
  Vector v(size());
  for (int i = 0; i < 2; ++i) {
    Eigen::Index p = offset_[i];
    for (int k = window_.first; k <= window_.last; ++k)
      for (int n : nodes_[i]) v[p++] = h[i].values(k, n);
  }
  return v;
}

std::array<Field, 2> ControlSpace::unpack(const Vector& v) const {
  std::array<Field, 2> h{Field(*grid_), Field(*grid_)};
  for (int i = 0; i < 2; ++i) {
    Eigen::Index p = offset_[i];
    for (int k = window_.first; k <= window_.last; ++k)
      for (int n : nodes_[i]) h[i].values(k, n) = v[p++];
  }
  return h;
}

Vector ControlSpace::embed(int i, const Field& h) const {
  std::array<Field, 2> pair{Field(*grid_), Field(*grid_)};
  pair[i] = h;
  return restrict_to(i, pack(pair));
}

Vector ControlSpace::restrict_to(int i, const Vector& v) const {
  Vector out = Vector::Zero(size());
  out.segment(offset_[i], size(i)) = v.segment(offset_[i], size(i));
  return out;
}

double ControlSpace::inner(const Vector& a, const Vector& b) const { return weight_ * a.dot(b); }

double ControlSpace::norm(const Vector& a) const { return std::sqrt(inner(a, a)); }

krylov::InnerProduct ControlSpace::inner_product() const {
  const double w = weight_;
  return [w](const Vector& a, const Vector& b) { return w * a.dot(b); };
}

Vector ControlSpace::penalty_diagonal(const HierarchicProblem& problem) const {
  Vector d(size());
  for (int i = 0; i < 2; ++i) {
    Eigen::Index p = offset_[i];
    for (int k = window_.first; k <= window_.last; ++k) {
      const double value = problem.mu[i] * problem.weights.rho_star_sq(k);
      for (std::size_t c = 0; c < nodes_[i].size(); ++c) d[p++] = value;
    }
  }
  return d;
}

// ---------------------------------------------------------------------------

namespace {

mesh::TimeWindow control_window(const mesh::SpaceTimeGrid& grid) { return {1, grid.n_t() - 1}; }

// χ_{ω_i} h on the control window, as a first-equation source.
void add_follower_source(const HierarchicProblem& problem, int i, const Field& h,
                         pde::SourceSpec& src) {
  const auto w = control_window(problem.grid);
  const auto& m = problem.follower_mask(i);
  for (int k = w.first; k <= w.last; ++k)
    for (int n = 0; n < problem.grid.num_nodes(); ++n)
      if (m.contains(n)) src.f1.values(k, n) += h.values(k, n);
}

pde::SourceSpec observed(const HierarchicProblem& problem, const TwoComponentState& y,
                         double scale) {
  pde::SourceSpec s(problem.grid);
  s.add(0, y.c1, &problem.observation, scale);
  s.add(1, y.c2, &problem.observation, scale);
  return s;
}

Field restricted_first(const HierarchicProblem& problem, int i, const TwoComponentState& phi) {
  return make_profile(problem.grid, pde::aligned(phi.c1), problem.follower_mask(i),
                      control_window(problem.grid))
      .values;
}

const mesh::Vector& zeros(const HierarchicProblem& problem) {
  thread_local mesh::Vector z;
  if (z.size() != problem.grid.num_nodes()) z = mesh::Vector::Zero(problem.grid.num_nodes());
  return z;
}

}  // namespace

TwoComponentState apply_Lambda(const HierarchicProblem& problem, int i, const Field& h) {
  pde::SourceSpec src(problem.grid);
  add_follower_source(problem, i, h, src);
  return problem.propagator->solve_forward(src, zeros(problem), zeros(problem));
}

Field apply_Lambda_star(const HierarchicProblem& problem, int i, const TwoComponentState& w) {
  pde::SourceSpec src(problem.grid);
  src.add(0, w.c1).add(1, w.c2);
  const auto phi = problem.propagator->solve_backward(src, zeros(problem), zeros(problem));
  return restricted_first(problem, i, phi);
}

Vector apply_K(const HierarchicProblem& problem, const ControlSpace& space, const Vector& h) {
  const auto pair = space.unpack(h);
  pde::SourceSpec src(problem.grid);
  add_follower_source(problem, 0, pair[0], src);
  add_follower_source(problem, 1, pair[1], src);
  const auto y = problem.propagator->solve_forward(src, zeros(problem), zeros(problem));
  const auto phi =
      problem.propagator->solve_backward(observed(problem, y, 1.0), zeros(problem), zeros(problem));
  const Field back = pde::aligned(phi.c1);
  const std::array<Field, 2> adj{back, back};
  Vector out = space.pack(adj);
  out.segment(0, space.size(0)) *= problem.alpha[0];
  out.segment(space.size(0), space.size(1)) *= problem.alpha[1];
  return out + space.penalty_diagonal(problem).cwiseProduct(h);
}

std::array<Field, 2> apply_K(const HierarchicProblem& problem, const std::array<Field, 2>& h) {
  const ControlSpace space(problem);
  return space.unpack(apply_K(problem, space, space.pack(h)));
}

// ---------------------------------------------------------------------------

namespace {

CoercivityReport coercivity_norms(const HierarchicProblem& problem) {
  const ControlSpace space(problem);
  CoercivityReport rep;
  rep.rho0 = problem.weights.rho0;
  rep.converged = true;
  for (int i = 0; i < 2; ++i) {
    const Eigen::Index off = i == 0 ? 0 : space.size(0);
    const Eigen::Index len = space.size(i);
    auto op = [&](const Vector& x) {
      Vector full = Vector::Zero(space.size());
      full.segment(off, len) = x;
      const auto h = space.unpack(full);
      const auto y = apply_Lambda(problem, i, h[i]);
      pde::SourceSpec src = observed(problem, y, 1.0);
      const auto phi = problem.propagator->solve_backward(src, zeros(problem), zeros(problem));
      const Field back = pde::aligned(phi.c1);
      return Vector(space.pack({back, back}).segment(off, len));
    };
    const double w = problem.grid.dt() * problem.grid.cell_volume();
    krylov::PowerOptions po = problem.solver.power;
    po.seed += static_cast<std::uint64_t>(i);
    const auto pr = krylov::power_iteration(
        op, len, [w](const Vector& a, const Vector& b) { return w * a.dot(b); }, po);
    rep.norm_sq[i] = std::max(pr.value, 0.0);
    rep.iterations[i] = pr.iterations;
    rep.converged = rep.converged && pr.converged;
  }
  return rep;
}

void finish_report(const HierarchicProblem& problem, CoercivityReport& rep) {
  const double r2 = rep.rho0 * rep.rho0;
  rep.thresholds[0] = problem.alpha[1] * rep.norm_sq[0] / (4.0 * r2);
  rep.thresholds[1] = problem.alpha[0] * rep.norm_sq[1] / (4.0 * r2);
  rep.tau = std::min(problem.mu[0] * r2 - problem.alpha[1] * rep.norm_sq[0] / 4.0,
                     problem.mu[1] * r2 - problem.alpha[0] * rep.norm_sq[1] / 4.0);
}

}  // namespace

CoercivityReport coercivity_tau(const HierarchicProblem& problem) {
  auto rep = coercivity_norms(problem);
  if (!rep.converged)
    throw pde::ConvergenceError("power iteration for ‖χ_Od Λ_i‖ did not converge", 0.0);
  finish_report(problem, rep);
  return rep;
}

CoercivityReport resolve_automatic_mu(HierarchicProblem& problem) {
  auto rep = coercivity_tau(problem);
  const double r2 = rep.rho0 * rep.rho0;
  for (int i = 0; i < 2; ++i) {
    if (problem.mu_auto[i])
      problem.mu[i] = rep.thresholds[i] > 0.0
                          ? problem.solver.mu_auto_factor * rep.thresholds[i]
                          : 1.0 / r2;
    problem.mu_threshold[i] = rep.thresholds[i];
    if (!(problem.mu[i] > rep.thresholds[i]))
      problem.warnings.push_back("mu" + std::to_string(i + 1) +
                                 " does not exceed its coercivity threshold");
  }
  finish_report(problem, rep);
  problem.tau = rep.tau;
  return rep;
}

// ---------------------------------------------------------------------------

TwoComponentState free_state(const HierarchicProblem& problem, const Field& g) {
  pde::SourceSpec src(problem.grid);
  src.add(0, g, &problem.omega);
  return problem.propagator->solve_forward(src, problem.initial1, problem.initial2);
}

TwoComponentState controlled_state(const HierarchicProblem& problem, const Field& g,
                                   const std::array<Field, 2>& h) {
  pde::SourceSpec src(problem.grid);
  src.add(0, g, &problem.omega);
  add_follower_source(problem, 0, h[0], src);
  add_follower_source(problem, 1, h[1], src);
  return problem.propagator->solve_forward(src, problem.initial1, problem.initial2);
}

Vector nash_rhs(const HierarchicProblem& problem, const ControlSpace& space, const Field& g) {
  const auto u = free_state(problem, g);
  Vector v = Vector::Zero(space.size());
  for (int i = 0; i < 2; ++i) {
    if (problem.alpha[i] == 0.0) continue;
    TwoComponentState diff(problem.grid, Orientation::forward);
    diff.c1.values = problem.target[i].c1.values - u.c1.values;
    diff.c2.values = problem.target[i].c2.values - u.c2.values;
    const auto phi = problem.propagator->solve_backward(observed(problem, diff, 1.0),
                                                        zeros(problem), zeros(problem));
    const Field back = pde::aligned(phi.c1);
    v += problem.alpha[i] * space.restrict_to(i, space.pack({back, back}));
  }
  return v;
}

NashSolution solve_nash_operator(const HierarchicProblem& problem, const Field& g,
                                 const Vector& initial_guess) {
  const ControlSpace space(problem);
  const Vector v = nash_rhs(problem, space, g);
  const Vector diag = space.penalty_diagonal(problem);
  auto A = [&](const Vector& x) { return apply_K(problem, space, x); };
  auto P = [&](const Vector& x) { return Vector(x.cwiseQuotient(diag)); };
  const auto rep =
      krylov::gmres(A, v, initial_guess, P, space.inner_product(), problem.solver.gmres);
  if (!rep.converged)
    throw pde::ConvergenceError("GMRES for the Nash operator equation stopped at relative residual " +
                                    std::to_string(rep.residual),
                                rep.residual);
  const auto h = space.unpack(rep.x);
  NashSolution sol;
  const auto w = control_window(problem.grid);
  for (int i = 0; i < 2; ++i)
    sol.h_bar[i] = make_profile(problem.grid, h[i], problem.follower_mask(i), w);
  sol.route = "operator";
  sol.residual = rep.residual;
  sol.iterations = rep.iterations;
  sol.converged = true;
  return sol;
}

// ---------------------------------------------------------------------------

namespace {

pde::CoupledSystemSpec optimality_spec(const HierarchicProblem& p) {
  pde::CoupledSystemSpec spec;
  spec.blocks = {Orientation::forward, Orientation::backward, Orientation::backward};
  for (int i = 0; i < 2; ++i) {
    pde::CouplingTerm feedback;
    feedback.target_block = 0;
    feedback.target_component = 0;
    feedback.source_block = i + 1;
    feedback.source_component = 0;
    feedback.mask = p.follower_mask(i).indicator;
    feedback.time_factor = p.rho_inv2;
    feedback.scale = -1.0 / p.mu[i];
    spec.couplings.push_back(feedback);
    for (int j = 0; j < 2; ++j) {
      pde::CouplingTerm obs;
      obs.target_block = i + 1;
      obs.target_component = j;
      obs.source_block = 0;
      obs.source_component = j;
      obs.mask = p.observation.indicator;
      obs.scale = p.alpha[i];
      if (obs.scale != 0.0) spec.couplings.push_back(obs);
    }
  }
  return spec;
}

}  // namespace

OptimalitySystem::OptimalitySystem(const HierarchicProblem& problem)
    : problem_(&problem),
      solver_(problem.propagator, optimality_spec(problem), problem.solver.coupled) {}

OptimalitySystem::Solution OptimalitySystem::solve(const Field& g, bool with_data) const {
  const auto& p = *problem_;
  const auto& z = zeros(p);
  std::vector<pde::BlockData> data(3);
  data[0].data1 = with_data ? p.initial1 : z;
  data[0].data2 = with_data ? p.initial2 : z;
  data[0].source = pde::SourceSpec(p.grid);
  data[0].source.add(0, g, &p.omega);
  for (int i = 0; i < 2; ++i) {
    data[i + 1].data1 = z;
    data[i + 1].data2 = z;
    if (with_data && p.alpha[i] != 0.0)
      data[i + 1].source = observed(p, p.target[i], -p.alpha[i]);
  }
  auto res = solver_.solve(data);
  Solution sol;
  sol.y = std::move(res.states[0]);
  sol.phi1 = std::move(res.states[1]);
  sol.phi2 = std::move(res.states[2]);
  const auto w = control_window(p.grid);
  for (int i = 0; i < 2; ++i) {
    Field h = pde::aligned((i == 0 ? sol.phi1 : sol.phi2).c1);
    for (int k = 0; k < p.grid.num_levels(); ++k) h.level(k) *= -p.rho_inv2[k] / p.mu[i];
    sol.nash.h_bar[i] = make_profile(p.grid, h, p.follower_mask(i), w);
  }
  sol.nash.route = "optimality";
  sol.nash.residual = res.residual;
  sol.nash.iterations = res.iterations;
  sol.nash.converged = true;
  return sol;
}

Vector OptimalitySystem::terminal_state(const Field& g, bool with_data) const {
  return solve(g, with_data).y.at(problem_->grid.n_t());
}

OptimalitySystem::Solution solve_nash_optimality(const HierarchicProblem& problem,
                                                 const Field& g) {
  return OptimalitySystem(problem).solve(g, true);
}

// ---------------------------------------------------------------------------

StationarityReport check_nash_stationarity(const HierarchicProblem& problem, const Field& g,
                                           const std::array<Field, 2>& h_bar, int directions,
                                           std::uint64_t seed) {
  const ControlSpace space(problem);
  StationarityReport rep;
  rep.directions = directions;
  const double vnorm = space.norm(nash_rhs(problem, space, g));
  rep.scale = vnorm > 0.0 ? vnorm : 1.0;
  const auto y = controlled_state(problem, g, h_bar);
  const Vector hbar = space.pack(h_bar);
  const Vector diag = space.penalty_diagonal(problem);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int i = 0; i < 2; ++i) {
    TwoComponentState misfit(problem.grid, Orientation::forward);
    misfit.c1.values = y.c1.values - problem.target[i].c1.values;
    misfit.c2.values = y.c2.values - problem.target[i].c2.values;
    for (int d = 0; d < directions; ++d) {
      Vector dir = Vector::Zero(space.size());
      const Eigen::Index off = i == 0 ? 0 : space.size(0);
      for (Eigen::Index c = 0; c < space.size(i); ++c) dir[off + c] = U(rng);
      const auto hhat = space.unpack(dir);
      const auto yhat = apply_Lambda(problem, i, hhat[i]);
      const double lhs =
          space.inner(diag.cwiseProduct(hbar), dir) +
          problem.alpha[i] *
              (mesh::inner_product(problem.grid, misfit.c1, yhat.c1, &problem.observation) +
               mesh::inner_product(problem.grid, misfit.c2, yhat.c2, &problem.observation));
      const double dn = space.norm(dir);
      if (dn > 0.0) rep.residual[i] = std::max(rep.residual[i], std::abs(lhs) / (dn * rep.scale));
    }
  }
  return rep;
}

double leader_cost(const HierarchicProblem& problem, const Field& g) {
  return 0.5 * mesh::inner_product(problem.grid, g, g, &problem.omega);
}

std::array<double, 2> follower_costs(const HierarchicProblem& problem, const Field& g,
                                     const std::array<Field, 2>& h) {
  const ControlSpace space(problem);
  const auto y = controlled_state(problem, g, h);
  const Vector packed = space.pack(h);
  const Vector diag = space.penalty_diagonal(problem);
  std::array<double, 2> J{};
  for (int i = 0; i < 2; ++i) {
    Field e1(problem.grid), e2(problem.grid);
    e1.values = y.c1.values - problem.target[i].c1.values;
    e2.values = y.c2.values - problem.target[i].c2.values;
    const double track = mesh::inner_product(problem.grid, e1, e1, &problem.observation) +
                         mesh::inner_product(problem.grid, e2, e2, &problem.observation);
    const Vector hi = space.restrict_to(i, packed);
    J[i] = 0.5 * problem.alpha[i] * track + 0.5 * space.inner(diag.cwiseProduct(hi), hi);
  }
  return J;
}

void write_control_csv(const mesh::SpaceTimeGrid& grid, const ControlProfile& profile,
                       std::ostream& out) {
  out << std::setprecision(17);
  out << (grid.dim() == 1 ? "t,x,h\n" : "t,x,y,h\n");
  for (int k = 0; k < grid.num_levels(); ++k)
    for (int n = 0; n < grid.num_nodes(); ++n) {
      if (!profile.mask.contains(n)) continue;
      const auto c = grid.coord(n);
      out << grid.time(k) << ',' << c[0] << ',';
      if (grid.dim() == 2) out << c[1] << ',';
      out << profile.values.values(k, n) << '\n';
    }
}

}  // namespace hierctrl::nash
