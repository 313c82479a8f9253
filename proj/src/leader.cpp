#include "hierctrl/leader.hpp"

#include <cmath>
#include <random>

namespace hierctrl::leader {

using pde::Orientation;

namespace {

pde::CoupledSystemSpec dual_spec(const HierarchicProblem& p) {
  pde::CoupledSystemSpec spec;
  spec.blocks = {Orientation::backward, Orientation::forward, Orientation::forward};
  for (int i = 0; i < 2; ++i) {
    if (p.alpha[i] != 0.0)
      for (int j = 0; j < 2; ++j) {
        pde::CouplingTerm obs;
        obs.target_block = 0;
        obs.target_component = j;
        obs.source_block = i + 1;
        obs.source_component = j;
        obs.mask = p.observation.indicator;
        obs.scale = p.alpha[i];
        spec.couplings.push_back(obs);
      }
    pde::CouplingTerm drive;
    drive.target_block = i + 1;
    drive.target_component = 0;
    drive.source_block = 0;
    drive.source_component = 0;
    drive.mask = p.follower_mask(i).indicator;
    drive.time_factor = p.rho_inv2;
    drive.scale = -1.0 / p.mu[i];
    spec.couplings.push_back(drive);
  }
  return spec;
}

double random_uniform_fill(std::mt19937_64& rng, Vector& v) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = U(rng);
  return v.norm();
}

double target_pairing(const HierarchicProblem& p, const DualTrajectories& d) {
  double s = 0.0;
  for (int i = 0; i < 2; ++i) {
    if (p.alpha[i] == 0.0) continue;
    const auto& gamma = i == 0 ? d.gamma1 : d.gamma2;
    s += p.alpha[i] *
         (mesh::inner_product(p.grid, gamma.c1, p.target[i].c1, &p.observation) +
          mesh::inner_product(p.grid, gamma.c2, p.target[i].c2, &p.observation));
  }
  return s;
}

double initial_pairing(const HierarchicProblem& p, const DualTrajectories& d) {
  return mesh::spatial_inner_product(p.grid, p.initial1, d.psi.c1.level(0).transpose()) +
         mesh::spatial_inner_product(p.grid, p.initial2, d.psi.c2.level(0).transpose());
}

}  // namespace

DualSystem::DualSystem(const HierarchicProblem& problem)
    : problem_(&problem), solver_(problem.propagator, dual_spec(problem), problem.solver.coupled) {}

DualTrajectories DualSystem::solve(const TerminalData& psi_T) const {
  const auto& p = *problem_;
  const int N = p.grid.num_nodes();
  if (psi_T.size() != 2 * N) throw std::invalid_argument("terminal data has the wrong size");
  const Vector zero = Vector::Zero(N);
  std::vector<pde::BlockData> data(3);
  data[0].data1 = psi_T.head(N);
  data[0].data2 = psi_T.tail(N);
  for (int b = 1; b < 3; ++b) data[b].data1 = data[b].data2 = zero;
  auto res = solver_.solve(data);
  DualTrajectories d;
  d.psi = std::move(res.states[0]);
  d.gamma1 = std::move(res.states[1]);
  d.gamma2 = std::move(res.states[2]);
  d.theta = pde::TwoComponentState(p.grid, Orientation::forward);
  for (int j = 0; j < 2; ++j)
    d.theta.component(j).values = p.alpha[0] * d.gamma1.component(j).values +
                                  p.alpha[1] * d.gamma2.component(j).values;
  d.residual = res.residual;
  return d;
}

DualTrajectories solve_dual(const HierarchicProblem& problem, const TerminalData& psi_T) {
  return DualSystem(problem).solve(psi_T);
}

Field leader_control(const HierarchicProblem& problem, const DualTrajectories& dual) {
  Field g = pde::aligned(dual.psi.c1);
  for (int n = 0; n < problem.grid.num_nodes(); ++n)
    if (!problem.omega.contains(n)) g.values.col(n).setZero();
  return g;
}

double evaluate_F_tilde(const HierarchicProblem& problem, const DualTrajectories& dual) {
  const Field g = leader_control(problem, dual);
  return 0.5 * mesh::inner_product(problem.grid, g, g, &problem.omega) +
         initial_pairing(problem, dual) - target_pairing(problem, dual);
}

double evaluate_F_tilde(const HierarchicProblem& problem, const TerminalData& psi_T) {
  return evaluate_F_tilde(problem, solve_dual(problem, psi_T));
}

double terminal_inner(const HierarchicProblem& problem, const Vector& a, const Vector& b) {
  return problem.grid.cell_volume() * a.dot(b);
}

Gramian::Gramian(const HierarchicProblem& problem)
    : problem_(&problem), dual_(problem), optimality_(problem) {}

Vector Gramian::apply(const TerminalData& psi_T) const {
  const auto d = dual_.solve(psi_T);
  return optimality_.terminal_state(leader_control(*problem_, d), false);
}

Vector Gramian::linear_term() const {
  return optimality_.terminal_state(Field(problem_->grid), true);
}

Vector gramian_apply(const HierarchicProblem& problem, const TerminalData& psi_T) {
  return Gramian(problem).apply(psi_T);
}

double first_order_residual(const HierarchicProblem& problem, const Gramian& gramian,
                            const TerminalData& psi_hat, double epsilon,
                            const TerminalData& direction) {
  const auto hat = gramian.dual().solve(psi_hat);
  const auto dir = gramian.dual().solve(direction);
  const Field g_hat = leader_control(problem, hat);
  const Field g_dir = leader_control(problem, dir);
  const double value = mesh::inner_product(problem.grid, g_hat, g_dir, &problem.omega) +
                       initial_pairing(problem, dir) - target_pairing(problem, dir) +
                       epsilon * terminal_inner(problem, psi_hat, direction);
  const Vector b = gramian.linear_term();
  const double bn = std::sqrt(terminal_inner(problem, b, b));
  const double dn = std::sqrt(terminal_inner(problem, direction, direction));
  if (dn == 0.0) return 0.0;
  return std::abs(value) / ((bn > 0.0 ? bn : 1.0) * dn);
}

DualityCheck verify_duality_identity(const HierarchicProblem& problem, const Field& g,
                                     const TwoComponentState& y, const DualTrajectories& dual) {
  const int nt = problem.grid.n_t();
  DualityCheck c;
  c.lhs = terminal_inner(problem, y.at(nt), dual.psi.at(nt));
  const double t_control =
      mesh::inner_product(problem.grid, g, pde::aligned(dual.psi.c1), &problem.omega);
  const double t_initial = initial_pairing(problem, dual);
  const double t_target = target_pairing(problem, dual);
  c.rhs = t_control + t_initial - t_target;
  const double scale =
      std::abs(c.lhs) + std::abs(t_control) + std::abs(t_initial) + std::abs(t_target);
  c.gap = scale > 0.0 ? std::abs(c.lhs - c.rhs) / scale : 0.0;
  return c;
}

HUMResult minimize_F_tilde(const HierarchicProblem& problem, double epsilon,
                           const Gramian* gramian, int tt_directions) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  std::unique_ptr<Gramian> owned;
  if (!gramian) {
    owned = std::make_unique<Gramian>(problem);
    gramian = owned.get();
  }
  const double vol = problem.grid.cell_volume();
  const krylov::InnerProduct ip = [vol](const Vector& a, const Vector& b) { return vol * a.dot(b); };
  const Vector b = gramian->linear_term();
  auto A = [&](const Vector& x) { return Vector(gramian->apply(x) + epsilon * x); };
  const auto cg = krylov::conjugate_gradient(A, -b, Vector(), ip, problem.solver.cg);

  HUMResult r;
  r.epsilon = epsilon;
  r.psi_T_hat = cg.x;
  r.cg_iterations = cg.iterations;
  r.cg_residual = cg.residual;
  r.converged = cg.converged;
  r.f_history = cg.history;
  r.f_tilde = cg.history.empty() ? 0.0 : cg.history.back();
  r.free_terminal_norm = std::sqrt(ip(b, b));

  const auto dual = gramian->dual().solve(r.psi_T_hat);
  const Field g = leader_control(problem, dual);
  r.g_bar = nash::make_profile(problem.grid, g, problem.omega, {1, problem.grid.n_t()});
  auto sol = gramian->optimality().solve(r.g_bar.values, true);
  const Vector yT = sol.y.at(problem.grid.n_t());
  r.terminal_norm = std::sqrt(ip(yT, yT));
  r.leader_cost = nash::leader_cost(problem, r.g_bar.values);
  r.duality_residual = verify_duality_identity(problem, r.g_bar.values, sol.y, dual).gap;
  r.y = std::move(sol.y);
  r.nash = std::move(sol.nash);

  std::mt19937_64 rng(problem.seed);
  for (int d = 0; d < tt_directions; ++d) {
    Vector dir(2 * problem.grid.num_nodes());
    random_uniform_fill(rng, dir);
    r.tt_residual = std::max(
        r.tt_residual, first_order_residual(problem, *gramian, r.psi_T_hat, epsilon, dir));
  }
  return r;
}

HierarchicReport run_hierarchic_control(const HierarchicProblem& problem, double epsilon,
                                        const Gramian* gramian) {
  HierarchicReport rep;
  rep.warnings = problem.warnings;
  rep.hum = minimize_F_tilde(problem, epsilon, gramian);
  if (!rep.hum.converged)
    rep.warnings.push_back("CG stopped at relative residual " + std::to_string(rep.hum.cg_residual));
  const std::array<Field, 2> h{rep.hum.nash.h_bar[0].values, rep.hum.nash.h_bar[1].values};
  rep.leader_cost = rep.hum.leader_cost;
  rep.follower_costs = nash::follower_costs(problem, rep.hum.g_bar.values, h);
  rep.stationarity =
      nash::check_nash_stationarity(problem, rep.hum.g_bar.values, h, 20, problem.seed + 1);
  rep.duality_gap = rep.hum.duality_residual;
  return rep;
}

}  // namespace hierctrl::leader
