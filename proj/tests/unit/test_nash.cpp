#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "../support.hpp"

using namespace hierctrl;
using namespace hierctrl::nash;
using testsupport::Rng;

namespace {

const HierarchicProblem& small_problem() {
  static const auto p = build_problem(testsupport::with_data(testsupport::small_config()));
  return p;
}

const HierarchicProblem& benchmark_problem() {
  static const auto p = build_problem(testsupport::with_data(ProblemConfig::benchmark()));
  return p;
}

Field random_control(Rng& rng, const HierarchicProblem& p, int i) {
  return rng.field_on(p.grid, p.follower_mask(i), 1, p.grid.n_t() - 1);
}

double state_norm(const HierarchicProblem& p, const TwoComponentState& s) {
  return std::sqrt(testsupport::state_inner(p, s, s));
}

double packed_rel_diff(const ControlSpace& space, const Vector& a, const Vector& b) {
  return space.norm(a - b) / std::max(space.norm(b), 1e-300);
}

}  // namespace

TEST_CASE("control space packing") {
  const auto& p = small_problem();
  const ControlSpace space(p);
  CHECK(space.size(0) == p.omega1.count() * (p.grid.n_t() - 1));
  CHECK(space.size(1) == p.omega2.count() * (p.grid.n_t() - 1));
  Rng rng(1);
  const std::array<Field, 2> h{random_control(rng, p, 0), random_control(rng, p, 1)};
  const auto back = space.unpack(space.pack(h));
  CHECK((back[0].values - h[0].values).norm() == 0.0);
  CHECK((back[1].values - h[1].values).norm() == 0.0);
  const Vector v = space.pack(h);
  CHECK(space.inner(v, v) ==
        doctest::Approx(mesh::inner_product(p.grid, h[0], h[0]) + mesh::inner_product(p.grid, h[1], h[1])));
}

TEST_CASE("Lambda is linear and vanishes at zero") {
  const auto& p = small_problem();
  Rng rng(2);
  for (int i = 0; i < 2; ++i) {
    CHECK(testsupport::max_abs(apply_Lambda(p, i, Field(p.grid)).c1) == 0.0);
    const Field a = random_control(rng, p, i), b = random_control(rng, p, i);
    Field comb(p.grid);
    comb.values = 2.0 * a.values - 3.0 * b.values;
    const auto la = apply_Lambda(p, i, a), lb = apply_Lambda(p, i, b), lc = apply_Lambda(p, i, comb);
    const double scale = testsupport::max_abs(lc.c1) + testsupport::max_abs(lc.c2);
    CHECK((lc.c1.values - 2.0 * la.c1.values + 3.0 * lb.c1.values).cwiseAbs().maxCoeff() <= 1e-12 * scale);
    CHECK((lc.c2.values - 2.0 * la.c2.values + 3.0 * lb.c2.values).cwiseAbs().maxCoeff() <= 1e-12 * scale);
  }
}

TEST_CASE("Lambda adjoint identity over random pairs") {
  const auto& p = small_problem();
  const ControlSpace space(p);
  Rng rng(3);
  for (int i = 0; i < 2; ++i)
    for (int trial = 0; trial < 100; ++trial) {
      const Field h = random_control(rng, p, i);
      const auto w = rng.state(p.grid);
      const double lhs = testsupport::state_inner(p, apply_Lambda(p, i, h), w);
      const Field adj = apply_Lambda_star(p, i, w);
      const double rhs = space.inner(space.embed(i, h), space.embed(i, adj));
      const double bound = 1e-10 * space.norm(space.embed(i, h)) * state_norm(p, w);
      CHECK(std::abs(lhs - rhs) <= bound);
    }
}

TEST_CASE("Lambda adjoint is supported on the follower region and window") {
  const auto& p = small_problem();
  Rng rng(4);
  for (int i = 0; i < 2; ++i) {
    const Field adj = apply_Lambda_star(p, i, rng.state(p.grid));
    for (int k = 0; k <= p.grid.n_t(); ++k)
      for (int n = 0; n < p.grid.num_nodes(); ++n)
        if (k == 0 || k == p.grid.n_t() || !p.follower_mask(i).contains(n))
          CHECK(adj.values(k, n) == 0.0);
  }
}

TEST_CASE("operator norms agree with a dense singular value oracle") {
  const auto& p = small_problem();
  const ControlSpace space(p);
  const auto rep = coercivity_tau(p);
  const double w = p.grid.dt() * p.grid.cell_volume();
  std::array<double, 2> dense{};
  for (int i = 0; i < 2; ++i) {
    const Eigen::Index off = i == 0 ? 0 : space.size(0);
    std::vector<Vector> cols;
    for (Eigen::Index c = 0; c < space.size(i); ++c) {
      Vector e = Vector::Zero(space.size());
      e[off + c] = 1.0;
      const auto y = apply_Lambda(p, i, space.unpack(e)[i]);
      Vector col(2 * p.grid.n_t() * p.grid.num_nodes());
      Eigen::Index r = 0;
      for (int j = 0; j < 2; ++j)
        for (int k = 1; k <= p.grid.n_t(); ++k)
          for (int n = 0; n < p.grid.num_nodes(); ++n)
            col[r++] = p.observation.contains(n) ? std::sqrt(w) * y.component(j).values(k, n) : 0.0;
      cols.push_back(col);
    }
    Eigen::MatrixXd M(cols.front().size(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) M.col(static_cast<Eigen::Index>(c)) = cols[c];
    const double smax = Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()[0];
    dense[i] = smax * smax / w;
    CHECK(rep.norm_sq[i] == doctest::Approx(dense[i]).epsilon(0.01));
  }
  const double r2 = p.weights.rho0 * p.weights.rho0;
  CHECK(rep.thresholds[0] == doctest::Approx(p.alpha[1] * dense[0] / (4 * r2)).epsilon(0.01));
  CHECK(rep.thresholds[1] == doctest::Approx(p.alpha[0] * dense[1] / (4 * r2)).epsilon(0.01));
  CHECK(rep.tau > 0.0);
}

TEST_CASE("without tracking terms K is the weighted penalty") {
  auto c = testsupport::with_data(testsupport::small_config());
  c.alpha = {0.0, 0.0};
  c.mu = {2.0, 3.0};
  const auto p = build_problem(c);
  const ControlSpace space(p);
  const auto rep = coercivity_tau(p);
  CHECK(rep.thresholds[0] == 0.0);
  CHECK(rep.thresholds[1] == 0.0);
  const double r2 = p.weights.rho0 * p.weights.rho0;
  CHECK(rep.tau == doctest::Approx(2.0 * r2));
  Rng rng(5);
  const std::array<Field, 2> h{random_control(rng, p, 0), random_control(rng, p, 1)};
  const auto Kh = apply_K(p, h);
  for (int i = 0; i < 2; ++i)
    for (int k = 1; k < p.grid.n_t(); ++k) {
      const double expect = (i == 0 ? 2.0 : 3.0) * p.weights.rho_star[k] * p.weights.rho_star[k];
      for (int n = 0; n < p.grid.num_nodes(); ++n)
        CHECK(Kh[i].values(k, n) == doctest::Approx(expect * h[i].values(k, n)).epsilon(1e-12));
    }
  // Nash pair is zero when neither follower tracks anything.
  const auto sol = solve_nash_operator(p, Field(p.grid));
  CHECK(testsupport::max_abs(sol.h_bar[0].values) == 0.0);
  CHECK(testsupport::max_abs(sol.h_bar[1].values) == 0.0);
}

TEST_CASE("coercivity over random controls at automatic penalties") {
  const auto& p = benchmark_problem();
  REQUIRE(p.mu_auto[0]);
  const ControlSpace space(p);
  CHECK(p.mu[0] == doctest::Approx(2.0 * p.mu_threshold[0]));
  CHECK(p.mu[1] == doctest::Approx(2.0 * p.mu_threshold[1]));
  CHECK(p.tau > 0.0);
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector h = rng.vector(space.size());
    CHECK(space.inner(apply_K(p, space, h), h) >= p.tau * space.inner(h, h));
  }
}

TEST_CASE("zero data gives the zero Nash pair on both routes") {
  const auto p = build_problem(testsupport::small_config());
  const auto a = solve_nash_operator(p, Field(p.grid));
  const auto b = solve_nash_optimality(p, Field(p.grid));
  for (int i = 0; i < 2; ++i) {
    CHECK(testsupport::max_abs(a.h_bar[i].values) == 0.0);
    CHECK(testsupport::max_abs(b.nash.h_bar[i].values) == 0.0);
  }
}

TEST_CASE("operator and optimality routes agree") {
  for (const auto* p : {&small_problem(), &benchmark_problem()}) {
    const ControlSpace space(*p);
    Rng rng(7);
    const Field g = rng.field_on(p->grid, p->omega, 1, p->grid.n_t());
    const auto a = solve_nash_operator(*p, g);
    const auto b = solve_nash_optimality(*p, g);
    CHECK(a.converged);
    const Vector va = space.pack({a.h_bar[0].values, a.h_bar[1].values});
    const Vector vb = space.pack({b.nash.h_bar[0].values, b.nash.h_bar[1].values});
    CHECK(space.norm(va) > 0.0);
    CHECK(packed_rel_diff(space, va, vb) <= 1e-6);
    // Optimality-route controls live on their follower regions.
    for (int i = 0; i < 2; ++i)
      for (int n = 0; n < p->grid.num_nodes(); ++n)
        if (!p->follower_mask(i).contains(n)) CHECK(b.nash.h_bar[i].values.values.col(n).norm() == 0.0);
  }
}

TEST_CASE("Nash pair is independent of the GMRES starting point") {
  const auto& p = small_problem();
  const ControlSpace space(p);
  Rng rng(8);
  const Field g = rng.field_on(p.grid, p.omega, 1, p.grid.n_t());
  const auto a = solve_nash_operator(p, g);
  const auto b = solve_nash_operator(p, g, 10.0 * rng.vector(space.size()));
  const Vector va = space.pack({a.h_bar[0].values, a.h_bar[1].values});
  const Vector vb = space.pack({b.h_bar[0].values, b.h_bar[1].values});
  CHECK(packed_rel_diff(space, vb, va) <= 1e-8);
}

TEST_CASE("stationarity holds at the Nash pair and fails away from it") {
  const auto& p = benchmark_problem();
  Rng rng(9);
  const Field g = rng.field_on(p.grid, p.omega, 1, p.grid.n_t());
  const auto sol = solve_nash_operator(p, g);
  const std::array<Field, 2> h{sol.h_bar[0].values, sol.h_bar[1].values};
  const auto rep = check_nash_stationarity(p, g, h, 20, 1);
  const double tol = 10.0 * p.solver.gmres.tol;
  CHECK(rep.residual[0] <= tol);
  CHECK(rep.residual[1] <= tol);

  const Field delta0 = random_control(rng, p, 0);
  auto shifted = [&](double t) {
    std::array<Field, 2> hp = h;
    hp[0].values += t * delta0.values;
    return check_nash_stationarity(p, g, hp, 20, 1).residual[0];
  };
  const double r1 = shifted(1e-3), r2 = shifted(2e-3);
  CHECK(r1 > 1e3 * rep.residual[0]);
  CHECK(r2 / r1 == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("each follower cost is minimal along its own directions") {
  const auto& p = small_problem();
  Rng rng(10);
  const Field g = rng.field_on(p.grid, p.omega, 1, p.grid.n_t());
  const auto sol = solve_nash_operator(p, g);
  const std::array<Field, 2> h{sol.h_bar[0].values, sol.h_bar[1].values};
  const auto base = follower_costs(p, g, h);
  for (int i = 0; i < 2; ++i)
    for (int trial = 0; trial < 5; ++trial) {
      const Field d = random_control(rng, p, i);
      for (double t : {-1.0, -1e-2, 1e-2, 1.0}) {
        auto hp = h;
        hp[i].values += t * d.values;
        CHECK(follower_costs(p, g, hp)[i] >= base[i] - 1e-12 * std::abs(base[i]));
      }
    }
}

TEST_CASE("follower costs at zero controls match a direct evaluation") {
  const auto& p = small_problem();
  const Field g(p.grid);
  const auto J = follower_costs(p, g, {Field(p.grid), Field(p.grid)});
  const auto y = p.propagator->solve_forward(pde::SourceSpec(), p.initial1, p.initial2);
  for (int i = 0; i < 2; ++i) {
    double track = 0.0;
    for (int k = 1; k <= p.grid.n_t(); ++k)
      for (int n = 0; n < p.grid.num_nodes(); ++n) {
        if (!p.observation.contains(n)) continue;
        const double e1 = y.c1.values(k, n) - p.target[i].c1.values(k, n);
        const double e2 = y.c2.values(k, n) - p.target[i].c2.values(k, n);
        track += p.grid.dt() * p.grid.cell_volume() * (e1 * e1 + e2 * e2);
      }
    CHECK(J[i] == doctest::Approx(0.5 * p.alpha[i] * track).epsilon(1e-12));
  }
}
