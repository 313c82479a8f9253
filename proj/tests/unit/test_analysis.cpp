#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "../support.hpp"

using namespace hierctrl;
using namespace hierctrl::analysis;
using testsupport::kPi;
using testsupport::Rng;

namespace {

const HierarchicProblem& small_problem() {
  static const auto p = build_problem(testsupport::with_data(testsupport::small_config()));
  return p;
}

// Independent 1-D evaluation of the six weighted terms with zero padding.
std::array<double, 6> straight_I(const HierarchicProblem& p, const Field& phi,
                                 const weights::CarlemanWeights& w) {
  const auto& g = p.grid;
  const int N = g.n_x();
  const double h = g.spacing(0), dt = g.dt(), lam = w.params.lambda, s = w.params.s;
  auto pad = [N](const std::vector<double>& v, int i) { return i < 0 || i >= N ? 0.0 : v[i]; };
  auto lap_of = [&](const std::vector<double>& v) {
    std::vector<double> out(N);
    for (int i = 0; i < N; ++i) out[i] = (pad(v, i + 1) - 2 * v[i] + pad(v, i - 1)) / (h * h);
    return out;
  };
  std::array<double, 6> t{};
  for (int k = 1; k < g.n_t(); ++k) {
    std::vector<double> v(N), next(N);
    for (int i = 0; i < N; ++i) {
      v[i] = phi.values(k, i);
      next[i] = phi.values(k + 1, i);
    }
    const auto lap = lap_of(v);
    const auto bil = lap_of(lap);
    for (int i = 0; i < N; ++i) {
      const double st = s * w.tau.values(k, i);
      const double e = std::exp(-2.0 * s * w.sigma.values(k, i));
      const double grad = (pad(v, i + 1) - pad(v, i - 1)) / (2 * h);
      const double grad_lap = (pad(lap, i + 1) - pad(lap, i - 1)) / (2 * h);
      const double phit = (next[i] - v[i]) / dt;
      const double c = dt * h * e;
      t[0] += c * std::pow(lam, 8) * std::pow(st, 6) * v[i] * v[i];
      t[1] += c * std::pow(lam, 6) * std::pow(st, 4) * grad * grad;
      t[2] += c * std::pow(lam, 4) * std::pow(st, 3) * lap[i] * lap[i];
      t[3] += c * std::pow(lam, 4) * std::pow(st, 2) * lap[i] * lap[i];
      t[4] += c * std::pow(lam, 2) * st * grad_lap * grad_lap;
      t[5] += c / st * (phit * phit + bil[i] * bil[i]);
    }
  }
  return t;
}

Field mode_field(const mesh::SpaceTimeGrid& g) {
  const double p4 = std::pow(kPi, 4);
  return mesh::sample_field(g, [p4](double x, double, double t) { return std::exp(-p4 * t) * std::sin(kPi * x); });
}

Field scaled(const Field& f, double a) {
  Field out = f;
  out.values *= a;
  return out;
}

}  // namespace

TEST_CASE("weighted functional matches a straight-loop evaluation") {
  const auto& p = small_problem();
  for (double s : {1.0, 2.0}) {
    const auto w = weights::build_weights(p.eta, {2.0, s}, p.grid);
    const Field phi = mode_field(p.grid);
    const auto got = carleman_I(p, phi, w);
    const auto want = straight_I(p, phi, w);
    double total = 0.0;
    for (int j = 0; j < 6; ++j) {
      CHECK(got.terms[j] == doctest::Approx(want[j]).epsilon(1e-10));
      total += want[j];
    }
    CHECK(got.total == doctest::Approx(total).epsilon(1e-10));

    double obs = 0.0;
    for (int k = 1; k <= p.grid.n_t(); ++k)
      for (int n = 0; n < p.grid.num_nodes(); ++n)
        if (p.omega.contains(n) && std::isfinite(w.sigma.values(k, n)))
          obs += p.grid.dt() * p.grid.spacing(0) * std::exp(-2 * s * w.sigma.values(k, n)) *
                 std::pow(s * w.tau.values(k, n), 34) * phi.values(k, n) * phi.values(k, n);
    CHECK(carleman_observation(p, phi, w) == doctest::Approx(std::pow(2.0, 24) * obs).epsilon(1e-10));
  }
}

TEST_CASE("weighted functional is a non-negative quadratic form") {
  const auto& p = small_problem();
  const auto& w = p.weights;
  const auto zero = carleman_I(p, Field(p.grid), w);
  CHECK(zero.total == 0.0);
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const Field f = rng.field(p.grid);
    const auto a = carleman_I(p, f, w), b = carleman_I(p, scaled(f, 2.0), w);
    for (int j = 0; j < 6; ++j) {
      CHECK(a.terms[j] > 0.0);
      CHECK(b.terms[j] == doctest::Approx(4.0 * a.terms[j]).epsilon(1e-12));
    }
  }
  // Tiny but non-zero input still gives a positive value.
  Field tiny(p.grid);
  tiny.values(5, 7) = 1e-150;
  CHECK(carleman_I(p, tiny, w).total > 0.0);

  const auto q = build_problem(testsupport::small_config(7, 10));
  auto c2 = testsupport::small_config(7, 10);
  c2.dim = 2;
  const auto p2 = build_problem(c2);
  const Field f2 = rng.field(p2.grid);
  const auto a2 = carleman_I(p2, f2, p2.weights);
  const auto b2 = carleman_I(p2, scaled(f2, -3.0), p2.weights);
  CHECK(a2.total > 0.0);
  CHECK(b2.total == doctest::Approx(9.0 * a2.total).epsilon(1e-12));
  CHECK_THROWS(carleman_I(q, f2, q.weights));
}

TEST_CASE("modified functional on time windows") {
  const auto& p = small_problem();
  const auto& w = p.weights;
  const auto& g = p.grid;
  const auto lower = mesh::TimeWindow::between(g, 0.0, 0.5);
  const auto upper = mesh::TimeWindow::between(g, 0.5, 1.0);
  const auto all = mesh::TimeWindow::all(g);
  CHECK(carleman_I_bar(p, Field(g), w, all) == 0.0);
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Field f = rng.field(g);
    const double lo = carleman_I_bar(p, f, w, lower), hi = carleman_I_bar(p, f, w, upper);
    CHECK(lo > 0.0);
    CHECK(std::isfinite(lo));
    CHECK(lo + hi == doctest::Approx(carleman_I_bar(p, f, w, all)).epsilon(1e-13));
    CHECK(hi == doctest::Approx(carleman_I_unbarred(p, f, w, upper)).epsilon(1e-12));
    CHECK(carleman_I_unbarred(p, f, w, lower) < lo);
  }
}

TEST_CASE("ratio summaries") {
  const double inf = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<SampleRow> rows{{1, 1, 1, 1.0}, {2, 4, 1, 4.0}, {3, 2, 1, 2.0}, {4, 3, 1, 3.0}};
  auto s = summarize(rows);
  CHECK(s.counted == 4);
  CHECK(s.max == 4.0);
  CHECK(s.min == 1.0);
  CHECK(s.median == doctest::Approx(2.5));
  CHECK(s.p90 == doctest::Approx(3.7));
  rows.push_back({5, 0, 0, nan});
  s = summarize(rows);
  CHECK(s.excluded == 1);
  CHECK(s.max == 4.0);
  rows.push_back({6, 1, 0, inf});
  s = summarize(rows);
  CHECK(s.infinite == 1);
  CHECK(std::isinf(s.max));
  CHECK(s.counted == 4);

  std::ostringstream out;
  write_samples_csv(rows, out);
  CHECK(out.str().rfind("seed,lhs,rhs,ratio\n1,1,1,1\n", 0) == 0);
  CHECK(out.str().find("6,1,0,inf") != std::string::npos);
}

TEST_CASE("terminal samplers") {
  const auto& p = small_problem();
  const int n = 2 * p.grid.num_nodes();
  const Vector a = sample_terminal_data(p, 3), b = sample_terminal_data(p, 3), c = sample_terminal_data(p, 4);
  CHECK(a.size() == n);
  CHECK((a - b).norm() == 0.0);
  CHECK((a - c).norm() > 0.0);
  const Vector wa = sample_terminal_data(p, 3, Sampler::white);
  CHECK(wa.cwiseAbs().maxCoeff() <= 1.0);
  CHECK((wa - a).norm() > 0.0);
  CHECK(parse_sampler("white") == Sampler::white);
  CHECK_THROWS(parse_sampler("pink"));
  // Smooth samples are combinations of the first eight sine modes.
  const auto& g = p.grid;
  Eigen::MatrixXd basis(g.num_nodes(), 8);
  for (int m = 0; m < 8; ++m)
    for (int j = 0; j < g.num_nodes(); ++j) basis(j, m) = std::sin((m + 1) * kPi * g.coord(j)[0]);
  const Vector first = a.head(g.num_nodes());
  const Vector fit = basis * basis.colPivHouseholderQr().solve(first);
  CHECK((fit - first).norm() <= 1e-12 * first.norm());
}

TEST_CASE("Carleman sampling is finite with a consistent breakdown") {
  const auto& p = small_problem();
  for (double s : {1.0, 2.0}) {
    const auto rep = carleman_ratio_check(p, 2.0, s, 10, 1);
    CHECK(rep.samples.size() == 10);
    CHECK(rep.summary.counted == 10);
    for (const auto& r : rep.samples) {
      CHECK(std::isfinite(r.ratio));
      CHECK(r.ratio > 0.0);
    }
    double sum = 0.0;
    for (double t : rep.breakdown.terms) {
      CHECK(t >= 0.0);
      sum += t;
    }
    CHECK(sum == doctest::Approx(rep.lhs).epsilon(1e-12));
    CHECK(rep.ratio == doctest::Approx(rep.lhs / rep.rhs));
    CHECK(rep.ratio == rep.summary.max);
  }
}

TEST_CASE("observability sides cross-check the leader cost") {
  const auto& p = small_problem();
  Rng rng(4);
  const Vector psi_T = rng.vector(2 * p.grid.num_nodes());
  const auto d = leader::solve_dual(p, psi_T);
  const auto sides = observability_sides(p, d);
  const Field g = leader::leader_control(p, d);
  CHECK(sides.rhs == doctest::Approx(2.0 * nash::leader_cost(p, g)).epsilon(1e-12));
  double lhs = 0.0;
  const double h = p.grid.spacing(0), dt = p.grid.dt();
  for (int n = 0; n < p.grid.num_nodes(); ++n)
    lhs += h * (std::pow(d.psi.c1.values(0, n), 2) + std::pow(d.psi.c2.values(0, n), 2));
  for (const auto* gm : {&d.gamma1, &d.gamma2})
    for (int k = 1; k <= p.grid.n_t(); ++k)
      for (int n = 0; n < p.grid.num_nodes(); ++n)
        lhs += dt * h * (std::pow(gm->c1.values(k, n), 2) + std::pow(gm->c2.values(k, n), 2));
  CHECK(sides.lhs == doctest::Approx(lhs).epsilon(1e-12));

  // Ratio is invariant under scaling of the terminal data.
  const auto s2 = observability_sides(p, leader::solve_dual(p, Vector(-3.0 * psi_T)));
  CHECK(s2.lhs / s2.rhs == doctest::Approx(sides.lhs / sides.rhs).epsilon(1e-10));
  const auto z = observability_sides(p, leader::solve_dual(p, Vector::Zero(psi_T.size())));
  CHECK(z.lhs == 0.0);
  CHECK(z.rhs == 0.0);
}

TEST_CASE("observability estimate matches a dense generalized eigensolver") {
  const auto& p = small_problem();
  const auto rep = observability_ratio(p, 20, 1);
  CHECK(rep.power_converged);
  const auto [A, G] = observability_forms(p);
  Eigen::MatrixXd C = G;
  C.diagonal().array() += rep.regularization * p.grid.cell_volume();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, C);
  const double top = es.eigenvalues().maxCoeff();
  CHECK(rep.power_estimate == doctest::Approx(top).epsilon(1e-6));
  CHECK(rep.summary.max <= rep.power_estimate * (1.0 + 1e-8));
  CHECK(rep.summary.counted == 20);
  // Quadratic forms reproduce the per-sample sides.
  const Vector v = sample_terminal_data(p, 1);
  CHECK(v.dot(A * v) == doctest::Approx(rep.samples[0].lhs).epsilon(1e-10));
  CHECK(v.dot(G * v) == doctest::Approx(rep.samples[0].rhs).epsilon(1e-10));
}

TEST_CASE("a smaller leader region weakens observability") {
  auto c = testsupport::with_data(testsupport::small_config());
  const auto wide = observability_ratio(build_problem(c), 5, 1);
  c.omega = {{0.4, 0.4}, {0.6, 0.6}};
  const auto narrow = observability_ratio(build_problem(c), 5, 1);
  CHECK(narrow.power_estimate > wide.power_estimate);
}

TEST_CASE("energy constants are finite and stable under refinement") {
  std::array<std::array<double, 3>, 2> k{};
  const std::array<EnergyCheck, 3> checks{EnergyCheck::theta_Q, EnergyCheck::theta_half, EnergyCheck::gamma};
  for (int r = 0; r < 2; ++r) {
    const auto p = build_problem(testsupport::small_config(r == 0 ? 15 : 31, r == 0 ? 20 : 40));
    for (int j = 0; j < 3; ++j) {
      const auto rep = energy_constant_check(checks[j], p, 10, 1);
      CHECK(rep.summary.counted == 10);
      CHECK(std::isfinite(rep.constant));
      CHECK(rep.constant > 0.0);
      k[r][j] = rep.constant;
    }
  }
  for (int j = 0; j < 3; ++j) {
    const double ratio = k[0][j] / k[1][j];
    CHECK(ratio <= 2.0);
    CHECK(ratio >= 0.5);
  }
  CHECK(parse_energy_check("gamma") == EnergyCheck::gamma);
  CHECK(to_string(EnergyCheck::theta_half) == "theta_half");
  CHECK_THROWS(parse_energy_check("theta"));
}

TEST_CASE("weight checks on the benchmark parameters") {
  const auto p = build_problem(ProblemConfig::benchmark());
  for (double s : {1.0, 2.0}) {
    const auto w = weights::build_weights(p.eta, {2.0, s}, p.grid);
    const auto c = check_weights(p, w);
    CHECK(c.bar_mismatch <= 1e-14);
    CHECK(c.rho_bound_violation <= 0.0);
    CHECK(c.gradient_violations == 0);
    CHECK(c.c0 > 0.0);
  }
}
