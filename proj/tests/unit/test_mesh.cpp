#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "../support.hpp"

using namespace hierctrl;
using namespace hierctrl::mesh;
using testsupport::kPi;
using testsupport::Rng;

namespace {

// Rayleigh quotient -vᵀAv / vᵀv for the sampled eigenfunction sin(kπx).
double discrete_eigenvalue(int n_x, int k) {
  const auto g = build_grid(1, n_x, 2, 1.0);
  const auto A = dirichlet_laplacian(g);
  const Vector v = sample(g, [k](double x, double) { return std::sin(k * kPi * x); });
  return -v.dot(A.matrix * v) / v.dot(v);
}

}  // namespace

TEST_CASE("grid spacing and time levels") {
  const auto g = build_grid(1, 31, 40, 1.0);
  CHECK(g.num_nodes() == 31);
  CHECK(g.num_levels() == 41);
  CHECK(g.spacing(0) == doctest::Approx(1.0 / 32));
  CHECK(g.dt() == doctest::Approx(0.025));
  CHECK(g.time(40) == 1.0);
  CHECK(g.time_weight(0) == 0.0);
  CHECK(g.time_weight(7) == doctest::Approx(0.025));
  CHECK(g.coord(0)[0] == doctest::Approx(1.0 / 32));
  CHECK(g.coord(30)[0] == doctest::Approx(31.0 / 32));

  const auto g2 = build_grid(2, 4, 3, 2.0, Box{{0.0, -1.0}, {2.0, 1.0}});
  CHECK(g2.num_nodes() == 16);
  CHECK(g2.spacing(1) == doctest::Approx(0.4));
  CHECK(g2.cell_volume() == doctest::Approx(0.16));
  CHECK(g2.coord(5)[0] == doctest::Approx(0.8));
  CHECK(g2.coord(5)[1] == doctest::Approx(-0.2));
}

TEST_CASE("grid construction rejects bad input") {
  CHECK_THROWS_AS(build_grid(3, 8, 8, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(1, 2, 8, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(1, 8, 1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(1, 8, 8, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(1, 8, 8, 1.0, Box{{1.0, 0.0}, {1.0, 1.0}}), std::invalid_argument);
}

TEST_CASE("laplacian stencil in one dimension") {
  const auto g = build_grid(1, 3, 2, 1.0);
  const Eigen::MatrixXd A = dirichlet_laplacian(g).matrix;
  Eigen::MatrixXd expected(3, 3);
  expected << -2, 1, 0, 1, -2, 1, 0, 1, -2;
  expected *= 16.0;
  CHECK((A - expected).norm() == doctest::Approx(0.0));
}

TEST_CASE("laplacian eigenvalues converge at second order") {
  for (int k : {1, 2}) {
    const double exact = (k * kPi) * (k * kPi);
    const double e_coarse = std::abs(discrete_eigenvalue(15, k) - exact);
    const double e_fine = std::abs(discrete_eigenvalue(31, k) - exact);
    const double order = std::log(e_coarse / e_fine) / std::log(32.0 / 16.0);
    CHECK(order >= 1.8);
  }
  // sin(πx) is an exact discrete eigenvector with eigenvalue (4/h²) sin²(πh/2).
  const auto g = build_grid(1, 20, 2, 1.0);
  const double h = g.spacing(0);
  const Vector v = sample(g, [](double x, double) { return std::sin(kPi * x); });
  const Vector Av = dirichlet_laplacian(g).matrix * v;
  const double lam = 4.0 / (h * h) * std::pow(std::sin(kPi * h / 2), 2);
  CHECK((Av + lam * v).norm() <= 1e-10 * v.norm() * lam);
}

TEST_CASE("two-dimensional laplacian separates") {
  const auto g = build_grid(2, 9, 2, 1.0);
  const double h = g.spacing(0);
  const Vector v = sample(g, [](double x, double y) { return std::sin(kPi * x) * std::sin(2 * kPi * y); });
  const Vector Av = dirichlet_laplacian(g).matrix * v;
  const double lam = 4.0 / (h * h) * (std::pow(std::sin(kPi * h / 2), 2) + std::pow(std::sin(kPi * h), 2));
  CHECK((Av + lam * v).norm() <= 1e-10 * v.norm() * lam);
}

TEST_CASE("bilaplacian is the square of the laplacian") {
  for (int dim : {1, 2}) {
    const auto g = build_grid(dim, 7, 2, 1.0);
    const auto A = dirichlet_laplacian(g);
    const auto B = bilaplacian(A);
    const Eigen::MatrixXd Ad = A.matrix, Bd = B.matrix;
    CHECK((Bd - Ad * Ad).norm() <= 1e-12 * Bd.norm());
    CHECK((Bd - Bd.transpose()).norm() == 0.0);
    CHECK(A.symmetric);
    CHECK(B.symmetric);
    // Positive definite: smallest eigenvalue is the square of the smallest |λ(A)|.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(Ad), eb(Bd);
    const double min_a = ea.eigenvalues().cwiseAbs().minCoeff();
    CHECK(eb.eigenvalues().minCoeff() == doctest::Approx(min_a * min_a).epsilon(1e-10));
  }
  const auto g = build_grid(1, 63, 2, 1.0);
  const Vector v = sample(g, [](double x, double) { return std::sin(kPi * x); });
  const Vector Bv = bilaplacian(dirichlet_laplacian(g)).matrix * v;
  const double p4 = std::pow(kPi, 4);
  CHECK((Bv - p4 * v).norm() / (p4 * v.norm()) < 1e-3);
}

TEST_CASE("summation by parts for the bilaplacian") {
  Rng rng(11);
  for (int dim : {1, 2}) {
    const auto g = build_grid(dim, 8, 2, 1.0);
    const auto A = dirichlet_laplacian(g);
    const auto B = bilaplacian(A);
    for (int trial = 0; trial < 50; ++trial) {
      const Vector u = rng.vector(g.num_nodes());
      const Vector v = rng.vector(g.num_nodes());
      const double lhs = spatial_inner_product(g, B.matrix * u, v);
      const double rhs = spatial_inner_product(g, A.matrix * u, A.matrix * v);
      CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST_CASE("coordinate dump lists every stored entry") {
  const auto g = build_grid(1, 3, 2, 1.0);
  std::ostringstream out;
  dump_coo(dirichlet_laplacian(g), out);
  std::istringstream in(out.str());
  int r, c, lines = 0;
  double v;
  double trace = 0.0;
  while (in >> r >> c >> v) {
    ++lines;
    if (r == c) trace += v;
  }
  CHECK(lines == 7);
  CHECK(trace == doctest::Approx(-96.0));
}

TEST_CASE("region masks") {
  const auto g = build_grid(1, 9, 2, 1.0);
  const auto m = region_mask(g, Box{{0.3, 0.3}, {0.7, 0.7}}, RegionLabel::omega);
  CHECK(m.count() == 5);
  CHECK(m.contains(2));
  CHECK(m.contains(6));
  CHECK_FALSE(m.contains(1));
  CHECK_FALSE(m.contains(7));
  CHECK(measure(g, m) == doctest::Approx(0.5));

  const auto a = region_mask(g, Box{{0.05, 0.05}, {0.2, 0.2}}, RegionLabel::omega1);
  CHECK(disjoint(a, m));
  const auto b = region_mask(g, Box{{0.55, 0.55}, {0.95, 0.95}}, RegionLabel::custom);
  CHECK_FALSE(disjoint(b, m));
  CHECK(intersect(b, m).count() == 2);

  CHECK_THROWS_AS(region_mask(g, Box{{2.0, 2.0}, {3.0, 3.0}}, RegionLabel::omega), std::invalid_argument);
  CHECK_THROWS_AS(region_mask(g, Box{{0.5, 0.5}, {0.4, 0.4}}, RegionLabel::omega), std::invalid_argument);

  const auto g2 = build_grid(2, 9, 2, 1.0);
  const auto m2 = region_mask(g2, Box{{0.3, 0.1}, {0.7, 0.2}}, RegionLabel::custom);
  CHECK(m2.count() == 10);
}

TEST_CASE("space-time inner products") {
  const auto g = build_grid(1, 99, 10, 2.0);
  const Field one = sample_field(g, [](double, double, double) { return 1.0; });
  // Rectangle rule: level 0 carries no weight.
  CHECK(inner_product(g, one, one) == doctest::Approx(2.0 * 99 * g.spacing(0)));
  const auto half = region_mask(g, Box{{0.0, 0.0}, {0.5, 0.5}}, RegionLabel::custom);
  CHECK(inner_product(g, one, one, &half) == doctest::Approx(2.0 * 0.5));

  const Field s1 = sample_field(g, [](double x, double, double) { return std::sin(kPi * x); });
  const Field s2 = sample_field(g, [](double x, double, double) { return std::sin(2 * kPi * x); });
  CHECK(std::abs(inner_product(g, s1, s2)) < 1e-12);
  CHECK(inner_product(g, s1, s1) == doctest::Approx(1.0).epsilon(1e-10));

  const Field t = sample_field(g, [](double, double, double t) { return t; });
  double expected = 0.0;
  for (int k = 1; k <= g.n_t(); ++k) expected += g.dt() * g.time(k);
  CHECK(inner_product(g, t, one) == doctest::Approx(expected * 99 * g.spacing(0)));
}

TEST_CASE("constant products are exact on any region and window") {
  Rng rng(5);
  const auto g = build_grid(1, 23, 16, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const double a = rng.uniform(), b = rng.uniform();
    const double lo = rng.uniform(0.0, 0.5), hi = rng.uniform(0.55, 1.0);
    const double t0 = rng.uniform(0.0, 0.5), t1 = rng.uniform(0.5, 1.0);
    const auto mask = region_mask(g, Box{{lo, lo}, {hi, hi}}, RegionLabel::custom);
    const auto win = TimeWindow::between(g, t0, t1);
    const Field fa = sample_field(g, [a](double, double, double) { return a; });
    const Field fb = sample_field(g, [b](double, double, double) { return b; });
    const double got = inner_product(g, fa, fb, &mask, win);
    const double want = a * b * measure(g, mask) * window_length(g, win);
    CHECK(std::abs(got - want) <= 1e-13);
  }
}

TEST_CASE("time windows split additively") {
  const auto g = build_grid(1, 5, 40, 1.0);
  const auto lo = TimeWindow::between(g, 0.0, 0.5);
  const auto hi = TimeWindow::between(g, 0.5, 1.0);
  CHECK(lo.last + 1 == hi.first);
  CHECK(window_length(g, lo) == doctest::Approx(0.5));
  CHECK(window_length(g, hi) == doctest::Approx(0.5));
  Rng rng(3);
  const Field f = rng.field(g), h = rng.field(g);
  CHECK(inner_product(g, f, h, nullptr, lo) + inner_product(g, f, h, nullptr, hi) ==
        doctest::Approx(inner_product(g, f, h)));
}
