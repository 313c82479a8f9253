// Shared fixtures and hand-rolled random generators for the test binaries.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "hierctrl/analysis.hpp"

namespace testsupport {

using hierctrl::HierarchicProblem;
using hierctrl::ProblemConfig;
using hierctrl::mesh::Field;
using hierctrl::mesh::SpaceTimeGrid;
using hierctrl::mesh::Vector;

inline const double kPi = std::acos(-1.0);

// Benchmark regions and coefficients on a coarser grid.
inline ProblemConfig small_config(int n_x = 15, int n_t = 20) {
  auto c = ProblemConfig::benchmark();
  c.n_x = n_x;
  c.n_t = n_t;
  return c;
}

// Non-trivial initial state and targets.
inline ProblemConfig with_data(ProblemConfig c) {
  c.initial[0] = [](double x, double, double) { return std::sin(kPi * x); };
  c.initial[1] = c.initial[0];
  c.target[0][0] = [](double, double, double) { return 0.5; };
  c.target[1][1] = [](double, double, double) { return 0.5; };
  return c;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = -1.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

  Vector vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform();
    return v;
  }

  // Random values on every level, including both endpoints.
  Field field(const SpaceTimeGrid& g) {
    Field f(g);
    for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values.data()[i] = uniform();
    return f;
  }

  // Random values on levels [first, last] and nodes of `mask`, zero elsewhere.
  Field field_on(const SpaceTimeGrid& g, const hierctrl::mesh::RegionMask& mask, int first,
                 int last) {
    Field f(g);
    for (int k = first; k <= last; ++k)
      for (int n = 0; n < g.num_nodes(); ++n)
        if (mask.contains(n)) f.values(k, n) = uniform();
    return f;
  }

  hierctrl::pde::TwoComponentState state(const SpaceTimeGrid& g) {
    hierctrl::pde::TwoComponentState s(g, hierctrl::pde::Orientation::forward);
    s.c1 = field(g);
    s.c2 = field(g);
    return s;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline double rel_gap(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

inline double max_abs(const Field& f) { return f.values.cwiseAbs().maxCoeff(); }

inline double state_inner(const HierarchicProblem& p, const hierctrl::pde::TwoComponentState& a,
                          const hierctrl::pde::TwoComponentState& b,
                          const hierctrl::mesh::RegionMask* mask = nullptr) {
  return hierctrl::mesh::inner_product(p.grid, a.c1, b.c1, mask) +
         hierctrl::mesh::inner_product(p.grid, a.c2, b.c2, mask);
}

}  // namespace testsupport
