#include "hierctrl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

namespace hierctrl::analysis {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Node values with zero padding outside the interior.
class Stencil {
 public:
  explicit Stencil(const mesh::SpaceTimeGrid& g) : g_(&g), n_(g.n_x()), dim_(g.dim()) {}

  double at(const Vector& v, int i, int j) const {
    if (i < 1 || i > n_) return 0.0;
    if (dim_ == 1) return v[i - 1];
    if (j < 1 || j > n_) return 0.0;
    return v[(i - 1) + n_ * (j - 1)];
  }

  std::array<int, 2> ij(int node) const {
    return {g_->axis_index(node, 0), dim_ == 2 ? g_->axis_index(node, 1) : 1};
  }

  // Centered first derivative along an axis.
  double d1(const Vector& v, int node, int axis) const {
    auto [i, j] = ij(node);
    const double h = g_->spacing(axis);
    if (axis == 0) return (at(v, i + 1, j) - at(v, i - 1, j)) / (2.0 * h);
    return (at(v, i, j + 1) - at(v, i, j - 1)) / (2.0 * h);
  }

  double grad_sq(const Vector& v, int node) const {
    double s = 0.0;
    for (int a = 0; a < dim_; ++a) s += std::pow(d1(v, node, a), 2);
    return s;
  }

  // Frobenius norm squared of the discrete Hessian.
  double hessian_sq(const Vector& v, int node) const {
    auto [i, j] = ij(node);
    const double hx = g_->spacing(0);
    const double c = at(v, i, j);
    const double xx = (at(v, i + 1, j) - 2.0 * c + at(v, i - 1, j)) / (hx * hx);
    if (dim_ == 1) return xx * xx;
    const double hy = g_->spacing(1);
    const double yy = (at(v, i, j + 1) - 2.0 * c + at(v, i, j - 1)) / (hy * hy);
    const double xy = (at(v, i + 1, j + 1) - at(v, i + 1, j - 1) - at(v, i - 1, j + 1) +
                       at(v, i - 1, j - 1)) /
                      (4.0 * hx * hy);
    return xx * xx + yy * yy + 2.0 * xy * xy;
  }

 private:
  const mesh::SpaceTimeGrid* g_;
  int n_;
  int dim_;
};

// r_k ψ1[k-1]: the first adjoint component as it enters the γ equations.
Field weighted_first(const HierarchicProblem& p, const leader::DualTrajectories& d) {
  Field f = pde::aligned(d.psi.c1);
  for (int k = 0; k < p.grid.num_levels(); ++k) f.level(k) *= p.rho_inv2[k];
  return f;
}

double sq(const mesh::SpaceTimeGrid& g, const Field& f, const mesh::RegionMask* mask = nullptr,
          std::optional<mesh::TimeWindow> w = std::nullopt) {
  return mesh::inner_product(g, f, f, mask, w);
}

double state_sq(const mesh::SpaceTimeGrid& g, const pde::TwoComponentState& s) {
  return sq(g, s.c1) + sq(g, s.c2);
}

SampleRow make_row(std::uint64_t seed, double lhs, double rhs) {
  SampleRow r{seed, lhs, rhs, 0.0};
  if (rhs > 0.0)
    r.ratio = lhs / rhs;
  else
    r.ratio = lhs > 0.0 ? kInf : kNaN;
  return r;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

template <class Fn>
double windowed_sum(const HierarchicProblem& p, mesh::TimeWindow window, Fn&& level_sum) {
  const auto& g = p.grid;
  double total = 0.0;
  for (int k = std::max(window.first, 1); k <= std::min(window.last, g.n_t()); ++k)
    total += g.time_weight(k) * level_sum(k);
  return total * g.cell_volume();
}

}  // namespace

CarlemanTerms carleman_I(const HierarchicProblem& problem, const Field& phi,
                         const weights::CarlemanWeights& w) {
  const auto& g = problem.grid;
  if (!phi.matches(g)) throw std::invalid_argument("carleman_I: field does not match the grid");
  const Stencil st(g);
  const double lam = w.params.lambda;
  const std::array<double, 5> lam_pow{std::pow(lam, 8), std::pow(lam, 6), std::pow(lam, 4),
                                      std::pow(lam, 4), std::pow(lam, 2)};
  CarlemanTerms out;
  const double vol = g.cell_volume();
  for (int k = 1; k < g.n_t(); ++k) {
    const Vector v = phi.level(k).transpose();
    const Vector lap = problem.laplacian.matrix * v;
    const Vector bil = problem.bilaplacian.matrix * v;
    const Vector dt_phi = (Vector(phi.level(k + 1).transpose()) - v) / g.dt();
    const double wk = g.time_weight(k) * vol;
    for (int n = 0; n < g.num_nodes(); ++n) {
      if (!std::isfinite(w.sigma.values(k, n))) continue;
      const double grad_lap = st.grad_sq(lap, n);
      out.terms[0] += wk * lam_pow[0] * w.damped(k, n, 6) * v[n] * v[n];
      out.terms[1] += wk * lam_pow[1] * w.damped(k, n, 4) * st.grad_sq(v, n);
      out.terms[2] += wk * lam_pow[2] * w.damped(k, n, 3) * lap[n] * lap[n];
      out.terms[3] += wk * lam_pow[3] * w.damped(k, n, 2) * st.hessian_sq(v, n);
      out.terms[4] += wk * lam_pow[4] * w.damped(k, n, 1) * grad_lap;
      out.terms[5] += wk * w.damped(k, n, -1) * (dt_phi[n] * dt_phi[n] + bil[n] * bil[n]);
    }
  }
  for (double t : out.terms) out.total += t;
  return out;
}

double carleman_observation(const HierarchicProblem& problem, const Field& phi,
                            const weights::CarlemanWeights& w) {
  const double lam24 = std::pow(w.params.lambda, 24);
  return lam24 * windowed_sum(problem, mesh::TimeWindow::all(problem.grid), [&](int k) {
           double s = 0.0;
           for (int n = 0; n < problem.grid.num_nodes(); ++n)
             if (problem.omega.contains(n)) s += w.damped(k, n, 34) * phi.values(k, n) * phi.values(k, n);
           return s;
         });
}

namespace {

template <class Weight>
double two_term(const HierarchicProblem& problem, const Field& phi, mesh::TimeWindow window,
                Weight&& weight) {
  if (!phi.matches(problem.grid)) throw std::invalid_argument("field does not match the grid");
  return windowed_sum(problem, window, [&](int k) {
    const Vector v = phi.level(k).transpose();
    const Vector lap = problem.laplacian.matrix * v;
    double s = 0.0;
    for (int n = 0; n < problem.grid.num_nodes(); ++n)
      s += weight(k, n, 6.0) * v[n] * v[n] + weight(k, n, 3.0) * lap[n] * lap[n];
    return s;
  });
}

}  // namespace

double carleman_I_bar(const HierarchicProblem& problem, const Field& phi,
                      const weights::CarlemanWeights& w, mesh::TimeWindow window) {
  return two_term(problem, phi, window,
                  [&](int k, int n, double p) { return w.damped_bar(k, n, p); });
}

double carleman_I_unbarred(const HierarchicProblem& problem, const Field& phi,
                           const weights::CarlemanWeights& w, mesh::TimeWindow window) {
  return two_term(problem, phi, window, [&](int k, int n, double p) { return w.damped(k, n, p); });
}

// ---------------------------------------------------------------------------

Sampler parse_sampler(const std::string& name) {
  if (name == "smooth") return Sampler::smooth;
  if (name == "white") return Sampler::white;
  throw std::invalid_argument("unknown sampler '" + name + "' (expected smooth or white)");
}

Vector sample_terminal_data(const HierarchicProblem& problem, std::uint64_t seed, Sampler sampler,
                            int modes) {
  const auto& g = problem.grid;
  const int N = g.num_nodes();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Vector out(2 * N);
  if (sampler == Sampler::white) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = U(rng);
    return out;
  }
  const auto& box = g.domain();
  const double pi = std::acos(-1.0);
  for (int comp = 0; comp < 2; ++comp) {
    const int ny = g.dim() == 2 ? modes : 1;
    Eigen::MatrixXd c(modes, ny);
    for (int a = 0; a < modes; ++a)
      for (int b = 0; b < ny; ++b) c(a, b) = U(rng);
    for (int n = 0; n < N; ++n) {
      const auto x = g.coord(n);
      const double xi = (x[0] - box.lo[0]) / box.length(0);
      const double yi = g.dim() == 2 ? (x[1] - box.lo[1]) / box.length(1) : 0.5;
      double v = 0.0;
      for (int a = 0; a < modes; ++a)
        for (int b = 0; b < ny; ++b) {
          const double sy = g.dim() == 2 ? std::sin((b + 1) * pi * yi) : 1.0;
          v += c(a, b) * std::sin((a + 1) * pi * xi) * sy;
        }
      out[comp * N + n] = v;
    }
  }
  return out;
}

RatioSummary summarize(const std::vector<SampleRow>& rows) {
  RatioSummary s;
  std::vector<double> finite;
  for (const auto& r : rows) {
    if (std::isnan(r.ratio))
      ++s.excluded;
    else if (std::isinf(r.ratio))
      ++s.infinite;
    else
      finite.push_back(r.ratio);
  }
  s.counted = static_cast<int>(finite.size());
  if (finite.empty()) {
    s.max = s.median = s.min = s.p90 = kNaN;
  } else {
    s.max = *std::max_element(finite.begin(), finite.end());
    s.min = *std::min_element(finite.begin(), finite.end());
    s.median = quantile(finite, 0.5);
    s.p90 = quantile(finite, 0.9);
  }
  if (s.infinite > 0) s.max = kInf;
  return s;
}

// ---------------------------------------------------------------------------

CarlemanReport carleman_ratio_check(const HierarchicProblem& problem, double lambda, double s,
                                    int n_samples, std::uint64_t seed, Sampler sampler) {
  const auto w = weights::build_weights(problem.eta, {lambda, s}, problem.grid);
  const leader::DualSystem dual(problem);
  CarlemanReport rep;
  rep.lambda = lambda;
  rep.s = s;
  double best = -1.0;
  for (int i = 0; i < n_samples; ++i) {
    const std::uint64_t sd = seed + static_cast<std::uint64_t>(i);
    const auto d = dual.solve(sample_terminal_data(problem, sd, sampler));
    CarlemanTerms t;
    for (const Field* f : {&d.psi.c1, &d.psi.c2, &d.theta.c1, &d.theta.c2}) {
      const auto part = carleman_I(problem, *f, w);
      for (int j = 0; j < 6; ++j) t.terms[j] += part.terms[j];
      t.total += part.total;
    }
    const double rhs = carleman_observation(problem, d.psi.c1, w);
    rep.samples.push_back(make_row(sd, t.total, rhs));
    const double r = rep.samples.back().ratio;
    const double key = std::isnan(r) ? -1.0 : r;
    if (key > best) {
      best = key;
      rep.lhs = t.total;
      rep.rhs = rhs;
      rep.ratio = r;
      rep.breakdown = t;
    }
  }
  rep.summary = summarize(rep.samples);
  return rep;
}

// ---------------------------------------------------------------------------

ObservabilitySides observability_sides(const HierarchicProblem& problem,
                                       const leader::DualTrajectories& dual) {
  const auto& g = problem.grid;
  ObservabilitySides s;
  const Vector p1 = dual.psi.c1.level(0).transpose();
  const Vector p2 = dual.psi.c2.level(0).transpose();
  s.lhs = mesh::spatial_inner_product(g, p1, p1) + mesh::spatial_inner_product(g, p2, p2) +
          state_sq(g, dual.gamma1) + state_sq(g, dual.gamma2);
  s.rhs = sq(g, pde::aligned(dual.psi.c1), &problem.omega);
  return s;
}

namespace {

// Column images of the square-root maps of both sides.
void observability_columns(const HierarchicProblem& p, const leader::DualTrajectories& d,
                           Eigen::Ref<Vector> lhs_col, Eigen::Ref<Vector> rhs_col) {
  const auto& g = p.grid;
  const int N = g.num_nodes();
  const double vol = g.cell_volume();
  const double sv = std::sqrt(vol);
  Eigen::Index r = 0;
  for (int n = 0; n < N; ++n) lhs_col[r++] = sv * d.psi.c1.values(0, n);
  for (int n = 0; n < N; ++n) lhs_col[r++] = sv * d.psi.c2.values(0, n);
  for (const auto* s : {&d.gamma1, &d.gamma2})
    for (int j = 0; j < 2; ++j)
      for (int k = 1; k <= g.n_t(); ++k) {
        const double wk = std::sqrt(g.time_weight(k) * vol);
        for (int n = 0; n < N; ++n) lhs_col[r++] = wk * s->component(j).values(k, n);
      }
  const Field a = pde::aligned(d.psi.c1);
  Eigen::Index q = 0;
  for (int k = 1; k <= g.n_t(); ++k) {
    const double wk = std::sqrt(g.time_weight(k) * vol);
    for (int n = 0; n < N; ++n)
      if (p.omega.contains(n)) rhs_col[q++] = wk * a.values(k, n);
  }
}

}  // namespace

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> observability_forms(const HierarchicProblem& problem) {
  const auto& g = problem.grid;
  const int N = g.num_nodes();
  const int n = 2 * N;
  const Eigen::Index lhs_rows = 2 * N + 4 * static_cast<Eigen::Index>(g.n_t()) * N;
  const Eigen::Index rhs_rows = static_cast<Eigen::Index>(g.n_t()) * problem.omega.count();
  Eigen::MatrixXd L(lhs_rows, n), R(rhs_rows, n);
  const leader::DualSystem dual(problem);
  for (int j = 0; j < n; ++j) {
    const auto d = dual.solve(Vector::Unit(n, j));
    observability_columns(problem, d, L.col(j), R.col(j));
  }
  Eigen::MatrixXd A = L.transpose() * L;
  Eigen::MatrixXd G = R.transpose() * R;
  A = 0.5 * (A + A.transpose()).eval();
  G = 0.5 * (G + G.transpose()).eval();
  return {std::move(A), std::move(G)};
}

ObservabilityReport observability_ratio(const HierarchicProblem& problem, int n_samples,
                                        std::uint64_t seed, Sampler sampler) {
  ObservabilityReport rep;
  const leader::DualSystem dual(problem);
  double best = -1.0;
  for (int i = 0; i < n_samples; ++i) {
    const std::uint64_t sd = seed + static_cast<std::uint64_t>(i);
    const Vector psi_T = sample_terminal_data(problem, sd, sampler);
    const auto sides = observability_sides(problem, dual.solve(psi_T));
    rep.samples.push_back(make_row(sd, sides.lhs, sides.rhs));
    const double r = rep.samples.back().ratio;
    const double key = std::isnan(r) ? -1.0 : r;
    if (key > best) {
      best = key;
      rep.lhs = sides.lhs;
      rep.rhs = sides.rhs;
      rep.ratio = r;
      rep.maximizer = psi_T;
    }
  }
  rep.summary = summarize(rep.samples);

  // Generalized Rayleigh iteration for sup vᵀAv / vᵀ(G + δM)v, M the terminal
  // mass matrix (cell volume times identity).
  const auto [A, G] = observability_forms(problem);
  const Eigen::Index n = A.rows();
  rep.regularization = 1e-14;
  Eigen::MatrixXd C = G;
  C.diagonal().array() += rep.regularization * problem.grid.cell_volume();
  const Eigen::LLT<Eigen::MatrixXd> llt(C);
  if (llt.info() != Eigen::Success)
    throw pde::NumericalError("observability: regularized observation form is not positive definite");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = U(rng);
  if (rep.maximizer.size() == n) v += rep.maximizer / std::max(rep.maximizer.norm(), 1e-300) * v.norm();
  const auto& po = problem.solver.power;
  double value = 0.0;
  for (int it = 1; it <= po.max_iters; ++it) {
    Vector next = llt.solve(A * v);
    const double nn = std::sqrt(next.dot(C * next));
    if (!(nn > 0.0)) break;
    next /= nn;
    const double rq = next.dot(A * next) / next.dot(C * next);
    rep.power_iterations = it;
    v = next;
    if (it > 1 && std::abs(rq - value) <= po.tol * std::abs(rq)) {
      value = rq;
      rep.power_converged = true;
      break;
    }
    value = rq;
  }
  rep.power_estimate = value;
  return rep;
}

// ---------------------------------------------------------------------------

EnergyCheck parse_energy_check(const std::string& name) {
  if (name == "theta_Q") return EnergyCheck::theta_Q;
  if (name == "theta_half") return EnergyCheck::theta_half;
  if (name == "gamma") return EnergyCheck::gamma;
  throw std::invalid_argument("unknown energy check '" + name +
                              "' (expected theta_Q, theta_half or gamma)");
}

std::string to_string(EnergyCheck which) {
  switch (which) {
    case EnergyCheck::theta_Q: return "theta_Q";
    case EnergyCheck::theta_half: return "theta_half";
    case EnergyCheck::gamma: return "gamma";
  }
  return "unknown";
}

EnergyReport energy_constant_check(EnergyCheck which, const HierarchicProblem& problem,
                                   int n_samples, std::uint64_t seed, Sampler sampler) {
  const auto& g = problem.grid;
  const leader::DualSystem dual(problem);
  const auto& a = problem.alpha;
  const auto& mu = problem.mu;
  const double theta_factor = a[0] * a[0] / (mu[0] * mu[0]) + a[1] * a[1] / (mu[1] * mu[1]);
  const auto half = mesh::TimeWindow::between(g, 0.0, 0.5 * g.horizon());
  EnergyReport rep;
  rep.which = which;
  for (int i = 0; i < n_samples; ++i) {
    const std::uint64_t sd = seed + static_cast<std::uint64_t>(i);
    const auto d = dual.solve(sample_terminal_data(problem, sd, sampler));
    const Field src = weighted_first(problem, d);
    double lhs = 0.0, rhs = 0.0;
    switch (which) {
      case EnergyCheck::theta_Q:
        lhs = state_sq(g, d.theta);
        rhs = theta_factor * sq(g, src);
        break;
      case EnergyCheck::theta_half: {
        for (const Field* f : {&d.theta.c1, &d.theta.c2}) {
          Field lap(g);
          lap.values = (problem.laplacian.matrix * f->values.transpose()).transpose();
          lhs += sq(g, *f, nullptr, half) + sq(g, lap, nullptr, half);
        }
        rhs = theta_factor * sq(g, src, nullptr, half);
        break;
      }
      case EnergyCheck::gamma:
        lhs = state_sq(g, d.gamma1) + state_sq(g, d.gamma2);
        rhs = sq(g, src, &problem.omega1) / (mu[0] * mu[0]) +
              sq(g, src, &problem.omega2) / (mu[1] * mu[1]);
        break;
    }
    rep.samples.push_back(make_row(sd, lhs, rhs));
  }
  rep.summary = summarize(rep.samples);
  rep.constant = rep.summary.max;
  return rep;
}

// ---------------------------------------------------------------------------

WeightChecks check_weights(const HierarchicProblem& problem, const weights::CarlemanWeights& w) {
  const auto& g = problem.grid;
  WeightChecks c;
  c.rho_bound_violation = -kInf;
  const double s = w.params.s;
  for (int k = 1; k < g.n_t(); ++k) {
    const bool upper = g.time(k) >= 0.5 * g.horizon() - 1e-12 * g.horizon();
    for (int n = 0; n < g.num_nodes(); ++n) {
      const double sg = w.sigma.values(k, n);
      c.rho_bound_violation = std::max(c.rho_bound_violation, 2.0 * s * (sg - w.sigma_star[k]));
      if (upper) {
        auto rel = [](double a, double b) {
          return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
        };
        c.bar_mismatch = std::max({c.bar_mismatch, rel(w.sigma_bar.values(k, n), sg),
                                   rel(w.tau_bar.values(k, n), w.tau.values(k, n))});
      }
    }
  }
  c.c0 = problem.eta.c0;
  for (int n = 0; n < g.num_nodes(); ++n)
    if (!problem.omega_prime.contains(n) &&
        !(problem.eta.gradient_norm[n] > 0.0 && problem.eta.gradient_norm[n] >= c.c0))
      ++c.gradient_violations;
  if (!(c.c0 > 0.0)) ++c.gradient_violations;
  return c;
}

void write_samples_csv(const std::vector<SampleRow>& rows, std::ostream& out) {
  out << std::setprecision(17) << "seed,lhs,rhs,ratio\n";
  for (const auto& r : rows) out << r.seed << ',' << r.lhs << ',' << r.rhs << ',' << r.ratio << '\n';
}

}  // namespace hierctrl::analysis
