#include "hierctrl/weights.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace hierctrl::weights {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Monomial-basis polynomial on the reference interval [0, 1].
struct Polynomial {
  std::vector<double> c;  // c[k] multiplies ξ^k

  double operator()(double x) const {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
    return acc;
  }
  Polynomial derivative() const {
    Polynomial d;
    for (size_t k = 1; k < c.size(); ++k) d.c.push_back(static_cast<double>(k) * c[k]);
    if (d.c.empty()) d.c.push_back(0.0);
    return d;
  }
  Polynomial antiderivative() const {
    Polynomial p;
    p.c.push_back(0.0);
    for (size_t k = 0; k < c.size(); ++k) p.c.push_back(c[k] / static_cast<double>(k + 1));
    return p;
  }
};

Polynomial operator*(const Polynomial& a, const Polynomial& b) {
  Polynomial r;
  r.c.assign(a.c.size() + b.c.size() - 1, 0.0);
  for (size_t i = 0; i < a.c.size(); ++i)
    for (size_t j = 0; j < b.c.size(); ++j) r.c[i + j] += a.c[i] * b.c[j];
  return r;
}

Polynomial operator+(const Polynomial& a, const Polynomial& b) {
  Polynomial r;
  r.c.assign(std::max(a.c.size(), b.c.size()), 0.0);
  for (size_t i = 0; i < a.c.size(); ++i) r.c[i] += a.c[i];
  for (size_t i = 0; i < b.c.size(); ++i) r.c[i] += b.c[i];
  return r;
}

Polynomial power_of(const Polynomial& base, int m) {
  Polynomial r{{1.0}};
  for (int k = 0; k < m; ++k) r = r * base;
  return r;
}

Polynomial scaled(const Polynomial& p, double s) {
  Polynomial r = p;
  for (auto& v : r.c) v *= s;
  return r;
}

// p(0) = p(1) = 0, p' = (ξc - ξ) w(ξ) with w > 0 on [0, 1]. For w = β0 (1-ξ)^m
// + β1 ξ^m the weighted mean of ξ is a convex combination of 1/(m+2) and
// (m+1)/(m+2), so the smallest admissible m is used.
Polynomial profile_with_critical_point(double xc) {
  Polynomial w;
  if (std::abs(xc - 0.5) < 1e-12) {
    w.c = {1.0};
  } else {
    int m = 1;
    while (!(1.0 / (m + 2) < xc && xc < (m + 1.0) / (m + 2))) ++m;
    const double a = (xc - 1.0 / (m + 2)) / (m + 1);
    const double b = ((m + 1.0) / (m + 2) - xc) / (m + 1);
    w = scaled(power_of(Polynomial{{1.0, -1.0}}, m), b) +
        scaled(power_of(Polynomial{{0.0, 1.0}}, m), a);
  }
  return (Polynomial{{xc, -1.0}} * w).antiderivative();
}

struct AxisSamples {
  std::array<Vector, 5> d;  // derivatives of order 0..4 on interior nodes
};

}  // namespace

EtaFunction build_eta(const SpaceTimeGrid& grid, const mesh::RegionMask& omega_prime,
                      double c0_target, double eta_max) {
  if (!(eta_max > 0.0)) throw std::invalid_argument("eta_max must be positive");
  const int dim = grid.dim();
  const auto& dom = grid.domain();
  std::array<Polynomial, 2> profile;
  std::array<double, 2> xc_ref{0.5, 0.5};
  std::array<double, 2> norm{1.0, 1.0};
  EtaFunction eta;
  for (int a = 0; a < dim; ++a) {
    const double tol = 1e-12 * dom.length(a);
    if (omega_prime.box.lo[a] <= dom.lo[a] + tol || omega_prime.box.hi[a] >= dom.hi[a] - tol)
      throw std::invalid_argument("omega_prime touches the boundary");
    const double centroid = 0.5 * (omega_prime.box.lo[a] + omega_prime.box.hi[a]);
    xc_ref[a] = (centroid - dom.lo[a]) / dom.length(a);
    eta.critical_point[a] = centroid;
    profile[a] = profile_with_critical_point(xc_ref[a]);
    norm[a] = profile[a](xc_ref[a]);
  }

  const int nn = grid.num_nodes();
  std::array<AxisSamples, 2> axis;
  for (int a = 0; a < dim; ++a) {
    std::array<Polynomial, 5> ders{profile[a]};
    for (int k = 1; k < 5; ++k) ders[k] = ders[k - 1].derivative();
    const double L = dom.length(a);
    for (int k = 0; k < 5; ++k) {
      axis[a].d[k].resize(nn);
      const double scale = 1.0 / (norm[a] * std::pow(L, k));
      for (int n = 0; n < nn; ++n) {
        const double xi = (grid.coord(n)[a] - dom.lo[a]) / L;
        axis[a].d[k][n] = ders[k](xi) * scale;
      }
    }
  }
  if (dim == 1) {
    for (int k = 0; k < 5; ++k) axis[1].d[k] = k == 0 ? Vector::Ones(nn) : Vector::Zero(nn);
  }

  const auto& X = axis[0].d;
  const auto& Y = axis[1].d;
  eta.max_value = eta_max;
  eta.value = eta_max * X[0].cwiseProduct(Y[0]);
  eta.gradient.assign(dim, Vector());
  eta.grad_laplacian.assign(dim, Vector());
  eta.gradient[0] = eta_max * X[1].cwiseProduct(Y[0]);
  eta.laplacian = eta_max * (X[2].cwiseProduct(Y[0]) + X[0].cwiseProduct(Y[2]));
  eta.grad_laplacian[0] = eta_max * (X[3].cwiseProduct(Y[0]) + X[1].cwiseProduct(Y[2]));
  eta.bilaplacian = eta_max * (X[4].cwiseProduct(Y[0]) + 2.0 * X[2].cwiseProduct(Y[2]) +
                               X[0].cwiseProduct(Y[4]));
  if (dim == 2) {
    eta.gradient[1] = eta_max * X[0].cwiseProduct(Y[1]);
    eta.grad_laplacian[1] = eta_max * (X[2].cwiseProduct(Y[1]) + X[0].cwiseProduct(Y[3]));
  }
  eta.gradient_norm = Vector::Zero(nn);
  for (int a = 0; a < dim; ++a) eta.gradient_norm += eta.gradient[a].cwiseAbs2();
  eta.gradient_norm = eta.gradient_norm.cwiseSqrt();

  // η on ∂Ω is a product containing p(0) or p(1).
  for (int a = 0; a < dim; ++a) {
    const double edge = std::max(std::abs(profile[a](0.0)), std::abs(profile[a](1.0))) / norm[a];
    eta.boundary_max_abs = std::max(eta.boundary_max_abs, eta_max * edge);
  }

  eta.c0 = kInf;
  for (int n = 0; n < nn; ++n)
    if (!omega_prime.contains(n)) eta.c0 = std::min(eta.c0, eta.gradient_norm[n]);
  if (eta.c0 < c0_target)
    throw std::runtime_error("build_eta: achieved C0 " + std::to_string(eta.c0) +
                             " below target " + std::to_string(c0_target));
  return eta;
}

namespace {

double denominator(double t, double horizon) {
  const double p = t * (horizon - t);
  return p > 0.0 ? std::sqrt(p) : 0.0;
}

}  // namespace

SigmaTau eval_sigma_tau(const EtaFunction& eta, double lambda, const SpaceTimeGrid& grid) {
  const double M = eta.max_value;
  const double top = std::exp(4.0 * lambda * M);
  SigmaTau out{Field(grid), Field(grid)};
  for (int k = 0; k < grid.num_levels(); ++k) {
    const double d = denominator(grid.time(k), grid.horizon());
    for (int n = 0; n < grid.num_nodes(); ++n) {
      const double e = std::exp(lambda * (2.0 * M + eta.value[n]));
      out.sigma.values(k, n) = d > 0.0 ? (top - e) / d : kInf;
      out.tau.values(k, n) = d > 0.0 ? e / d : kInf;
    }
  }
  return out;
}

SigmaStar eval_sigma_star_rho_star(const Field& sigma, double s, const SpaceTimeGrid& grid) {
  SigmaStar out;
  const int levels = grid.num_levels();
  out.sigma_star.resize(levels);
  out.rho_star.resize(levels);
  double numerator_max = 0.0;
  for (int k = 0; k < levels; ++k) {
    out.sigma_star[k] = sigma.level(k).maxCoeff();
    out.rho_star[k] = std::exp(0.5 * s * out.sigma_star[k]);
    const double d = denominator(grid.time(k), grid.horizon());
    if (d > 0.0) numerator_max = std::max(numerator_max, out.sigma_star[k] * d);
  }
  // σ*(T/2) = max_x numerator / (T/2)
  out.rho0 = std::exp(0.5 * s * numerator_max / (0.5 * grid.horizon()));
  return out;
}

ModifiedWeights eval_modified_weights(const EtaFunction& eta, double lambda,
                                      const SpaceTimeGrid& grid) {
  const double M = eta.max_value;
  const double top = std::exp(4.0 * lambda * M);
  const double T = grid.horizon();
  ModifiedWeights out{std::vector<double>(grid.num_levels()), Field(grid), Field(grid)};
  for (int k = 0; k < grid.num_levels(); ++k) {
    const double t = grid.time(k);
    out.l[k] = t <= 0.5 * T ? 0.5 * T : denominator(t, T);
    for (int n = 0; n < grid.num_nodes(); ++n) {
      const double e = std::exp(lambda * (2.0 * M + eta.value[n]));
      out.sigma_bar.values(k, n) = out.l[k] > 0.0 ? (top - e) / out.l[k] : kInf;
      out.tau_bar.values(k, n) = out.l[k] > 0.0 ? e / out.l[k] : kInf;
    }
  }
  return out;
}

CarlemanWeights build_weights(const EtaFunction& eta, const CarlemanParams& params,
                              const SpaceTimeGrid& grid) {
  if (params.lambda < 1.0 || params.s < 1.0)
    throw std::invalid_argument("Carleman parameters require lambda >= 1 and s >= 1");
  CarlemanWeights w;
  w.params = params;
  w.eta_max = eta.max_value;
  auto st = eval_sigma_tau(eta, params.lambda, grid);
  w.sigma = std::move(st.sigma);
  w.tau = std::move(st.tau);
  auto star = eval_sigma_star_rho_star(w.sigma, params.s, grid);
  w.sigma_star = std::move(star.sigma_star);
  w.rho_star = std::move(star.rho_star);
  w.rho0 = star.rho0;
  auto mod = eval_modified_weights(eta, params.lambda, grid);
  w.l = std::move(mod.l);
  w.sigma_bar = std::move(mod.sigma_bar);
  w.tau_bar = std::move(mod.tau_bar);
  return w;
}

double CarlemanWeights::damped(int level, int node, double power) const {
  const double sg = sigma.values(level, node);
  if (!std::isfinite(sg)) return 0.0;
  const double s = params.s;
  return std::exp(-2.0 * s * sg + power * std::log(s * tau.values(level, node)));
}

double CarlemanWeights::damped_bar(int level, int node, double power) const {
  const double sg = sigma_bar.values(level, node);
  if (!std::isfinite(sg)) return 0.0;
  const double s = params.s;
  return std::exp(-2.0 * s * sg + power * std::log(s * tau_bar.values(level, node)));
}

double CarlemanWeights::rho_star_inv2(int level) const {
  const double ss = sigma_star[level];
  return std::isfinite(ss) ? std::exp(-params.s * ss) : 0.0;
}

double CarlemanWeights::rho_star_sq(int level) const {
  const double ss = sigma_star[level];
  return std::isfinite(ss) ? std::exp(params.s * ss) : kInf;
}

void write_weights_csv(const SpaceTimeGrid& grid, const CarlemanWeights& w, std::ostream& out) {
  out << std::setprecision(17);
  out << (grid.dim() == 1 ? "t,x," : "t,x,y,") << "sigma,tau,sigma_bar,tau_bar\n";
  for (int k = 0; k < grid.num_levels(); ++k)
    for (int n = 0; n < grid.num_nodes(); ++n) {
      const auto c = grid.coord(n);
      out << grid.time(k) << ',' << c[0] << ',';
      if (grid.dim() == 2) out << c[1] << ',';
      out << w.sigma.values(k, n) << ',' << w.tau.values(k, n) << ','
          << w.sigma_bar.values(k, n) << ',' << w.tau_bar.values(k, n) << '\n';
    }
}

}  // namespace hierctrl::weights
