#include "hierctrl/krylov.hpp"

#include <cmath>
#include <random>

namespace hierctrl::krylov {

InnerProduct euclidean() {
  return [](const Vector& a, const Vector& b) { return a.dot(b); };
}

namespace {

double norm(const InnerProduct& ip, const Vector& v) { return std::sqrt(std::max(ip(v, v), 0.0)); }

}  // namespace

SolveReport gmres(const LinearMap& A, const Vector& b, const Vector& x0,
                  const LinearMap& precond, const InnerProduct& ip,
                  const GmresOptions& opts) {
  const auto n = b.size();
  auto P = [&](const Vector& v) { return precond ? precond(v) : v; };
  SolveReport rep;
  rep.x = x0.size() == n ? x0 : Vector::Zero(n);
  const double bnorm = norm(ip, b);
  if (bnorm == 0.0) {
    rep.x.setZero();
    rep.converged = true;
    return rep;
  }
  Vector r = b - A(rep.x);
  double beta = norm(ip, r);
  rep.residual = beta / bnorm;
  rep.history.push_back(rep.residual);
  const int m = std::max(1, opts.restart);

  while (rep.iterations < opts.max_iters && rep.residual > opts.tol) {
    std::vector<Vector> V;
    V.reserve(m + 1);
    V.push_back(r / beta);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
    Vector cs = Vector::Zero(m), sn = Vector::Zero(m);
    Vector g = Vector::Zero(m + 1);
    g[0] = beta;
    int j = 0;
    for (; j < m && rep.iterations < opts.max_iters; ++j) {
      Vector w = A(P(V[j]));
      for (int pass = 0; pass < 2; ++pass)  // reorthogonalized Gram-Schmidt
        for (int i = 0; i <= j; ++i) {
          const double hij = ip(w, V[i]);
          H(i, j) += hij;
          w -= hij * V[i];
        }
      H(j + 1, j) = norm(ip, w);
      V.push_back(H(j + 1, j) > 0.0 ? Vector(w / H(j + 1, j)) : Vector(Vector::Zero(n)));
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
        H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
        H(i, j) = t;
      }
      const double rho = std::hypot(H(j, j), H(j + 1, j));
      cs[j] = rho > 0.0 ? H(j, j) / rho : 1.0;
      sn[j] = rho > 0.0 ? H(j + 1, j) / rho : 0.0;
      H(j, j) = rho;
      H(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      ++rep.iterations;
      rep.history.push_back(std::abs(g[j + 1]) / bnorm);
      if (std::abs(g[j + 1]) / bnorm <= opts.tol || H(j, j) == 0.0) {
        ++j;
        break;
      }
    }
    Vector y = H.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
    Vector z = Vector::Zero(n);
    for (int i = 0; i < j; ++i) z += y[i] * V[i];
    rep.x += P(z);
    r = b - A(rep.x);
    beta = norm(ip, r);
    const double prev = rep.residual;
    rep.residual = beta / bnorm;
    if (beta == 0.0 || (j == 0) || rep.residual >= prev) break;  // breakdown or stagnation
  }
  rep.converged = rep.residual <= opts.tol;
  return rep;
}

SolveReport conjugate_gradient(const LinearMap& A, const Vector& b, const Vector& x0,
                               const InnerProduct& ip, const CgOptions& opts) {
  const auto n = b.size();
  SolveReport rep;
  rep.x = x0.size() == n ? x0 : Vector::Zero(n);
  const double bnorm = norm(ip, b);
  if (bnorm == 0.0) {
    rep.x.setZero();
    rep.converged = true;
    rep.history.push_back(0.0);
    return rep;
  }
  Vector r = b - A(rep.x);
  auto energy = [&](const Vector& x, const Vector& res) { return -0.5 * (ip(b, x) + ip(res, x)); };
  rep.history.push_back(energy(rep.x, r));
  Vector p = r;
  double rr = ip(r, r);
  rep.residual = std::sqrt(rr) / bnorm;
  while (rep.residual > opts.tol && rep.iterations < opts.max_iters) {
    const Vector Ap = A(p);
    const double pAp = ip(p, Ap);
    if (!(pAp > 0.0)) break;  // loss of definiteness
    const double alpha = rr / pAp;
    rep.x += alpha * p;
    r -= alpha * Ap;
    const double rr_new = ip(r, r);
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    ++rep.iterations;
    rep.residual = std::sqrt(rr) / bnorm;
    rep.history.push_back(energy(rep.x, r));
  }
  rep.residual = norm(ip, b - A(rep.x)) / bnorm;
  rep.converged = rep.residual <= opts.tol;
  return rep;
}

PowerReport power_iteration(const LinearMap& A, Eigen::Index n, const InnerProduct& ip,
                            const PowerOptions& opts, const Vector& start) {
  PowerReport rep;
  Vector v;
  if (start.size() == n) {
    v = start;
  } else {
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    v.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = U(rng);
  }
  double vn = norm(ip, v);
  if (vn == 0.0) {
    rep.vector = v;
    rep.converged = true;
    return rep;
  }
  v /= vn;
  double prev = 0.0;
  for (int it = 1; it <= opts.max_iters; ++it) {
    Vector w = A(v);
    const double value = ip(w, v);
    rep.iterations = it;
    rep.value = value;
    const double wn = norm(ip, w);
    if (wn == 0.0) {
      rep.vector = v;
      rep.converged = true;
      return rep;
    }
    v = w / wn;
    if (it > 1 && std::abs(value - prev) <= opts.tol * std::abs(value)) {
      rep.converged = true;
      break;
    }
    prev = value;
  }
  rep.vector = v;
  return rep;
}

}  // namespace hierctrl::krylov
