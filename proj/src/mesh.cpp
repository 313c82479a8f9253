#include "hierctrl/mesh.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace hierctrl::mesh {

SpaceTimeGrid build_grid(int dim, int n_x, int n_t, double horizon,
                         const Box& domain) {
  if (dim != 1 && dim != 2)
    throw std::invalid_argument("grid dimension must be 1 or 2");
  if (n_x < 3) throw std::invalid_argument("n_x must be at least 3");
  if (n_t < 2) throw std::invalid_argument("n_t must be at least 2");
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw std::invalid_argument("horizon T must be positive");
  for (int a = 0; a < dim; ++a)
    if (!(domain.length(a) > 0.0))
      throw std::invalid_argument("domain box must have positive extent");

  SpaceTimeGrid g;
  g.dim_ = dim;
  g.n_x_ = n_x;
  g.n_t_ = n_t;
  g.domain_ = domain;
  g.dt_ = horizon / n_t;
  g.horizon_ = g.dt_ * n_t;
  for (int a = 0; a < 2; ++a)
    g.h_[a] = a < dim ? domain.length(a) / (n_x + 1) : 1.0;
  return g;
}

std::array<double, 2> SpaceTimeGrid::coord(int node) const {
  if (dim_ == 1) return {domain_.lo[0] + (node + 1) * h_[0], 0.0};
  const int i = node % n_x_;
  const int j = node / n_x_;
  return {domain_.lo[0] + (i + 1) * h_[0], domain_.lo[1] + (j + 1) * h_[1]};
}

int SpaceTimeGrid::axis_index(int node, int axis) const {
  if (dim_ == 1) return node + 1;
  return (axis == 0 ? node % n_x_ : node / n_x_) + 1;
}

bool SpaceTimeGrid::same_shape(const SpaceTimeGrid& o) const {
  return dim_ == o.dim_ && n_x_ == o.n_x_ && n_t_ == o.n_t_ &&
         dt_ == o.dt_ && h_ == o.h_;
}

std::string to_string(RegionLabel label) {
  switch (label) {
    case RegionLabel::omega: return "omega";
    case RegionLabel::omega1: return "omega1";
    case RegionLabel::omega2: return "omega2";
    case RegionLabel::observation: return "Od";
    case RegionLabel::omega_prime: return "omega_prime";
    case RegionLabel::custom: return "custom";
  }
  return "custom";
}

int RegionMask::count() const {
  int c = 0;
  for (Eigen::Index n = 0; n < indicator.size(); ++n) c += indicator[n] > 0.5;
  return c;
}

RegionMask region_mask(const SpaceTimeGrid& grid, const Box& region,
                       RegionLabel label) {
  RegionMask mask;
  mask.label = label;
  mask.box = region;
  mask.indicator = Vector::Zero(grid.num_nodes());
  std::array<double, 2> tol{};
  for (int a = 0; a < grid.dim(); ++a) {
    if (!(region.hi[a] > region.lo[a]))
      throw std::invalid_argument(to_string(label) + ": empty interval");
    tol[a] = 1e-9 * grid.domain().length(a);
  }
  for (int n = 0; n < grid.num_nodes(); ++n) {
    const auto c = grid.coord(n);
    bool inside = true;
    for (int a = 0; a < grid.dim(); ++a)
      inside = inside && c[a] >= region.lo[a] - tol[a] &&
               c[a] <= region.hi[a] + tol[a];
    if (inside) mask.indicator[n] = 1.0;
  }
  if (mask.count() == 0)
    throw std::invalid_argument(to_string(label) +
                                " does not intersect the grid interior");
  return mask;
}

bool disjoint(const RegionMask& a, const RegionMask& b) {
  return a.indicator.cwiseProduct(b.indicator).maxCoeff() < 0.5;
}

RegionMask intersect(const RegionMask& a, const RegionMask& b) {
  RegionMask m;
  m.label = RegionLabel::custom;
  m.indicator = a.indicator.cwiseProduct(b.indicator);
  for (int ax = 0; ax < 2; ++ax) {
    m.box.lo[ax] = std::max(a.box.lo[ax], b.box.lo[ax]);
    m.box.hi[ax] = std::min(a.box.hi[ax], b.box.hi[ax]);
  }
  return m;
}

double measure(const SpaceTimeGrid& grid, const RegionMask& mask) {
  return grid.cell_volume() * mask.indicator.sum();
}

namespace {

using Triplet = Eigen::Triplet<double>;

void add_axis_stencil(const SpaceTimeGrid& grid, int axis,
                      std::vector<Triplet>& trips) {
  const double inv_h2 = 1.0 / (grid.spacing(axis) * grid.spacing(axis));
  const int n_x = grid.n_x();
  const int stride = axis == 0 ? 1 : n_x;
  for (int n = 0; n < grid.num_nodes(); ++n) {
    const int idx = grid.axis_index(n, axis);
    trips.emplace_back(n, n, -2.0 * inv_h2);
    if (idx > 1) trips.emplace_back(n, n - stride, inv_h2);
    if (idx < n_x) trips.emplace_back(n, n + stride, inv_h2);
  }
}

}  // namespace

SparseOperator dirichlet_laplacian(const SpaceTimeGrid& grid) {
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(grid.num_nodes()) * 5);
  for (int a = 0; a < grid.dim(); ++a) add_axis_stencil(grid, a, trips);
  SparseOperator op;
  op.matrix.resize(grid.num_nodes(), grid.num_nodes());
  op.matrix.setFromTriplets(trips.begin(), trips.end());
  op.matrix.makeCompressed();
  op.symmetric = true;
  op.tag = "dirichlet_laplacian";
  return op;
}

SparseOperator bilaplacian(const SparseOperator& laplacian) {
  SparseOperator op;
  op.matrix = (laplacian.matrix * laplacian.matrix).pruned();
  op.matrix.makeCompressed();
  op.symmetric = laplacian.symmetric;
  op.tag = "bilaplacian";
  return op;
}

void dump_coo(const SparseOperator& op, std::ostream& out) {
  out << std::setprecision(17);
  for (int col = 0; col < op.matrix.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(op.matrix, col); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

TimeWindow TimeWindow::between(const SpaceTimeGrid& grid, double a, double b) {
  const double eps = 1e-9 * grid.dt();
  TimeWindow w{grid.n_t() + 1, grid.n_t()};
  for (int k = 0; k <= grid.n_t(); ++k) {
    const double t = grid.time(k);
    const bool in = k == 0 ? a <= eps : (t - grid.dt() >= a - eps && t <= b + eps);
    if (!in) continue;
    if (w.first > k) w.first = k;
    w.last = k;
  }
  if (w.first > w.last) w = {1, 0};
  return w;
}

double window_length(const SpaceTimeGrid& grid, const TimeWindow& window) {
  double len = 0.0;
  for (int k = std::max(window.first, 0); k <= std::min(window.last, grid.n_t()); ++k)
    len += grid.time_weight(k);
  return len;
}

double inner_product(const SpaceTimeGrid& grid, const Field& f, const Field& g,
                     const RegionMask* mask, std::optional<TimeWindow> window) {
  if (!f.matches(grid) || !g.matches(grid))
    throw std::invalid_argument("inner_product: field does not match the grid");
  if (mask && mask->indicator.size() != grid.num_nodes())
    throw std::invalid_argument("inner_product: mask does not match the grid");
  const TimeWindow w = window.value_or(TimeWindow::all(grid));
  double total = 0.0;
  for (int k = std::max(w.first, 1); k <= std::min(w.last, grid.n_t()); ++k) {
    double level_sum = 0.0;
    if (mask) {
      for (int n = 0; n < grid.num_nodes(); ++n)
        level_sum += mask->indicator[n] * f.values(k, n) * g.values(k, n);
    } else {
      level_sum = f.level(k).dot(g.level(k));
    }
    total += grid.time_weight(k) * level_sum;
  }
  return total * grid.cell_volume();
}

double spatial_inner_product(const SpaceTimeGrid& grid, const Vector& a,
                             const Vector& b, const RegionMask* mask) {
  if (a.size() != grid.num_nodes() || b.size() != grid.num_nodes())
    throw std::invalid_argument("spatial_inner_product: size mismatch");
  if (mask) return grid.cell_volume() * (a.cwiseProduct(b).cwiseProduct(mask->indicator)).sum();
  return grid.cell_volume() * a.dot(b);
}

}  // namespace hierctrl::mesh
