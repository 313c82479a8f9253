// Uniform space-time grids, finite-difference operators under the
// simply-supported conditions y = Δy = 0, region masks and discrete inner
// products.
//
// Conventions used throughout the library:
//  * Spatial unknowns live on interior nodes only; boundary values are zero.
//    In 2-D the node index is i + n_x * j (x runs fastest).
//  * Time levels are k = 0..n_t with t_k = k * dt. A space-time Field stores
//    every level.
//  * Space-time quadrature is the rectangle rule that matches implicit Euler:
//    level k >= 1 carries weight dt, level 0 carries weight 0. Spatial
//    quadrature is the cell volume h_x * h_y per interior node.

#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace hierctrl::mesh {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using FieldMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Axis-aligned box. For 1-D grids only the first axis is used.
struct Box {
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};

  double length(int axis) const { return hi[axis] - lo[axis]; }
};

class SpaceTimeGrid {
 public:
  int dim() const { return dim_; }
  int n_x() const { return n_x_; }
  int n_t() const { return n_t_; }
  double dt() const { return dt_; }
  double horizon() const { return horizon_; }
  const Box& domain() const { return domain_; }
  double spacing(int axis) const { return h_[axis]; }

  int num_nodes() const { return dim_ == 1 ? n_x_ : n_x_ * n_x_; }
  int num_levels() const { return n_t_ + 1; }

  double time(int level) const {
    return level == n_t_ ? horizon_ : level * dt_;
  }
  /// Rectangle-rule weight of a time level (0 at level 0, dt otherwise).
  double time_weight(int level) const { return level == 0 ? 0.0 : dt_; }
  double cell_volume() const { return dim_ == 1 ? h_[0] : h_[0] * h_[1]; }

  /// Physical coordinates of an interior node.
  std::array<double, 2> coord(int node) const;
  /// Index of the node along `axis`, 1-based in the padded numbering
  /// (0 and n_x + 1 are the boundary).
  int axis_index(int node, int axis) const;

  bool same_shape(const SpaceTimeGrid& other) const;

  friend SpaceTimeGrid build_grid(int dim, int n_x, int n_t, double horizon,
                                  const Box& domain);

 private:
  int dim_ = 1;
  int n_x_ = 0;
  int n_t_ = 0;
  double dt_ = 0.0;
  double horizon_ = 0.0;
  Box domain_{};
  std::array<double, 2> h_{0.0, 0.0};
};

/// Throws std::invalid_argument on dim outside {1,2}, n_x < 3, n_t < 2,
/// non-positive horizon or an empty domain. The stored horizon is dt * n_t.
SpaceTimeGrid build_grid(int dim, int n_x, int n_t, double horizon,
                         const Box& domain = Box{});

enum class RegionLabel { omega, omega1, omega2, observation, omega_prime, custom };

std::string to_string(RegionLabel label);

struct RegionMask {
  Vector indicator;  // one entry per interior node, 0 or 1
  RegionLabel label = RegionLabel::custom;
  Box box{};

  int count() const;
  bool contains(int node) const { return indicator[node] > 0.5; }
};

/// Nodes whose coordinates lie in the closed box (with a 1e-9 relative
/// tolerance). Throws std::invalid_argument when no interior node is hit.
RegionMask region_mask(const SpaceTimeGrid& grid, const Box& region,
                       RegionLabel label);

bool disjoint(const RegionMask& a, const RegionMask& b);
/// Node-wise product; may be empty (no error).
RegionMask intersect(const RegionMask& a, const RegionMask& b);
/// Sum of quadrature weights of the flagged nodes.
double measure(const SpaceTimeGrid& grid, const RegionMask& mask);

struct SparseOperator {
  SparseMatrix matrix;
  bool symmetric = false;
  std::string tag;
};

/// Second-order stencil (3-point in 1-D, 5-point in 2-D) with zero Dirichlet
/// data eliminated. Symmetric negative definite.
SparseOperator dirichlet_laplacian(const SpaceTimeGrid& grid);

/// Δ² under y = Δy = 0, assembled as A·A from the Dirichlet Laplacian.
SparseOperator bilaplacian(const SparseOperator& laplacian);

/// Coordinate-list text dump: "row col value" per line, 17 significant digits.
void dump_coo(const SparseOperator& op, std::ostream& out);

/// A scalar unknown sampled on every time level and interior node.
struct Field {
  FieldMatrix values;  // rows: time levels, cols: nodes

  Field() = default;
  explicit Field(const SpaceTimeGrid& grid)
      : values(FieldMatrix::Zero(grid.num_levels(), grid.num_nodes())) {}

  auto level(int k) { return values.row(k); }
  auto level(int k) const { return values.row(k); }
  bool matches(const SpaceTimeGrid& grid) const {
    return values.rows() == grid.num_levels() &&
           values.cols() == grid.num_nodes();
  }
};

/// Inclusive range of time levels.
struct TimeWindow {
  int first = 0;
  int last = 0;

  static TimeWindow all(const SpaceTimeGrid& grid) {
    return {0, grid.n_t()};
  }
  /// Levels whose rectangle-rule cell (t_{k-1}, t_k] lies in [a, b].
  static TimeWindow between(const SpaceTimeGrid& grid, double a, double b);
  bool contains(int k) const { return k >= first && k <= last; }
};

/// Quadrature length of a window: dt times the number of levels k >= 1 in it.
double window_length(const SpaceTimeGrid& grid, const TimeWindow& window);

/// ∫∫ f g over (mask × window). Throws std::invalid_argument if either field
/// does not match the grid.
double inner_product(const SpaceTimeGrid& grid, const Field& f, const Field& g,
                     const RegionMask* mask = nullptr,
                     std::optional<TimeWindow> window = std::nullopt);

/// ∫ a b dx at a fixed time.
double spatial_inner_product(const SpaceTimeGrid& grid, const Vector& a,
                             const Vector& b, const RegionMask* mask = nullptr);

/// Samples a function of (x, y) on the interior nodes.
template <class Fn>
Vector sample(const SpaceTimeGrid& grid, Fn&& fn) {
  Vector out(grid.num_nodes());
  for (int n = 0; n < grid.num_nodes(); ++n) {
    const auto c = grid.coord(n);
    out[n] = fn(c[0], c[1]);
  }
  return out;
}

/// Samples a function of (x, y, t) on every node and level.
template <class Fn>
Field sample_field(const SpaceTimeGrid& grid, Fn&& fn) {
  Field f(grid);
  for (int k = 0; k < grid.num_levels(); ++k) {
    const double t = grid.time(k);
    for (int n = 0; n < grid.num_nodes(); ++n) {
      const auto c = grid.coord(n);
      f.values(k, n) = fn(c[0], c[1], t);
    }
  }
  return f;
}

}  // namespace hierctrl::mesh
