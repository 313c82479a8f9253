#include "hierctrl/pde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <istream>
#include <ostream>

namespace hierctrl::pde {

using Triplet = Eigen::Triplet<double>;

double CoefficientField::sup_norm(int row, int col) const {
  const auto& v = get(row, col).values;
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

double CoefficientField::total_sup_norm() const {
  double s = 0.0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) s += sup_norm(r, c);
  return s;
}

CoefficientField constant_coefficients(const SpaceTimeGrid& grid, double a11, double a12,
                                       double a21, double a22) {
  CoefficientField c;
  const std::array<double, 4> vals{a11, a12, a21, a22};
  for (int i = 0; i < 4; ++i) {
    c.a[i] = Field(grid);
    c.a[i].values.setConstant(vals[i]);
  }
  c.time_constant = true;
  validate(grid, c);
  return c;
}

CoefficientField sampled_coefficients(const SpaceTimeGrid& grid, const ScalarFn& a11,
                                      const ScalarFn& a12, const ScalarFn& a21,
                                      const ScalarFn& a22) {
  CoefficientField c;
  const std::array<const ScalarFn*, 4> fns{&a11, &a12, &a21, &a22};
  for (int i = 0; i < 4; ++i) c.a[i] = mesh::sample_field(grid, *fns[i]);
  c.time_constant = true;
  for (const auto& f : c.a)
    for (int k = 1; k < grid.num_levels(); ++k)
      if (f.values.row(k) != f.values.row(0)) c.time_constant = false;
  validate(grid, c);
  return c;
}

void validate(const SpaceTimeGrid& grid, const CoefficientField& coeffs) {
  static const char* names[] = {"a11", "a12", "a21", "a22"};
  for (int i = 0; i < 4; ++i) {
    if (!coeffs.a[i].matches(grid))
      throw std::invalid_argument(std::string(names[i]) + " does not match the grid");
    if (!coeffs.a[i].values.allFinite())
      throw std::invalid_argument(std::string(names[i]) + " has non-finite values");
  }
}

SignCertificate sign_certificate(const SpaceTimeGrid& grid, const CoefficientField& coeffs,
                                 const RegionMask& region) {
  SignCertificate cert;
  double lo = INFINITY, hi = -INFINITY;
  const Field& a21 = coeffs.get(1, 0);
  for (int k = 1; k < grid.num_levels(); ++k)
    for (int n = 0; n < grid.num_nodes(); ++n)
      if (region.contains(n)) {
        lo = std::min(lo, a21.values(k, n));
        hi = std::max(hi, a21.values(k, n));
      }
  if (!std::isfinite(lo)) return cert;  // empty region
  if (lo > 0.0) {
    cert = {true, +1, lo};
  } else if (hi < 0.0) {
    cert = {true, -1, -hi};
  }
  return cert;
}

Vector TwoComponentState::at(int level) const {
  const auto n = c1.values.cols();
  Vector v(2 * n);
  v.head(n) = c1.level(level).transpose();
  v.tail(n) = c2.level(level).transpose();
  return v;
}

void TwoComponentState::set(int level, const Vector& stacked) {
  const auto n = c1.values.cols();
  c1.level(level) = stacked.head(n).transpose();
  c2.level(level) = stacked.tail(n).transpose();
}

SourceSpec& SourceSpec::add(int component, const Field& values, const RegionMask* mask,
                            double scale) {
  Field& f = this->component(component);
  if (values.values.rows() != f.values.rows() || values.values.cols() != f.values.cols())
    throw std::invalid_argument("SourceSpec::add: shape mismatch");
  if (mask) {
    for (Eigen::Index n = 0; n < f.values.cols(); ++n)
      f.values.col(n) += scale * mask->indicator[n] * values.values.col(n);
  } else {
    f.values += scale * values.values;
  }
  return *this;
}

Field aligned(const Field& backward) {
  Field out;
  out.values = mesh::FieldMatrix::Zero(backward.values.rows(), backward.values.cols());
  const auto rows = backward.values.rows();
  if (rows > 1) out.values.bottomRows(rows - 1) = backward.values.topRows(rows - 1);
  return out;
}

Propagator::Propagator(const SpaceTimeGrid& grid, const SparseOperator& bilap,
                       const CoefficientField& coeffs)
    : grid_(grid), coeffs_(coeffs) {
  validate(grid, coeffs);
  const int N = grid.num_nodes();
  if (bilap.matrix.rows() != N || bilap.matrix.cols() != N)
    throw std::invalid_argument("bilaplacian does not match the grid");
  const double dt = grid.dt();
  const int count = coeffs.time_constant ? 1 : grid.n_t();
  for (int s = 0; s < count; ++s) {
    const int level = coeffs.time_constant ? 1 : s + 1;
    std::vector<Triplet> trips;
    trips.reserve(2 * bilap.matrix.nonZeros() + 6 * N);
    for (int col = 0; col < bilap.matrix.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(bilap.matrix, col); it; ++it) {
        trips.emplace_back(it.row(), it.col(), dt * it.value());
        trips.emplace_back(it.row() + N, it.col() + N, dt * it.value());
      }
    for (int n = 0; n < N; ++n) {
      trips.emplace_back(n, n, 1.0 + dt * coeffs.get(0, 0).values(level, n));
      trips.emplace_back(n, n + N, dt * coeffs.get(0, 1).values(level, n));
      trips.emplace_back(n + N, n, dt * coeffs.get(1, 0).values(level, n));
      trips.emplace_back(n + N, n + N, 1.0 + dt * coeffs.get(1, 1).values(level, n));
    }
    SparseMatrix M(2 * N, 2 * N);
    M.setFromTriplets(trips.begin(), trips.end());
    M.makeCompressed();
    SparseMatrix Mt = M.transpose();
    Mt.makeCompressed();
    auto lu = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
    lu->compute(M);
    auto lut = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
    lut->compute(Mt);
    if (lu->info() != Eigen::Success || lut->info() != Eigen::Success)
      throw NumericalError("step matrix factorization failed");
    matrices_.push_back(std::move(M));
    lu_.push_back(std::move(lu));
    lu_t_.push_back(std::move(lut));
  }
}

const SparseMatrix& Propagator::step_matrix(int level) const {
  if (level < 1 || level > grid_.n_t()) throw std::out_of_range("step level");
  return matrices_[slot(level)];
}

Vector Propagator::step(int level, const Vector& rhs) const {
  Vector x = lu_[slot(level)]->solve(rhs);
  if (!x.allFinite())
    throw NumericalError("non-finite value in forward step at level " + std::to_string(level));
  return x;
}

Vector Propagator::step_transposed(int level, const Vector& rhs) const {
  Vector x = lu_t_[slot(level)]->solve(rhs);
  if (!x.allFinite())
    throw NumericalError("non-finite value in backward step at level " + std::to_string(level));
  return x;
}

namespace {

void check_data(const SpaceTimeGrid& grid, const Vector& a, const Vector& b) {
  if (a.size() != grid.num_nodes() || b.size() != grid.num_nodes())
    throw std::invalid_argument("initial/terminal data size does not match the grid");
  if (!a.allFinite() || !b.allFinite())
    throw std::invalid_argument("initial/terminal data must be finite");
}

void check_sources(const SpaceTimeGrid& grid, const SourceSpec& s) {
  if (s.empty()) return;
  if (!s.f1.matches(grid) || !s.f2.matches(grid))
    throw std::invalid_argument("source does not match the grid");
}

Vector stacked_source(const SourceSpec& s, int level) {
  const auto n = s.f1.values.cols();
  Vector v(2 * n);
  v.head(n) = s.f1.level(level).transpose();
  v.tail(n) = s.f2.level(level).transpose();
  return v;
}

}  // namespace

TwoComponentState Propagator::solve_forward(const SourceSpec& sources, const Vector& init1,
                                            const Vector& init2) const {
  check_data(grid_, init1, init2);
  check_sources(grid_, sources);
  TwoComponentState st(grid_, Orientation::forward);
  const int N = grid_.num_nodes();
  Vector c(2 * N);
  c << init1, init2;
  st.set(0, c);
  for (int k = 1; k <= grid_.n_t(); ++k) {
    Vector rhs = c;
    if (!sources.empty()) rhs += grid_.dt() * stacked_source(sources, k);
    c = step(k, rhs);
    st.set(k, c);
  }
  return st;
}

TwoComponentState Propagator::solve_backward(const SourceSpec& sources, const Vector& term1,
                                             const Vector& term2) const {
  check_data(grid_, term1, term2);
  check_sources(grid_, sources);
  TwoComponentState st(grid_, Orientation::backward);
  const int N = grid_.num_nodes();
  Vector p(2 * N);
  p << term1, term2;
  st.set(grid_.n_t(), p);
  for (int k = grid_.n_t(); k >= 1; --k) {
    Vector rhs = p;
    if (!sources.empty()) rhs += grid_.dt() * stacked_source(sources, k);
    p = step_transposed(k, rhs);
    st.set(k - 1, p);
  }
  return st;
}

// ---------------------------------------------------------------------------

std::string to_string(CoupledBackend backend) {
  switch (backend) {
    case CoupledBackend::assembled: return "assembled";
    case CoupledBackend::fixed_point: return "fixed_point";
    case CoupledBackend::automatic: return "auto";
  }
  return "auto";
}

CoupledBackend parse_backend(const std::string& name) {
  if (name == "assembled") return CoupledBackend::assembled;
  if (name == "fixed_point") return CoupledBackend::fixed_point;
  if (name == "auto") return CoupledBackend::automatic;
  throw std::invalid_argument("unknown coupled backend '" + name +
                              "' (expected assembled, fixed_point or auto)");
}

struct CoupledSolver::Assembled {
  SparseMatrix matrix;
  Eigen::SparseLU<SparseMatrix> lu;
};

namespace {

double factor_at(const CouplingTerm& c, int level) {
  return c.scale * (c.time_factor.empty() ? 1.0 : c.time_factor[level]);
}

double mask_at(const CouplingTerm& c, int node) {
  return c.mask.size() == 0 ? 1.0 : c.mask[node];
}

}  // namespace

CoupledSolver::CoupledSolver(std::shared_ptr<const Propagator> prop, CoupledSystemSpec spec,
                             CoupledOptions opts)
    : prop_(std::move(prop)), spec_(std::move(spec)), opts_(opts) {
  if (!prop_) throw std::invalid_argument("CoupledSolver: null propagator");
  const auto& grid = prop_->grid();
  const int nb = static_cast<int>(spec_.blocks.size());
  if (nb == 0) throw std::invalid_argument("CoupledSolver: no blocks");
  for (const auto& c : spec_.couplings) {
    if (c.target_block < 0 || c.target_block >= nb || c.source_block < 0 ||
        c.source_block >= nb)
      throw std::invalid_argument("coupling refers to a missing block");
    if (spec_.blocks[c.target_block] == spec_.blocks[c.source_block])
      throw std::invalid_argument("coupling must connect blocks of opposite orientation");
    if (c.target_component < 0 || c.target_component > 1 || c.source_component < 0 ||
        c.source_component > 1)
      throw std::invalid_argument("coupling component must be 0 or 1");
    if (c.mask.size() != 0 && c.mask.size() != grid.num_nodes())
      throw std::invalid_argument("coupling mask size does not match the grid");
    if (!c.time_factor.empty() && static_cast<int>(c.time_factor.size()) != grid.num_levels())
      throw std::invalid_argument("coupling time factor size does not match the grid");
  }
  if (!(opts_.relaxation > 0.0 && opts_.relaxation <= 1.0))
    throw std::invalid_argument("relaxation must lie in (0, 1]");

  backend_ = opts_.backend;
  if (backend_ == CoupledBackend::automatic)
    backend_ = unknowns() <= opts_.assembled_limit ? CoupledBackend::assembled
                                                   : CoupledBackend::fixed_point;
  if (backend_ != CoupledBackend::assembled) return;

  // Unknown X(b, u), u = 1..n_t: forward blocks store c^u, backward blocks ψ[u-1].
  const int nt = grid.n_t();
  const int bs = prop_->block_size();
  const int N = grid.num_nodes();
  const double dt = grid.dt();
  auto offset = [&](int b, int u) { return (static_cast<long>(b) * nt + (u - 1)) * bs; };
  std::vector<Triplet> trips;
  for (int b = 0; b < nb; ++b) {
    const bool fwd = spec_.blocks[b] == Orientation::forward;
    for (int u = 1; u <= nt; ++u) {
      const long row0 = offset(b, u);
      const SparseMatrix& M = prop_->step_matrix(u);
      for (int col = 0; col < M.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(M, col); it; ++it) {
          if (fwd)
            trips.emplace_back(row0 + it.row(), row0 + it.col(), it.value());
          else
            trips.emplace_back(row0 + it.col(), row0 + it.row(), it.value());
        }
      const int neighbour = fwd ? u - 1 : u + 1;
      if (neighbour >= 1 && neighbour <= nt) {
        const long col0 = offset(b, neighbour);
        for (int i = 0; i < bs; ++i) trips.emplace_back(row0 + i, col0 + i, -1.0);
      }
    }
  }
  for (const auto& c : spec_.couplings)
    for (int u = 1; u <= nt; ++u) {
      const double f = dt * factor_at(c, u);
      if (f == 0.0) continue;
      const long row0 = offset(c.target_block, u) + c.target_component * N;
      const long col0 = offset(c.source_block, u) + c.source_component * N;
      for (int n = 0; n < N; ++n) {
        const double m = mask_at(c, n);
        if (m != 0.0) trips.emplace_back(row0 + n, col0 + n, -f * m);
      }
    }
  assembled_ = std::make_unique<Assembled>();
  const long total = unknowns();
  assembled_->matrix.resize(total, total);
  assembled_->matrix.setFromTriplets(trips.begin(), trips.end());
  assembled_->matrix.makeCompressed();
  assembled_->lu.compute(assembled_->matrix);
  if (assembled_->lu.info() != Eigen::Success)
    throw NumericalError("space-time factorization failed: " + assembled_->lu.lastErrorMessage());
}

CoupledSolver::~CoupledSolver() = default;
CoupledSolver::CoupledSolver(CoupledSolver&&) noexcept = default;
CoupledSolver& CoupledSolver::operator=(CoupledSolver&&) noexcept = default;

long CoupledSolver::unknowns() const {
  return static_cast<long>(spec_.blocks.size()) * prop_->grid().n_t() * prop_->block_size();
}

CoupledResult CoupledSolver::solve(const std::vector<BlockData>& data) const {
  const auto& grid = prop_->grid();
  if (data.size() != spec_.blocks.size())
    throw std::invalid_argument("CoupledSolver::solve: one BlockData per block required");
  for (const auto& d : data) {
    check_data(grid, d.data1, d.data2);
    check_sources(grid, d.source);
  }
  return backend_ == CoupledBackend::assembled ? solve_assembled(data) : solve_fixed_point(data);
}

CoupledResult CoupledSolver::solve_assembled(const std::vector<BlockData>& data) const {
  const auto& grid = prop_->grid();
  const int nt = grid.n_t();
  const int bs = prop_->block_size();
  const double dt = grid.dt();
  const int nb = static_cast<int>(spec_.blocks.size());
  auto offset = [&](int b, int u) { return (static_cast<long>(b) * nt + (u - 1)) * bs; };

  Vector rhs = Vector::Zero(unknowns());
  for (int b = 0; b < nb; ++b) {
    const bool fwd = spec_.blocks[b] == Orientation::forward;
    const auto& d = data[b];
    Vector edge(bs);
    edge << d.data1, d.data2;
    for (int u = 1; u <= nt; ++u) {
      auto seg = rhs.segment(offset(b, u), bs);
      if (!d.source.empty()) seg += dt * stacked_source(d.source, u);
    }
    rhs.segment(offset(b, fwd ? 1 : nt), bs) += edge;
  }
  Vector x = assembled_->lu.solve(rhs);
  if (!x.allFinite()) throw NumericalError("non-finite value in space-time solve");

  CoupledResult res;
  res.backend = CoupledBackend::assembled;
  res.iterations = 1;
  const double rn = rhs.norm();
  res.residual = rn > 0.0 ? (assembled_->matrix * x - rhs).norm() / rn : 0.0;
  for (int b = 0; b < nb; ++b) {
    const bool fwd = spec_.blocks[b] == Orientation::forward;
    TwoComponentState st(grid, spec_.blocks[b]);
    Vector edge(bs);
    edge << data[b].data1, data[b].data2;
    st.set(fwd ? 0 : nt, edge);
    for (int u = 1; u <= nt; ++u) st.set(fwd ? u : u - 1, x.segment(offset(b, u), bs));
    res.states.push_back(std::move(st));
  }
  return res;
}

SourceSpec CoupledSolver::coupled_source(int block, const std::vector<TwoComponentState>& states,
                                         const BlockData& data) const {
  const auto& grid = prop_->grid();
  SourceSpec s = data.source.empty() ? SourceSpec(grid) : data.source;
  for (const auto& c : spec_.couplings) {
    if (c.target_block != block) continue;
    const Field& src = states[c.source_block].component(c.source_component);
    const bool src_backward = spec_.blocks[c.source_block] == Orientation::backward;
    Field& dst = s.component(c.target_component);
    for (int k = 1; k <= grid.n_t(); ++k) {
      const double f = factor_at(c, k);
      if (f == 0.0) continue;
      const int lk = src_backward ? k - 1 : k;
      for (int n = 0; n < grid.num_nodes(); ++n)
        dst.values(k, n) += f * mask_at(c, n) * src.values(lk, n);
    }
  }
  return s;
}

CoupledResult CoupledSolver::solve_fixed_point(const std::vector<BlockData>& data) const {
  const auto& grid = prop_->grid();
  const int nb = static_cast<int>(spec_.blocks.size());
  std::vector<TwoComponentState> states;
  for (int b = 0; b < nb; ++b) {
    TwoComponentState st(grid, spec_.blocks[b]);
    Vector edge(prop_->block_size());
    edge << data[b].data1, data[b].data2;
    st.set(spec_.blocks[b] == Orientation::forward ? 0 : grid.n_t(), edge);
    states.push_back(std::move(st));
  }
  auto sweep = [&](Orientation which, std::vector<TwoComponentState>& st) {
    for (int b = 0; b < nb; ++b) {
      if (spec_.blocks[b] != which) continue;
      const SourceSpec src = coupled_source(b, st, data[b]);
      st[b] = which == Orientation::forward
                  ? prop_->solve_forward(src, data[b].data1, data[b].data2)
                  : prop_->solve_backward(src, data[b].data1, data[b].data2);
    }
  };

  double omega = opts_.relaxation;
  double previous = INFINITY;
  int growth = 0;
  CoupledResult res;
  res.backend = CoupledBackend::fixed_point;
  for (int it = 1; it <= opts_.max_iters; ++it) {
    sweep(Orientation::forward, states);
    auto next = states;
    sweep(Orientation::backward, next);
    double diff = 0.0, scale = 0.0;
    for (int b = 0; b < nb; ++b) {
      if (spec_.blocks[b] != Orientation::backward) continue;
      for (int j = 0; j < 2; ++j) {
        const auto& a = next[b].component(j).values;
        auto& o = states[b].component(j).values;
        diff = std::max(diff, (a - o).cwiseAbs().maxCoeff());
        scale = std::max(scale, a.cwiseAbs().maxCoeff());
        o = omega * a + (1.0 - omega) * o;
      }
    }
    res.residual = scale > 0.0 ? diff / scale : diff;
    res.iterations = it;
    if (res.residual <= opts_.tol) {
      sweep(Orientation::forward, states);
      res.states = std::move(states);
      return res;
    }
    growth = res.residual > previous ? growth + 1 : 0;
    if (growth >= 3) {
      omega *= 0.5;
      growth = 0;
    }
    previous = res.residual;
  }
  throw ConvergenceError("fixed-point coupling did not converge in " +
                             std::to_string(opts_.max_iters) + " iterations (residual " +
                             std::to_string(res.residual) + ")",
                         res.residual);
}

CoupledResult solve_coupled_forward_backward(std::shared_ptr<const Propagator> prop,
                                             const CoupledSystemSpec& spec,
                                             const std::vector<BlockData>& data,
                                             const CoupledOptions& opts) {
  return CoupledSolver(std::move(prop), spec, opts).solve(data);
}

// ---------------------------------------------------------------------------

void write_trajectory_csv(const SpaceTimeGrid& grid, const TwoComponentState& state,
                          std::ostream& out) {
  out << std::setprecision(17);
  out << (grid.dim() == 1 ? "t,x,c1,c2\n" : "t,x,y,c1,c2\n");
  for (int k = 0; k < grid.num_levels(); ++k)
    for (int n = 0; n < grid.num_nodes(); ++n) {
      const auto c = grid.coord(n);
      out << grid.time(k) << ',' << c[0] << ',';
      if (grid.dim() == 2) out << c[1] << ',';
      out << state.c1.values(k, n) << ',' << state.c2.values(k, n) << '\n';
    }
}

namespace {
constexpr char kMagic[8] = {'H', 'I', 'E', 'R', 'T', 'R', 'J', '1'};
}

void write_trajectory_binary(const SpaceTimeGrid& grid, const TwoComponentState& state,
                             std::ostream& out) {
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t header[4] = {static_cast<std::uint32_t>(grid.dim()),
                                   static_cast<std::uint32_t>(grid.n_x()),
                                   static_cast<std::uint32_t>(grid.num_levels()), 2u};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  for (int j = 0; j < 2; ++j) {
    const auto& v = state.component(j).values;
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
}

TwoComponentState read_trajectory_binary(const SpaceTimeGrid& grid, std::istream& in) {
  char magic[8];
  std::uint32_t header[4];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error("trajectory dump: bad magic");
  if (!in.read(reinterpret_cast<char*>(header), sizeof header))
    throw std::runtime_error("trajectory dump: truncated header");
  if (header[0] != static_cast<std::uint32_t>(grid.dim()) ||
      header[1] != static_cast<std::uint32_t>(grid.n_x()) ||
      header[2] != static_cast<std::uint32_t>(grid.num_levels()) || header[3] != 2u)
    throw std::runtime_error("trajectory dump: header does not match the grid");
  TwoComponentState st(grid, Orientation::forward);
  for (int j = 0; j < 2; ++j) {
    auto& v = st.component(j).values;
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double))))
      throw std::runtime_error("trajectory dump: truncated data");
  }
  return st;
}

}  // namespace hierctrl::pde
