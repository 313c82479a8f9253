#include "hierctrl/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <openssl/crypto.h>

#include "hierctrl/analysis.hpp"
#include "hierctrl/leader.hpp"

namespace hierctrl::cli {

namespace fs = std::filesystem;
using mesh::Field;

namespace {

json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

json num_list(const std::vector<double>& xs) {
  json a = json::array();
  for (double x : xs) a.push_back(num(x));
  return a;
}

json vec_json(const mesh::Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

// Output directory with hashed file records and a schema.
class RunDir {
 public:
  explicit RunDir(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& name, const std::string& bytes, json schema) {
    const fs::path path = dir_ / name;
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << bytes;
    out.close();
    if (!out) throw std::runtime_error("failed writing " + path.string());
    files_.push_back({{"path", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
    if (!schema.is_null()) schema_[name] = std::move(schema);
  }

  void write_json(const std::string& name, const json& j, json schema) {
    write(name, j.dump(2) + "\n", std::move(schema));
  }

  /// Records a file written by someone else (a sweep cell manifest).
  void record(const std::string& name) {
    const std::string bytes = read_file((dir_ / name).string());
    files_.push_back({{"path", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }

  void finish_schema() {
    if (files_.empty()) return;
    json s;
    s["description"] = "column and field meanings for every data file in this directory";
    s["files"] = schema_;
    write_json("schema.json", s, nullptr);
  }

  const fs::path& dir() const { return dir_; }
  const json& files() const { return files_; }

 private:
  fs::path dir_;
  json files_ = json::array();
  json schema_ = json::object();
};

json csv_schema(std::initializer_list<std::pair<const char*, const char*>> cols) {
  json c = json::object();
  for (const auto& [k, v] : cols) c[k] = v;
  return {{"format", "csv"}, {"columns", c}};
}

json json_schema(std::initializer_list<std::pair<const char*, const char*>> fields) {
  json c = json::object();
  for (const auto& [k, v] : fields) c[k] = v;
  return {{"format", "json"}, {"fields", c}};
}

json trajectory_schema(int dim) {
  json s = csv_schema({{"t", "time of the level"},
                       {"x", "first node coordinate"},
                       {"c1", "first state component"},
                       {"c2", "second state component"}});
  if (dim == 2) s["columns"]["y"] = "second node coordinate";
  return s;
}

json control_schema(int dim, const char* what) {
  json s = csv_schema({{"t", "time of the level"}, {"x", "first node coordinate"}, {"h", what}});
  if (dim == 2) s["columns"]["y"] = "second node coordinate";
  return s;
}

json samples_schema(const char* lhs, const char* rhs) {
  return csv_schema({{"seed", "seed of the random terminal data ψ^T"},
                     {"lhs", lhs},
                     {"rhs", rhs},
                     {"ratio", "lhs / rhs; inf when rhs = 0 < lhs, nan when both vanish"}});
}

std::string csv_samples(const std::vector<analysis::SampleRow>& rows) {
  std::ostringstream ss;
  analysis::write_samples_csv(rows, ss);
  return ss.str();
}

json summary_json(const analysis::RatioSummary& s) {
  return {{"max", num(s.max)},         {"median", num(s.median)}, {"min", num(s.min)},
          {"p90", num(s.p90)},         {"counted", s.counted},    {"excluded", s.excluded},
          {"infinite", s.infinite}};
}

Field sample_control(const HierarchicProblem& p, const Expression& e) {
  return mesh::sample_field(p.grid, [&](double x, double y, double t) { return e(x, y, t); });
}

void require_observation(const HierarchicProblem& p) {
  if (!p.observation_meets_omega())
    throw ConfigError("regions: Od does not intersect omega (required by this command)");
}

json problem_summary(const HierarchicProblem& p) {
  return {{"num_nodes", p.grid.num_nodes()},
          {"num_levels", p.grid.num_levels()},
          {"dt", p.grid.dt()},
          {"nodes", {{"omega", p.omega.count()},
                     {"omega1", p.omega1.count()},
                     {"omega2", p.omega2.count()},
                     {"Od", p.observation.count()},
                     {"omega_prime", p.omega_prime.count()}}},
          {"mu", {p.mu[0], p.mu[1]}},
          {"mu_auto", {p.mu_auto[0], p.mu_auto[1]}},
          {"mu_threshold", {p.mu_threshold[0], p.mu_threshold[1]}},
          {"tau", p.tau},
          {"rho0", p.weights.rho0},
          {"eta_c0", p.eta.c0},
          {"sign_certificate", {{"holds", p.sign.holds}, {"sign", p.sign.sign}, {"a0", p.sign.a0}}}};
}

// ---------------------------------------------------------------------------

json cmd_validate(const HierarchicProblem& p, RunDir&) { return problem_summary(p); }

json cmd_simulate(const HierarchicProblem& p, const ProblemFile& f, RunDir& dir) {
  const Field g = sample_control(p, f.g);
  const std::array<Field, 2> h{sample_control(p, f.h1), sample_control(p, f.h2)};
  const auto y = nash::controlled_state(p, g, h);
  std::ostringstream traj;
  pde::write_trajectory_csv(p.grid, y, traj);
  dir.write("trajectory.csv", traj.str(), trajectory_schema(p.grid.dim()));

  std::ostringstream norms;
  norms << std::setprecision(17) << "t,norm_c1,norm_c2\n";
  for (int k = 0; k < p.grid.num_levels(); ++k) {
    const mesh::Vector a = y.c1.level(k).transpose(), b = y.c2.level(k).transpose();
    norms << p.grid.time(k) << ',' << std::sqrt(mesh::spatial_inner_product(p.grid, a, a)) << ','
          << std::sqrt(mesh::spatial_inner_product(p.grid, b, b)) << '\n';
  }
  dir.write("norms.csv", norms.str(),
            csv_schema({{"t", "time of the level"},
                        {"norm_c1", "L2(Omega) norm of the first component"},
                        {"norm_c2", "L2(Omega) norm of the second component"}}));
  const mesh::Vector yT = y.at(p.grid.n_t()), y0 = y.at(0);
  json s = {{"terminal_norm", std::sqrt(leader::terminal_inner(p, yT, yT))},
            {"initial_norm", std::sqrt(leader::terminal_inner(p, y0, y0))}};
  dir.write_json("simulate.json", s,
                 json_schema({{"terminal_norm", "‖y(T)‖ in L2(Omega)^2"},
                              {"initial_norm", "‖y(0)‖ in L2(Omega)^2"}}));
  return s;
}

json cmd_nash(const HierarchicProblem& p, const ProblemFile& f, RunDir& dir) {
  const Field g = sample_control(p, f.g);
  const auto op = nash::solve_nash_operator(p, g);
  const auto opt = nash::solve_nash_optimality(p, g);
  const nash::ControlSpace space(p);
  const std::array<Field, 2> h_op{op.h_bar[0].values, op.h_bar[1].values};
  const std::array<Field, 2> h_opt{opt.nash.h_bar[0].values, opt.nash.h_bar[1].values};
  const mesh::Vector a = space.pack(h_op), b = space.pack(h_opt);
  const double base = space.norm(a);
  const double diff = space.norm(a - b);
  const auto st = nash::check_nash_stationarity(p, g, h_op, 20, p.seed + 1);
  const auto costs = nash::follower_costs(p, g, h_op);

  for (int i = 0; i < 2; ++i) {
    std::ostringstream ss;
    nash::write_control_csv(p.grid, op.h_bar[i], ss);
    const std::string name = "h" + std::to_string(i + 1) + ".csv";
    dir.write(name, ss.str(),
              control_schema(p.grid.dim(), "Nash follower control on its region (operator route)"));
  }
  json s = {{"route_difference", num(base > 0.0 ? diff / base : diff)},
            {"route_difference_is_relative", base > 0.0},
            {"gmres_iterations", op.iterations},
            {"gmres_residual", op.residual},
            {"optimality_residual", opt.nash.residual},
            {"stationarity_residual", {st.residual[0], st.residual[1]}},
            {"stationarity_directions", st.directions},
            {"follower_costs", {costs[0], costs[1]}},
            {"mu", {p.mu[0], p.mu[1]}},
            {"mu_threshold", {p.mu_threshold[0], p.mu_threshold[1]}},
            {"tau", p.tau},
            {"h_norm", {space.norm(space.restrict_to(0, a)), space.norm(space.restrict_to(1, a))}}};
  dir.write_json(
      "nash.json", s,
      json_schema({{"route_difference", "‖h_operator - h_optimality‖_H / ‖h_operator‖_H"},
                   {"gmres_iterations", "GMRES iterations for the operator equation"},
                   {"gmres_residual", "final relative GMRES residual"},
                   {"optimality_residual", "residual of the coupled optimality-system solve"},
                   {"stationarity_residual", "max weak first-order residual per follower"},
                   {"follower_costs", "J_1, J_2 at the equilibrium"},
                   {"mu", "follower penalty weights in use"},
                   {"mu_threshold", "coercivity thresholds for mu_i"},
                   {"tau", "coercivity constant at the chosen mu"},
                   {"h_norm", "‖h_i‖_H per follower"}}));
  return s;
}

json hum_json(const leader::HierarchicReport& r) {
  const auto& h = r.hum;
  return {{"epsilon", h.epsilon},
          {"terminal_norm", h.terminal_norm},
          {"free_terminal_norm", h.free_terminal_norm},
          {"relative_terminal_norm",
           num(h.free_terminal_norm > 0.0 ? h.terminal_norm / h.free_terminal_norm : 0.0)},
          {"leader_cost", h.leader_cost},
          {"follower_costs", {r.follower_costs[0], r.follower_costs[1]}},
          {"f_tilde", h.f_tilde},
          {"cg_iterations", h.cg_iterations},
          {"cg_residual", h.cg_residual},
          {"converged", h.converged},
          {"first_order_residual", h.tt_residual},
          {"duality_gap", h.duality_residual},
          {"stationarity_residual", {r.stationarity.residual[0], r.stationarity.residual[1]}},
          {"f_history", num_list(h.f_history)},
          {"psi_T_hat", vec_json(h.psi_T_hat)},
          {"warnings", r.warnings}};
}

json cmd_control(const HierarchicProblem& p, const ProblemFile& f, RunDir& dir) {
  require_observation(p);
  std::vector<double> eps = f.run.epsilon_ladder;
  if (eps.empty()) eps.push_back(f.run.epsilon);
  const leader::Gramian gram(p);
  std::ostringstream decay;
  decay << std::setprecision(17)
        << "epsilon,terminal_norm,free_terminal_norm,relative_terminal_norm,leader_cost,"
           "follower_cost1,follower_cost2,f_tilde,cg_iterations,cg_residual,converged\n";
  json s;
  std::vector<double> terms;
  bool all_converged = true;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto rep = leader::run_hierarchic_control(p, eps[i], &gram);
    const auto& h = rep.hum;
    const std::string tag = std::to_string(i);
    dir.write_json("hum_" + tag + ".json", hum_json(rep),
                   json_schema({{"epsilon", "penalty ε"},
                                {"terminal_norm", "‖y(T)‖ under the computed leader control"},
                                {"free_terminal_norm", "‖y(T)‖ with g = 0 (followers still play)"},
                                {"relative_terminal_norm", "terminal_norm / free_terminal_norm"},
                                {"leader_cost", "½ ∫∫_ω g²"},
                                {"follower_costs", "J_1, J_2"},
                                {"f_tilde", "penalized dual functional at the minimizer"},
                                {"cg_iterations", "conjugate-gradient iterations"},
                                {"cg_residual", "final relative CG residual"},
                                {"converged", "CG reached its tolerance"},
                                {"first_order_residual", "max normalized first-order identity residual"},
                                {"duality_gap", "normalized gap of the duality identity"},
                                {"stationarity_residual", "Nash first-order residual per follower"},
                                {"f_history", "penalized functional per CG iteration"},
                                {"psi_T_hat", "minimizing terminal data, first then second component"},
                                {"warnings", "non-fatal diagnostics"}}));
    std::ostringstream gcsv;
    nash::write_control_csv(p.grid, h.g_bar, gcsv);
    dir.write("g_" + tag + ".csv", gcsv.str(), control_schema(p.grid.dim(), "leader control g on omega"));
    const double rel = h.free_terminal_norm > 0.0 ? h.terminal_norm / h.free_terminal_norm : 0.0;
    decay << eps[i] << ',' << h.terminal_norm << ',' << h.free_terminal_norm << ',' << rel << ','
          << h.leader_cost << ',' << rep.follower_costs[0] << ',' << rep.follower_costs[1] << ','
          << h.f_tilde << ',' << h.cg_iterations << ',' << h.cg_residual << ','
          << (h.converged ? 1 : 0) << '\n';
    terms.push_back(h.terminal_norm);
    all_converged = all_converged && h.converged;
    s["free_terminal_norm"] = h.free_terminal_norm;
  }
  dir.write("decay.csv", decay.str(),
            csv_schema({{"epsilon", "penalty ε"},
                        {"terminal_norm", "‖y(T)‖ under the computed leader control"},
                        {"free_terminal_norm", "‖y(T)‖ with g = 0"},
                        {"relative_terminal_norm", "terminal_norm / free_terminal_norm"},
                        {"leader_cost", "½ ∫∫_ω g²"},
                        {"follower_cost1", "J_1"},
                        {"follower_cost2", "J_2"},
                        {"f_tilde", "penalized dual functional at the minimizer"},
                        {"cg_iterations", "conjugate-gradient iterations"},
                        {"cg_residual", "final relative CG residual"},
                        {"converged", "1 when CG reached its tolerance"}}));
  bool decreasing = true;
  for (std::size_t i = 1; i < terms.size(); ++i) decreasing = decreasing && terms[i] < terms[i - 1];
  s["epsilon"] = eps;
  s["terminal_norm"] = terms;
  s["strictly_decreasing"] = decreasing;
  s["final_terminal_norm"] = terms.back();
  s["final_relative_terminal_norm"] =
      num(s["free_terminal_norm"].get<double>() > 0.0 ? terms.back() / s["free_terminal_norm"].get<double>() : 0.0);
  s["all_converged"] = all_converged;
  return s;
}

json cmd_observability(const HierarchicProblem& p, const ProblemFile& f, RunDir& dir) {
  require_observation(p);
  const auto sampler = analysis::parse_sampler(f.run.sampler);
  const auto rep = analysis::observability_ratio(p, f.run.samples, p.seed, sampler);
  dir.write("observability_samples.csv", csv_samples(rep.samples),
            samples_schema("‖ψ(0)‖² + Σ_i ∫∫|γ^i|²", "∫∫_ω ψ_1²"));
  json o = {{"samples", f.run.samples},
            {"sampler", f.run.sampler},
            {"sample_max_ratio", num(rep.ratio)},
            {"lhs", rep.lhs},
            {"rhs", rep.rhs},
            {"power_estimate", num(rep.power_estimate)},
            {"power_iterations", rep.power_iterations},
            {"power_converged", rep.power_converged},
            {"regularization", rep.regularization},
            {"summary", summary_json(rep.summary)},
            {"maximizer", vec_json(rep.maximizer)}};
  dir.write_json("observability.json", o,
                 json_schema({{"sample_max_ratio", "largest lhs/rhs over the samples"},
                              {"lhs", "‖ψ(0)‖² + Σ_i ∫∫|γ^i|² at the maximizing sample"},
                              {"rhs", "∫∫_ω ψ_1² at the maximizing sample"},
                              {"power_estimate", "generalized Rayleigh-quotient estimate of the supremum"},
                              {"regularization", "multiple of the terminal mass matrix added to the rhs form"},
                              {"summary", "ratio quantiles over counted samples"},
                              {"maximizer", "terminal data of the maximizing sample"}}));
  json energy;
  for (auto which : {analysis::EnergyCheck::theta_Q, analysis::EnergyCheck::theta_half,
                     analysis::EnergyCheck::gamma}) {
    const auto e = analysis::energy_constant_check(which, p, f.run.samples, p.seed, sampler);
    const std::string name = analysis::to_string(which);
    dir.write("energy_" + name + "_samples.csv", csv_samples(e.samples),
              samples_schema("left side of the energy estimate", "right side without the constant"));
    energy[name] = {{"constant", num(e.constant)}, {"summary", summary_json(e.summary)}};
  }
  dir.write_json("energy.json", energy,
                 json_schema({{"theta_Q", "∫∫_Q|θ|² vs (α1²/μ1²+α2²/μ2²)∫∫_Q|ρ*^-2 ψ1|²"},
                              {"theta_half", "∫_0^{T/2}∫ |θ|²+|Δθ|² vs the same factor on [0,T/2]"},
                              {"gamma", "Σ∫∫_Q|γ^i|² vs Σ μ_i^-2 ∫∫_{ω_i}|ρ*^-2 ψ1|²"}}));
  return {{"sample_max_ratio", num(rep.ratio)},
          {"power_estimate", num(rep.power_estimate)},
          {"infinite", rep.summary.infinite},
          {"theta_Q", energy["theta_Q"]["constant"]},
          {"theta_half", energy["theta_half"]["constant"]},
          {"gamma", energy["gamma"]["constant"]}};
}

json cmd_carleman(const HierarchicProblem& p, const ProblemFile& f, RunDir& dir) {
  require_observation(p);
  const auto sampler = analysis::parse_sampler(f.run.sampler);
  auto lams = f.run.lambdas.empty() ? std::vector<double>{p.weights.params.lambda} : f.run.lambdas;
  auto ss = f.run.ss.empty() ? std::vector<double>{p.weights.params.s} : f.run.ss;
  json cells = json::array();
  double worst = 0.0;
  int infinite = 0;
  int idx = 0;
  for (double lam : lams)
    for (double s : ss) {
      if (lam < 1.0 || s < 1.0) throw ConfigError("run.lambda and run.s entries must be at least 1");
      const auto rep = analysis::carleman_ratio_check(p, lam, s, f.run.samples, p.seed, sampler);
      const auto w = weights::build_weights(p.eta, {lam, s}, p.grid);
      const auto wc = analysis::check_weights(p, w);
      const std::string name = "carleman_" + std::to_string(idx++) + "_samples.csv";
      dir.write(name, csv_samples(rep.samples),
                samples_schema("I(ψ1)+I(ψ2)+I(θ1)+I(θ2)", "λ^24 ∫∫_ω e^{-2sσ}(sτ)^34 ψ1²"));
      json terms = json::array();
      for (double t : rep.breakdown.terms) terms.push_back(num(t));
      cells.push_back({{"lambda", lam},
                       {"s", s},
                       {"samples_file", name},
                       {"max_ratio", num(rep.ratio)},
                       {"lhs", num(rep.lhs)},
                       {"rhs", num(rep.rhs)},
                       {"breakdown", terms},
                       {"summary", summary_json(rep.summary)},
                       {"weights", {{"bar_mismatch", wc.bar_mismatch},
                                    {"rho_bound_violation", num(wc.rho_bound_violation)},
                                    {"gradient_violations", wc.gradient_violations},
                                    {"c0", wc.c0}}}});
      infinite += rep.summary.infinite;
      if (std::isfinite(rep.ratio)) worst = std::max(worst, rep.ratio);
    }
  json out = {{"samples", f.run.samples}, {"sampler", f.run.sampler},
              {"sign_condition_holds", p.sign.holds}, {"cells", cells}};
  dir.write_json(
      "carleman.json", out,
      json_schema({{"cells[].max_ratio", "largest lhs/rhs over the samples"},
                   {"cells[].breakdown", "the six weighted terms of I at the maximizing sample"},
                   {"cells[].weights.bar_mismatch", "max relative gap of modified and plain weights on [T/2,T)"},
                   {"cells[].weights.rho_bound_violation", "max of 2s(σ-σ*); non-positive when ρ*^-4 <= e^{-2sσ}"},
                   {"cells[].weights.gradient_violations", "nodes outside omega_prime with |∇η| < C0"},
                   {"cells[].summary", "ratio quantiles over counted samples"}}));
  return {{"cells", static_cast<int>(cells.size())}, {"max_finite_ratio", num(worst)}, {"infinite", infinite}};
}

json run_single(const std::string& command, const HierarchicProblem& p, const ProblemFile& f,
                RunDir& dir) {
  if (command == "validate") return cmd_validate(p, dir);
  if (command == "simulate") return cmd_simulate(p, f, dir);
  if (command == "nash") return cmd_nash(p, f, dir);
  if (command == "control") return cmd_control(p, f, dir);
  if (command == "observability") return cmd_observability(p, f, dir);
  if (command == "carleman") return cmd_carleman(p, f, dir);
  throw ConfigError("unknown command '" + command + "'");
}

// Applies command-line overrides to the parsed document.
ProblemFile apply_overrides(const RunOptions& o, const ProblemFile& f, json& record) {
  json doc = f.document;
  auto set = [&](const std::string& path, const json& v) {
    doc = with_override(doc, path, v);
    record[path] = v;
  };
  if (o.seed) set("seed", *o.seed);
  if (o.epsilon) set("run.epsilon", *o.epsilon);
  if (!o.epsilon_ladder.empty()) set("run.epsilon_ladder", o.epsilon_ladder);
  if (o.samples) set("run.samples", *o.samples);
  if (!o.lambdas.empty()) set("run.lambda", o.lambdas);
  if (!o.ss.empty()) set("run.s", o.ss);
  if (o.backend) set("solver.backend", *o.backend);
  if (o.sampler) set("run.sampler", *o.sampler);
  if (record.empty()) return f;
  ProblemFile out = problem_from_json(doc);
  out.sha256 = f.sha256;
  return out;
}

std::string cell_name(std::size_t i) {
  std::ostringstream ss;
  ss << "cell_" << std::setw(4) << std::setfill('0') << i;
  return ss.str();
}

json cmd_sweep(const RunOptions& o, const ProblemFile& f, RunDir& dir, bool& failed) {
  if (!f.sweep) throw ConfigError("sweep: the problem file has no 'sweep' section");
  const auto& spec = *f.sweep;
  if (std::find(commands().begin(), commands().end(), spec.command) == commands().end())
    throw ConfigError("sweep.command: unknown command '" + spec.command + "'");

  // Cartesian product, last parameter fastest.
  std::vector<std::vector<json>> cells(1);
  for (const auto& [path, values] : spec.parameters) {
    std::vector<std::vector<json>> next;
    for (const auto& c : cells)
      for (const auto& v : values) {
        auto e = c;
        e.push_back(v);
        next.push_back(std::move(e));
      }
    cells = std::move(next);
  }

  json base = f.document;
  base.erase("sweep");
  struct Cell {
    json doc;
    int status = -1;
  };
  std::vector<Cell> work(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    json d = base;
    for (std::size_t j = 0; j < spec.parameters.size(); ++j)
      d = with_override(d, spec.parameters[j].first, cells[i][j]);
    work[i].doc = std::move(d);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= work.size()) return;
      const fs::path cdir = dir.dir() / cell_name(i);
      fs::create_directories(cdir);
      const std::string text = work[i].doc.dump(2) + "\n";
      {
        std::ofstream(cdir / "problem.json", std::ios::binary) << text;
      }
      RunOptions co;
      co.command = spec.command;
      co.problem_path = (cdir / "problem.json").string();
      co.out_dir = cdir.string();
      co.jobs = 1;
      co.extra_versions = o.extra_versions;
      work[i].status = dispatch(co);
    }
  };
  const int jobs = std::max(1, std::min<int>(o.jobs, static_cast<int>(work.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  // Deterministic aggregation in cell order.
  std::vector<json> summaries;
  std::set<std::string> keys;
  json listing = json::array();
  for (std::size_t i = 0; i < work.size(); ++i) {
    const std::string name = cell_name(i);
    dir.record(name + "/problem.json");
    dir.record(name + "/manifest.json");
    const json m = json::parse(read_file((dir.dir() / name / "manifest.json").string()));
    json flat = json::object();
    if (m.contains("summary") && m["summary"].is_object())
      for (const auto& [k, v] : m["summary"].items())
        if (v.is_number() || v.is_boolean()) {
          flat[k] = v;
          keys.insert(k);
        }
    summaries.push_back(flat);
    json entry = {{"cell", name}, {"status", m.value("status", "unknown")}};
    for (std::size_t j = 0; j < spec.parameters.size(); ++j)
      entry["parameters"][spec.parameters[j].first] = cells[i][j];
    listing.push_back(entry);
    if (work[i].status != 0) failed = true;
  }
  std::ostringstream csv;
  csv << std::setprecision(17) << "cell";
  for (const auto& [path, _] : spec.parameters) csv << ',' << path;
  csv << ",status";
  for (const auto& k : keys) csv << ',' << k;
  csv << '\n';
  for (std::size_t i = 0; i < work.size(); ++i) {
    csv << cell_name(i);
    for (const auto& v : cells[i]) {
      std::string text = v.is_string() ? v.get<std::string>() : v.dump();
      if (text.find_first_of(",\"\n") != std::string::npos) {
        std::string quoted = "\"";
        for (char ch : text) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        text = quoted + "\"";
      }
      csv << ',' << text;
    }
    csv << ',' << listing[i]["status"].get<std::string>();
    for (const auto& k : keys) {
      csv << ',';
      if (summaries[i].contains(k)) {
        const auto& v = summaries[i][k];
        if (v.is_boolean())
          csv << (v.get<bool>() ? 1 : 0);
        else if (v.is_number_integer())
          csv << v.get<long long>();
        else
          csv << v.get<double>();
      }
    }
    csv << '\n';
  }
  json sch = csv_schema({{"cell", "cell directory"}, {"status", "ok or error"}});
  for (const auto& [path, _] : spec.parameters) sch["columns"][path] = "swept parameter value";
  for (const auto& k : keys) sch["columns"][k] = "scalar from the cell manifest summary";
  dir.write("sweep.csv", csv.str(), sch);
  return {{"command", spec.command}, {"cells", listing}};
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"simulate", "nash",  "control", "observability",
                                          "carleman", "sweep", "validate"};
  return c;
}

json versions(const std::map<std::string, std::string>& extra) {
  json v = {{"hierctrl", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                          "." + std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"openssl", OpenSSL_version(OPENSSL_VERSION)},
            {"compiler", __VERSION__},
            {"cplusplus", __cplusplus}};
  for (const auto& [k, val] : extra) v[k] = val;
  return v;
}

int run_problem(const RunOptions& options, const ProblemFile& file) {
  const auto t0 = std::chrono::steady_clock::now();
  RunDir dir(options.out_dir);
  json manifest;
  manifest["command"] = options.command;
  manifest["problem"] = options.problem_path;
  manifest["config_sha256"] = file.sha256;
  int exit_code = 0;
  std::string status = "ok";
  json error = nullptr;
  json warnings = json::array();
  json overrides = json::object();
  json summary = json::object();
  json resolved = file.resolved;
  try {
    const ProblemFile f = apply_overrides(options, file, overrides);
    resolved = f.resolved;
    if (options.command == "sweep") {
      bool failed = false;
      summary = cmd_sweep(options, f, dir, failed);
      if (failed) {
        status = "error";
        exit_code = 1;
        error = "one or more sweep cells failed";
      }
    } else {
      if (std::find(commands().begin(), commands().end(), options.command) == commands().end())
        throw ConfigError("unknown command '" + options.command + "'");
      const HierarchicProblem p = build_checked(f);
      resolved["functionals"]["mu_resolved"] = {p.mu[0], p.mu[1]};
      for (const auto& w : p.warnings) warnings.push_back(w);
      summary = run_single(options.command, p, f, dir);
      if (summary.contains("warnings"))
        for (const auto& w : summary["warnings"]) warnings.push_back(w);
    }
  } catch (const std::invalid_argument& e) {
    status = "error";
    exit_code = 2;
    error = e.what();
  } catch (const std::exception& e) {
    status = "error";
    exit_code = 1;
    error = e.what();
  }
  if (options.command != "validate") {
    try {
      dir.finish_schema();
    } catch (const std::exception& e) {
      status = "error";
      exit_code = exit_code ? exit_code : 1;
      error = e.what();
    }
  }
  manifest["seed"] = resolved.contains("seed") ? resolved["seed"] : json(nullptr);
  manifest["overrides"] = overrides;
  manifest["status"] = status;
  manifest["exit_code"] = exit_code;
  manifest["error"] = error;
  manifest["warnings"] = warnings;
  manifest["summary"] = summary;
  manifest["outputs"] = dir.files();
  manifest["resolved_config"] = resolved;
  manifest["versions"] = versions(options.extra_versions);
  if (status != "ok" && error.is_string())
    std::cerr << "hierctrl " << options.command << ": " << error.get<std::string>() << "\n";
  manifest["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ofstream out(dir.dir() / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << "\n";
  if (!out) return exit_code ? exit_code : 1;
  return exit_code;
}

int dispatch(const RunOptions& options) {
  ProblemFile file;
  try {
    file = parse_problem(options.problem_path);
  } catch (const std::exception& e) {
    try {
      fs::create_directories(options.out_dir);
      json manifest = {{"command", options.command},
                       {"problem", options.problem_path},
                       {"config_sha256", nullptr},
                       {"status", "error"},
                       {"exit_code", 2},
                       {"error", e.what()},
                       {"outputs", json::array()},
                       {"versions", versions(options.extra_versions)}};
      std::ofstream(fs::path(options.out_dir) / "manifest.json") << manifest.dump(2) << "\n";
    } catch (...) {
    }
    std::cerr << "hierctrl " << options.command << ": " << e.what() << "\n";
    return 2;
  }
  return run_problem(options, file);
}

}  // namespace hierctrl::cli
