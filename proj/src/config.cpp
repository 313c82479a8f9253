#include "hierctrl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

namespace hierctrl::cli {

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) bad(where, "expected an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      bad(where.empty() ? key : where + "." + key, "unknown key (expected one of " + list + ")");
    }
}

std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

double number(const json& v, const std::string& where) {
  if (!v.is_number()) bad(where, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) bad(where, "expected a finite number");
  return x;
}

double positive(const json& v, const std::string& where) {
  const double x = number(v, where);
  if (!(x > 0.0)) bad(where, "must be positive");
  return x;
}

long integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) bad(where, "expected an integer");
  return v.get<long>();
}

std::vector<double> number_list(const json& v, const std::string& where) {
  if (!v.is_array()) bad(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

Expression function(const json& v, const std::string& where) {
  if (v.is_number()) return Expression::constant(number(v, where));
  if (!v.is_string()) bad(where, "expected a number or an expression string");
  try {
    return Expression::parse(v.get<std::string>());
  } catch (const ExpressionError& e) {
    bad(where, e.what());
  }
}

pde::ScalarFn as_fn(const Expression& e) {
  return [e](double x, double y, double t) { return e(x, y, t); };
}

std::array<double, 2> interval(const json& v, const std::string& where) {
  const auto xs = number_list(v, where);
  if (xs.size() != 2) bad(where, "expected [lo, hi]");
  if (!(xs[0] < xs[1])) bad(where, "requires lo < hi");
  return {xs[0], xs[1]};
}

mesh::Box box(const json& v, const std::string& where) {
  mesh::Box b;
  if (v.is_array()) {
    const auto iv = interval(v, where);
    b.lo = {iv[0], iv[0]};
    b.hi = {iv[1], iv[1]};
    return b;
  }
  check_keys(v, where, {"x", "y"});
  if (!v.contains("x")) bad(where, "missing 'x'");
  const auto ix = interval(v["x"], join(where, "x"));
  const auto iy = v.contains("y") ? interval(v["y"], join(where, "y")) : ix;
  b.lo = {ix[0], iy[0]};
  b.hi = {ix[1], iy[1]};
  return b;
}

json box_json(const mesh::Box& b, int dim) {
  json j;
  j["x"] = {b.lo[0], b.hi[0]};
  if (dim == 2) j["y"] = {b.lo[1], b.hi[1]};
  return j;
}

std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ProblemFile parse_problem_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    std::string msg = e.what();
    if (const auto p = msg.find("column "); p != std::string::npos)
      if (const auto q = msg.find(": ", p); q != std::string::npos) msg = msg.substr(q + 2);
    throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg);
  }
  auto file = problem_from_json(doc);
  file.sha256 = sha256_hex(text);
  return file;
}

ProblemFile parse_problem(const std::string& path) {
  try {
    return parse_problem_text(read_file(path));
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw ConfigError(path + ": " + msg);
  }
}

ProblemFile problem_from_json(const json& doc) {
  ProblemFile f;
  f.document = doc;
  auto& c = f.config;
  c = ProblemConfig::benchmark();
  check_keys(doc, "", {"grid", "regions", "coefficients", "functionals", "targets", "initial",
                       "controls", "weights", "solver", "run", "sweep", "seed"});
  const json empty = json::object();
  auto section = [&](const char* name) -> const json& {
    return doc.contains(name) ? doc[name] : empty;
  };

  // grid
  {
    const json& g = section("grid");
    check_keys(g, "grid", {"dim", "n_x", "n_t", "T", "domain"});
    if (g.contains("dim")) c.dim = static_cast<int>(integer(g["dim"], "grid.dim"));
    if (c.dim != 1 && c.dim != 2) bad("grid.dim", "must be 1 or 2");
    if (g.contains("n_x")) c.n_x = static_cast<int>(integer(g["n_x"], "grid.n_x"));
    if (g.contains("n_t")) c.n_t = static_cast<int>(integer(g["n_t"], "grid.n_t"));
    if (c.n_x < 3) bad("grid.n_x", "must be at least 3");
    if (c.n_t < 2) bad("grid.n_t", "must be at least 2");
    if (g.contains("T")) c.horizon = positive(g["T"], "grid.T");
    if (g.contains("domain")) c.domain = box(g["domain"], "grid.domain");
  }

  // regions
  {
    const json& r = section("regions");
    check_keys(r, "regions", {"omega", "omega1", "omega2", "Od", "omega_prime"});
    if (r.contains("omega")) c.omega = box(r["omega"], "regions.omega");
    if (r.contains("omega1")) c.omega1 = box(r["omega1"], "regions.omega1");
    if (r.contains("omega2")) c.omega2 = box(r["omega2"], "regions.omega2");
    if (r.contains("Od")) c.observation = box(r["Od"], "regions.Od");
    if (r.contains("omega_prime")) c.omega_prime = box(r["omega_prime"], "regions.omega_prime");
  }

  // coefficients
  std::array<Expression, 4> coef{Expression::constant(0.5), Expression::constant(0.2),
                                 Expression::constant(1.0), Expression::constant(0.5)};
  {
    const json& a = section("coefficients");
    check_keys(a, "coefficients", {"a11", "a12", "a21", "a22", "require_sign_condition"});
    const char* names[4] = {"a11", "a12", "a21", "a22"};
    for (int i = 0; i < 4; ++i)
      if (a.contains(names[i])) coef[i] = function(a[names[i]], std::string("coefficients.") + names[i]);
    c.a11 = as_fn(coef[0]);
    c.a12 = as_fn(coef[1]);
    c.a21 = as_fn(coef[2]);
    c.a22 = as_fn(coef[3]);
    if (a.contains("require_sign_condition")) {
      if (!a["require_sign_condition"].is_boolean())
        bad("coefficients.require_sign_condition", "expected true or false");
      f.require_sign_condition = a["require_sign_condition"].get<bool>();
    }
  }

  // functionals
  {
    const json& fn = section("functionals");
    check_keys(fn, "functionals", {"alpha", "mu"});
    if (fn.contains("alpha")) {
      const auto al = number_list(fn["alpha"], "functionals.alpha");
      if (al.size() != 2) bad("functionals.alpha", "expected [alpha1, alpha2]");
      for (int i = 0; i < 2; ++i) {
        if (al[i] < 0.0) bad("functionals.alpha", "entries must be non-negative");
        c.alpha[i] = al[i];
      }
    }
    if (fn.contains("mu")) {
      const json& m = fn["mu"];
      if (m.is_string()) {
        if (m.get<std::string>() != "auto") bad("functionals.mu", "expected \"auto\" or [mu1, mu2]");
      } else {
        if (!m.is_array() || m.size() != 2) bad("functionals.mu", "expected \"auto\" or [mu1, mu2]");
        for (int i = 0; i < 2; ++i) {
          const std::string w = "functionals.mu[" + std::to_string(i) + "]";
          if (m[i].is_string()) {
            if (m[i].get<std::string>() != "auto") bad(w, "expected a number or \"auto\"");
          } else {
            c.mu[i] = positive(m[i], w);
          }
        }
      }
    }
  }

  // targets and initial data
  std::array<std::array<Expression, 2>, 2> yd{{{Expression::constant(0), Expression::constant(0)},
                                               {Expression::constant(0), Expression::constant(0)}}};
  std::array<Expression, 2> y0{Expression::constant(0), Expression::constant(0)};
  {
    const json& t = section("targets");
    check_keys(t, "targets", {"yd1", "yd2"});
    const char* names[2] = {"yd1", "yd2"};
    for (int i = 0; i < 2; ++i) {
      if (!t.contains(names[i])) continue;
      const std::string w = std::string("targets.") + names[i];
      const json& v = t[names[i]];
      if (!v.is_array() || v.size() != 2) bad(w, "expected [component1, component2]");
      for (int j = 0; j < 2; ++j) yd[i][j] = function(v[j], w + "[" + std::to_string(j) + "]");
    }
    if (doc.contains("initial")) {
      const json& v = doc["initial"];
      if (!v.is_array() || v.size() != 2) bad("initial", "expected [component1, component2]");
      for (int j = 0; j < 2; ++j) y0[j] = function(v[j], "initial[" + std::to_string(j) + "]");
    }
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) c.target[i][j] = as_fn(yd[i][j]);
    for (int j = 0; j < 2; ++j) c.initial[j] = as_fn(y0[j]);
  }

  // controls for simulate / nash
  {
    const json& k = section("controls");
    check_keys(k, "controls", {"g", "h1", "h2"});
    if (k.contains("g")) f.g = function(k["g"], "controls.g");
    if (k.contains("h1")) f.h1 = function(k["h1"], "controls.h1");
    if (k.contains("h2")) f.h2 = function(k["h2"], "controls.h2");
  }

  // weights
  {
    const json& w = section("weights");
    check_keys(w, "weights", {"lambda", "s", "eta_max", "c0_target"});
    if (w.contains("lambda")) c.carleman.lambda = number(w["lambda"], "weights.lambda");
    if (w.contains("s")) c.carleman.s = number(w["s"], "weights.s");
    if (c.carleman.lambda < 1.0) bad("weights.lambda", "must be at least 1");
    if (c.carleman.s < 1.0) bad("weights.s", "must be at least 1");
    if (w.contains("eta_max")) c.eta_max = positive(w["eta_max"], "weights.eta_max");
    if (w.contains("c0_target")) c.c0_target = number(w["c0_target"], "weights.c0_target");
  }

  // solver
  {
    const json& s = section("solver");
    check_keys(s, "solver",
               {"backend", "coupled_tol", "coupled_max_iters", "relaxation", "assembled_limit",
                "gmres_tol", "gmres_restart", "gmres_max_iters", "cg_tol", "cg_max_iters",
                "power_tol", "power_max_iters", "power_seed", "mu_auto_factor"});
    auto& o = c.solver;
    if (s.contains("backend")) {
      if (!s["backend"].is_string()) bad("solver.backend", "expected a string");
      try {
        o.coupled.backend = pde::parse_backend(s["backend"].get<std::string>());
      } catch (const std::exception& e) {
        bad("solver.backend", e.what());
      }
    }
    auto pos_int = [&](const char* key) {
      const long v = integer(s[key], std::string("solver.") + key);
      if (v < 1) bad(std::string("solver.") + key, "must be at least 1");
      return v;
    };
    if (s.contains("coupled_tol")) o.coupled.tol = positive(s["coupled_tol"], "solver.coupled_tol");
    if (s.contains("coupled_max_iters")) o.coupled.max_iters = static_cast<int>(pos_int("coupled_max_iters"));
    if (s.contains("relaxation")) {
      o.coupled.relaxation = positive(s["relaxation"], "solver.relaxation");
      if (o.coupled.relaxation > 1.0) bad("solver.relaxation", "must lie in (0, 1]");
    }
    if (s.contains("assembled_limit")) o.coupled.assembled_limit = pos_int("assembled_limit");
    if (s.contains("gmres_tol")) o.gmres.tol = positive(s["gmres_tol"], "solver.gmres_tol");
    if (s.contains("gmres_restart")) o.gmres.restart = static_cast<int>(pos_int("gmres_restart"));
    if (s.contains("gmres_max_iters")) o.gmres.max_iters = static_cast<int>(pos_int("gmres_max_iters"));
    if (s.contains("cg_tol")) o.cg.tol = positive(s["cg_tol"], "solver.cg_tol");
    if (s.contains("cg_max_iters")) o.cg.max_iters = static_cast<int>(pos_int("cg_max_iters"));
    if (s.contains("power_tol")) o.power.tol = positive(s["power_tol"], "solver.power_tol");
    if (s.contains("power_max_iters")) o.power.max_iters = static_cast<int>(pos_int("power_max_iters"));
    if (s.contains("power_seed")) o.power.seed = static_cast<std::uint64_t>(integer(s["power_seed"], "solver.power_seed"));
    if (s.contains("mu_auto_factor")) {
      o.mu_auto_factor = positive(s["mu_auto_factor"], "solver.mu_auto_factor");
      if (o.mu_auto_factor <= 1.0) bad("solver.mu_auto_factor", "must exceed 1");
    }
  }

  // run settings
  {
    const json& r = section("run");
    check_keys(r, "run", {"epsilon", "epsilon_ladder", "samples", "lambda", "s", "sampler"});
    if (r.contains("epsilon")) f.run.epsilon = positive(r["epsilon"], "run.epsilon");
    if (r.contains("epsilon_ladder")) {
      f.run.epsilon_ladder = number_list(r["epsilon_ladder"], "run.epsilon_ladder");
      for (double e : f.run.epsilon_ladder)
        if (!(e > 0.0)) bad("run.epsilon_ladder", "entries must be positive");
    }
    if (r.contains("samples")) {
      f.run.samples = static_cast<int>(integer(r["samples"], "run.samples"));
      if (f.run.samples < 1) bad("run.samples", "must be at least 1");
    }
    if (r.contains("lambda")) f.run.lambdas = number_list(r["lambda"], "run.lambda");
    if (r.contains("s")) f.run.ss = number_list(r["s"], "run.s");
    if (r.contains("sampler")) {
      if (!r["sampler"].is_string()) bad("run.sampler", "expected \"smooth\" or \"white\"");
      f.run.sampler = r["sampler"].get<std::string>();
      if (f.run.sampler != "smooth" && f.run.sampler != "white")
        bad("run.sampler", "expected \"smooth\" or \"white\"");
    }
  }

  // sweep
  if (doc.contains("sweep")) {
    const json& s = doc["sweep"];
    check_keys(s, "sweep", {"command", "parameters"});
    SweepSpec spec;
    if (s.contains("command")) {
      if (!s["command"].is_string()) bad("sweep.command", "expected a string");
      spec.command = s["command"].get<std::string>();
    }
    if (spec.command == "sweep") bad("sweep.command", "sweeps cannot nest");
    if (!s.contains("parameters") || !s["parameters"].is_object() || s["parameters"].empty())
      bad("sweep.parameters", "expected a non-empty object of dotted path -> list of values");
    for (const auto& [path, values] : s["parameters"].items()) {
      if (!values.is_array() || values.empty())
        bad("sweep.parameters." + path, "expected a non-empty list of values");
      if (path.rfind("sweep", 0) == 0) bad("sweep.parameters." + path, "cannot sweep the sweep section");
      spec.parameters.emplace_back(path, std::vector<json>(values.begin(), values.end()));
    }
    f.sweep = std::move(spec);
  }

  if (doc.contains("seed")) {
    const long sd = integer(doc["seed"], "seed");
    if (sd < 0) bad("seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(sd);
  }

  // Resolved view.
  json& res = f.resolved;
  res["grid"] = {{"dim", c.dim}, {"n_x", c.n_x}, {"n_t", c.n_t}, {"T", c.horizon},
                 {"domain", box_json(c.domain, c.dim)}};
  res["regions"] = {{"omega", box_json(c.omega, c.dim)},
                    {"omega1", box_json(c.omega1, c.dim)},
                    {"omega2", box_json(c.omega2, c.dim)},
                    {"Od", box_json(c.observation, c.dim)},
                    {"omega_prime", box_json(c.omega_prime, c.dim)}};
  res["coefficients"] = {{"a11", coef[0].source()}, {"a12", coef[1].source()},
                         {"a21", coef[2].source()}, {"a22", coef[3].source()},
                         {"require_sign_condition", f.require_sign_condition}};
  json mu = json::array();
  for (int i = 0; i < 2; ++i) mu.push_back(c.mu[i] ? json(*c.mu[i]) : json("auto"));
  res["functionals"] = {{"alpha", {c.alpha[0], c.alpha[1]}}, {"mu", mu}};
  res["targets"] = {{"yd1", {yd[0][0].source(), yd[0][1].source()}},
                    {"yd2", {yd[1][0].source(), yd[1][1].source()}}};
  res["initial"] = {y0[0].source(), y0[1].source()};
  res["controls"] = {{"g", f.g.source()}, {"h1", f.h1.source()}, {"h2", f.h2.source()}};
  res["weights"] = {{"lambda", c.carleman.lambda}, {"s", c.carleman.s}, {"eta_max", c.eta_max},
                    {"c0_target", c.c0_target}};
  const auto& o = c.solver;
  res["solver"] = {{"backend", pde::to_string(o.coupled.backend)},
                   {"coupled_tol", o.coupled.tol},
                   {"coupled_max_iters", o.coupled.max_iters},
                   {"relaxation", o.coupled.relaxation},
                   {"assembled_limit", o.coupled.assembled_limit},
                   {"gmres_tol", o.gmres.tol},
                   {"gmres_restart", o.gmres.restart},
                   {"gmres_max_iters", o.gmres.max_iters},
                   {"cg_tol", o.cg.tol},
                   {"cg_max_iters", o.cg.max_iters},
                   {"power_tol", o.power.tol},
                   {"power_max_iters", o.power.max_iters},
                   {"power_seed", o.power.seed},
                   {"mu_auto_factor", o.mu_auto_factor}};
  res["run"] = {{"epsilon", f.run.epsilon}, {"epsilon_ladder", f.run.epsilon_ladder},
                {"samples", f.run.samples}, {"lambda", f.run.lambdas}, {"s", f.run.ss},
                {"sampler", f.run.sampler}};
  res["seed"] = c.seed;
  return f;
}

HierarchicProblem build_checked(const ProblemFile& file) {
  HierarchicProblem p = build_problem(file.config);
  if (file.require_sign_condition && !p.sign.holds)
    throw ConfigError("coefficients.a21: sign condition required but a21 has no fixed sign "
                      "bounded away from 0 on (Od ∩ omega) × (0,T)");
  return p;
}

json with_override(const json& document, const std::string& dotted_path, const json& value) {
  json out = document;
  json* node = &out;
  std::stringstream ss(dotted_path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty override path");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const bool last = i + 1 == parts.size();
    const std::string& key = parts[i];
    const bool index = !key.empty() && key.find_first_not_of("0123456789") == std::string::npos;
    if (index && node->is_array()) {
      const auto idx = std::stoul(key);
      if (idx >= node->size()) throw ConfigError(dotted_path + ": index out of range");
      node = &(*node)[idx];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw ConfigError(dotted_path + ": '" + key + "' is not inside an object");
      if (!node->contains(key) && !last) {
        (*node)[key] = json::object();
      }
      node = &(*node)[key];
    }
    if (last) *node = value;
  }
  return out;
}

}  // namespace hierctrl::cli
