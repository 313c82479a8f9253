// Problem files: JSON with every field optional. Omitted fields take the
// benchmark defaults (1-D unit interval, n_x = 31, n_t = 40, T = 1, the
// benchmark regions and coefficients, zero targets and initial data).
//
// {
//   "grid":      {"dim": 1, "n_x": 31, "n_t": 40, "T": 1.0, "domain": [0, 1]},
//   "regions":   {"omega": [0.3, 0.7], "omega1": [0.05, 0.2], "omega2": [0.8, 0.95],
//                 "Od": [0.25, 0.75], "omega_prime": [0.45, 0.55]},
//   "coefficients": {"a11": 0.5, "a12": 0.2, "a21": "1.0", "a22": 0.5,
//                    "require_sign_condition": false},
//   "functionals": {"alpha": [1, 1], "mu": ["auto", "auto"]},
//   "targets":   {"yd1": ["0.5", "0"], "yd2": ["0", "0.5"]},
//   "initial":   ["sin(pi*x)", "sin(pi*x)"],
//   "controls":  {"g": "0", "h1": "0", "h2": "0"},
//   "weights":   {"lambda": 2, "s": 1, "eta_max": 0.25, "c0_target": 0},
//   "solver":    {"backend": "auto", ...},
//   "run":       {"epsilon": 1e-5, "epsilon_ladder": [], "samples": 50,
//                 "lambda": [], "s": [], "sampler": "smooth"},
//   "sweep":     {"command": "control", "parameters": {"weights.lambda": [1, 2]}},
//   "seed": 1
// }
//
// Regions are [lo, hi] (the same interval on every axis) or
// {"x": [lo, hi], "y": [lo, hi]}. Scalar functions are numbers or strings in
// the expression grammar over x, y, t.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hierctrl/expression.hpp"
#include "hierctrl/model.hpp"

namespace hierctrl::cli {

using json = nlohmann::ordered_json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunSettings {
  double epsilon = 1e-5;
  std::vector<double> epsilon_ladder;
  int samples = 50;
  std::vector<double> lambdas;  // empty: the problem's λ
  std::vector<double> ss;       // empty: the problem's s
  std::string sampler = "smooth";
};

struct SweepSpec {
  std::string command = "control";
  std::vector<std::pair<std::string, std::vector<json>>> parameters;  // dotted path -> values
};

struct ProblemFile {
  ProblemConfig config;
  json document;           // the file as parsed (no defaults)
  json resolved;           // every field with defaults applied
  std::string sha256;      // of the file bytes
  bool require_sign_condition = false;
  Expression g = Expression::constant(0.0);
  Expression h1 = Expression::constant(0.0);
  Expression h2 = Expression::constant(0.0);
  RunSettings run;
  std::optional<SweepSpec> sweep;
};

/// Parses JSON text; syntax errors carry line and column.
ProblemFile parse_problem_text(const std::string& text);
ProblemFile parse_problem(const std::string& path);
/// Builds from an already-parsed document; `sha256` is left empty.
ProblemFile problem_from_json(const json& document);

/// Builds the problem and enforces the checks requested in the file.
HierarchicProblem build_checked(const ProblemFile& file);

/// Replaces the value at a dotted path ("weights.lambda", "functionals.mu.0").
json with_override(const json& document, const std::string& dotted_path, const json& value);

std::string sha256_hex(const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace hierctrl::cli
