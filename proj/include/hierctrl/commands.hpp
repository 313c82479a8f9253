// Command dispatch. Every run writes into its own output directory:
// manifest.json (command, config hash, outputs with their hashes, wall time,
// versions, warnings, status), schema.json describing every data column,
// and the command's CSV/JSON results.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hierctrl/config.hpp"

namespace hierctrl::cli {

inline constexpr const char* kVersion = "0.1.0";

struct RunOptions {
  std::string command;
  std::string problem_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::vector<double> epsilon_ladder;
  std::optional<int> samples;
  int jobs = 1;
  std::vector<double> lambdas;
  std::vector<double> ss;
  std::optional<std::string> backend;
  std::optional<std::string> sampler;
  std::map<std::string, std::string> extra_versions;  // e.g. the argument parser
};

const std::vector<std::string>& commands();

/// Runs a command and writes the manifest. Returns the process exit status:
/// 0 on success, 1 when a stage fails, 2 on configuration or usage errors.
int dispatch(const RunOptions& options);

/// Same as dispatch but for an already-parsed problem file.
int run_problem(const RunOptions& options, const ProblemFile& file);

/// Versions of the libraries compiled into the tool.
json versions(const std::map<std::string, std::string>& extra = {});

}  // namespace hierctrl::cli
