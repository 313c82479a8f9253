#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hierctrl/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hierarchic (leader/follower) control of coupled fourth-order parabolic systems"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(hierctrl::cli::kVersion));

  hierctrl::cli::RunOptions opts;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<int> samples;
  std::optional<std::string> backend, sampler;

  const std::map<std::string, std::string> about = {
      {"simulate", "forward solve under the problem's fixed controls"},
      {"nash", "follower Nash pair for the problem's leader control"},
      {"control", "penalized leader control over the epsilon ladder"},
      {"observability", "sampled and power-iteration observability ratios"},
      {"carleman", "sampled Carleman ratios for each (lambda, s)"},
      {"sweep", "run a command over a parameter grid"},
      {"validate", "parse and check the problem file only"},
  };
  for (const auto& name : hierctrl::cli::commands()) {
    auto* sub = app.add_subcommand(name, about.count(name) ? about.at(name) : std::string());
    sub->add_option("--problem", opts.problem_path, "problem JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "override the problem seed");
    sub->add_option("--epsilon", epsilon, "penalty for control")->check(CLI::PositiveNumber);
    sub->add_option("--epsilon-ladder", opts.epsilon_ladder, "comma-separated penalties for control")
        ->delimiter(',');
    sub->add_option("--samples", samples, "random samples for observability/carleman")
        ->check(CLI::PositiveNumber);
    sub->add_option("--jobs", opts.jobs, "concurrent sweep cells")->check(CLI::PositiveNumber);
    sub->add_option("--lambda", opts.lambdas, "comma-separated lambda values for carleman")->delimiter(',');
    sub->add_option("--s", opts.ss, "comma-separated s values for carleman")->delimiter(',');
    sub->add_option("--backend", backend, "coupled solver backend")
        ->check(CLI::IsMember({"assembled", "fixed_point", "auto"}));
    sub->add_option("--sampler", sampler, "random terminal data")->check(CLI::IsMember({"smooth", "white"}));
    sub->callback([&opts, name]() { opts.command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  opts.seed = seed;
  opts.epsilon = epsilon;
  opts.samples = samples;
  opts.backend = backend;
  opts.sampler = sampler;
  opts.extra_versions["cli11"] = CLI11_VERSION;
  return hierctrl::cli::dispatch(opts);
}
