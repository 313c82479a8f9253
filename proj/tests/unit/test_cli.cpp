#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "hierctrl/commands.hpp"
#include "hierctrl/config.hpp"
#include "hierctrl/expression.hpp"

using namespace hierctrl;
using namespace hierctrl::cli;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("hierctrl_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name, std::ios::binary) << text;
    return (path_ / name).string();
  }

 private:
  fs::path path_;
};

const char* kSmall = R"J({
  "grid": {"n_x": 15, "n_t": 20},
  "targets": {"yd1": ["0.5", "0"], "yd2": ["0", "0.5"]},
  "initial": ["sin(pi*x)", "sin(pi*x)"],
  "run": {"epsilon_ladder": [1e-1, 1e-3, 1e-5], "samples": 5},
  "seed": 3
})J";

json manifest_of(const fs::path& dir) { return json::parse(read_file((dir / "manifest.json").string())); }

int run(const std::string& command, const std::string& problem, const fs::path& out) {
  RunOptions o;
  o.command = command;
  o.problem_path = problem;
  o.out_dir = out.string();
  return dispatch(o);
}

std::vector<std::string> csv_header(const std::string& text) {
  std::vector<std::string> cols;
  std::istringstream line(text.substr(0, text.find('\n')));
  std::string c;
  while (std::getline(line, c, ',')) cols.push_back(c);
  return cols;
}

std::string file_list(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  std::string out;
  for (const auto& n : names) out += n + ";";
  return out;
}

}  // namespace

TEST_CASE("expression values") {
  const double pi = std::acos(-1.0);
  CHECK(Expression::parse("1+2*3")(0, 0, 0) == 7.0);
  CHECK(Expression::parse("(1+2)*3")(0, 0, 0) == 9.0);
  CHECK(Expression::parse("8/4/2")(0, 0, 0) == 1.0);
  CHECK(Expression::parse("2-3-4")(0, 0, 0) == -5.0);
  CHECK(Expression::parse("--1")(0, 0, 0) == 1.0);
  CHECK(Expression::parse("-x*2")(3, 0, 0) == -6.0);
  CHECK(Expression::parse("1e-3*2")(0, 0, 0) == doctest::Approx(2e-3));
  CHECK(Expression::parse("2*sin(pi*x)")(0.5, 0, 0) == doctest::Approx(2.0));
  CHECK(Expression::parse("exp(t) * cos(y)")(0, pi, 1.0) == doctest::Approx(-std::exp(1.0)));
  CHECK(Expression::parse(" 0.25 ")(9, 9, 9) == 0.25);
  CHECK(Expression::parse("sin(1)+pi").is_constant());
  CHECK_FALSE(Expression::parse("1+t").is_constant());
  CHECK(Expression::constant(1.5)(0, 0, 0) == 1.5);
  CHECK(Expression::parse("x+1").source() == "x+1");
}

TEST_CASE("expression errors carry positions") {
  auto position_of = [](const std::string& text) -> std::size_t {
    try {
      Expression::parse(text);
    } catch (const ExpressionError& e) {
      return e.position();
    }
    return 999;
  };
  CHECK(position_of("1 +") == 3);
  CHECK(position_of("foo(x)") == 0);
  CHECK(position_of("3x") == 1);
  CHECK(position_of("sin(x") == 5);
  CHECK(position_of("") == 0);
  CHECK(position_of("2 * (3") == 6);
  CHECK_THROWS_WITH_AS(Expression::parse("z"), doctest::Contains("unknown identifier 'z'"), ExpressionError);
}

TEST_CASE("empty problem file resolves to the benchmark defaults") {
  const auto f = parse_problem_text("{}");
  CHECK(f.config.n_x == 31);
  CHECK(f.config.n_t == 40);
  CHECK(f.config.horizon == 1.0);
  CHECK(f.config.omega.lo[0] == 0.3);
  CHECK(f.config.observation.hi[0] == 0.75);
  CHECK_FALSE(f.config.mu[0].has_value());
  CHECK(f.config.carleman.lambda == 2.0);
  CHECK(f.config.eta_max == 0.25);
  CHECK(f.run.samples == 50);
  CHECK(f.run.epsilon == 1e-5);
  CHECK(f.resolved["grid"]["n_x"] == 31);
  CHECK(f.resolved["coefficients"]["a21"].is_string());
  CHECK(f.config.a21(0.5, 0, 0.5) == 1.0);
  CHECK(f.config.a12(0.1, 0, 0.9) == 0.2);
  CHECK(f.config.initial[0](0.3, 0, 0) == 0.0);
}

TEST_CASE("sign condition with a string coefficient") {
  const auto f = parse_problem_text(R"J({"grid": {"n_x": 15, "n_t": 10},
      "coefficients": {"a21": "1.0", "require_sign_condition": true}})J");
  CHECK(f.require_sign_condition);
  const auto p = build_checked(f);
  CHECK(p.sign.holds);
  CHECK(p.sign.sign == 1);
  CHECK(p.sign.a0 == 1.0);
  const auto bad = parse_problem_text(R"J({"grid": {"n_x": 15, "n_t": 10},
      "coefficients": {"a21": "x - 0.5", "require_sign_condition": true}})J");
  CHECK_THROWS_AS(build_checked(bad), ConfigError);
}

TEST_CASE("overlapping follower region is rejected") {
  const auto f = parse_problem_text(R"J({"regions": {"omega1": [0.25, 0.4]}})J");
  CHECK_THROWS_WITH(build_checked(f), doctest::Contains("omega1 intersects omega"));
}

TEST_CASE("syntax errors report line and column") {
  const std::string text = "{\n  \"grid\": {\n    \"n_x\": ,\n  }\n}\n";
  try {
    parse_problem_text(text);
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.rfind("line 3, column", 0) == 0);
    CHECK(msg.find("column 3") == std::string::npos);
  }
}

TEST_CASE("schema errors name the offending key") {
  CHECK_THROWS_WITH_AS(parse_problem_text(R"J({"grid": {"nx": 5}})J"), doctest::Contains("grid.nx"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_problem_text(R"J({"gird": {}})J"), doctest::Contains("unknown key"), ConfigError);
  CHECK_THROWS_AS(parse_problem_text(R"J({"grid": {"n_x": "many"}})J"), ConfigError);
  CHECK_THROWS_AS(parse_problem_text(R"J({"grid": {"n_x": 2}})J"), ConfigError);
  CHECK_THROWS_AS(parse_problem_text(R"J({"weights": {"lambda": 0.5}})J"), ConfigError);
  CHECK_THROWS_AS(parse_problem_text(R"J({"functionals": {"mu": ["auto", -1]}})J"), ConfigError);
  CHECK_THROWS_AS(parse_problem_text(R"J({"controls": {"g": "sin("}})J"), ConfigError);
  CHECK_THROWS_AS(parse_problem_text(R"J({"run": {"epsilon_ladder": [0.1, 0]}})J"), ConfigError);
  CHECK_THROWS_AS(parse_problem_text(R"J({"solver": {"backend": "magic"}})J"), std::invalid_argument);
}

TEST_CASE("explicit penalties and regions are honoured") {
  const auto f = parse_problem_text(R"J({"grid": {"dim": 2, "n_x": 7, "n_t": 6},
      "regions": {"omega": {"x": [0.3, 0.7], "y": [0.2, 0.8]}},
      "functionals": {"alpha": [1, 0.5], "mu": [2, "auto"]}})J");
  CHECK(f.config.dim == 2);
  CHECK(f.config.omega.lo[1] == 0.2);
  CHECK(f.config.omega.hi[1] == 0.8);
  CHECK(f.config.mu[0].value() == 2.0);
  CHECK_FALSE(f.config.mu[1].has_value());
  CHECK(f.config.alpha[1] == 0.5);
}

TEST_CASE("dotted overrides") {
  const json doc = json::parse(R"J({"weights": {"lambda": 2}, "functionals": {"mu": [1, 2]}})J");
  CHECK(with_override(doc, "weights.lambda", 3)["weights"]["lambda"] == 3);
  CHECK(with_override(doc, "functionals.mu.1", 5)["functionals"]["mu"][1] == 5);
  CHECK(with_override(doc, "grid.n_x", 9)["grid"]["n_x"] == 9);
  CHECK(doc["weights"]["lambda"] == 2);
  CHECK_THROWS_AS(with_override(doc, "functionals.mu.4", 1), ConfigError);
  CHECK_THROWS_AS(with_override(doc, "weights.lambda.x", 1), ConfigError);
  CHECK_THROWS_AS(with_override(doc, "", 1), ConfigError);
}

TEST_CASE("config hash is the SHA-256 of the file bytes") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  TempDir tmp;
  const auto path = tmp.write("p.json", kSmall);
  CHECK(parse_problem(path).sha256 == sha256_hex(kSmall));
  const auto spaced = tmp.write("q.json", std::string(kSmall) + "\n");
  CHECK(parse_problem(spaced).sha256 != parse_problem(path).sha256);
  CHECK_THROWS_WITH(parse_problem((tmp / "missing.json").string()), doctest::Contains("cannot open"));
}

TEST_CASE("validate writes only the manifest") {
  TempDir tmp;
  const auto problem = tmp.write("p.json", kSmall);
  CHECK(run("validate", problem, tmp / "out") == 0);
  CHECK(file_list(tmp / "out") == "manifest.json;");
  const auto m = manifest_of(tmp / "out");
  CHECK(m["status"] == "ok");
  CHECK(m["exit_code"] == 0);
  CHECK(m["outputs"].empty());
  CHECK(m["config_sha256"] == sha256_hex(kSmall));
  CHECK(m["resolved_config"]["functionals"]["mu_resolved"].size() == 2);
  CHECK(m["versions"].contains("eigen"));
}

TEST_CASE("configuration and stage failures map to exit codes") {
  TempDir tmp;
  const auto broken = tmp.write("broken.json", "{\"grid\": [}");
  CHECK(run("validate", broken, tmp / "a") == 2);
  CHECK(manifest_of(tmp / "a")["status"] == "error");

  const auto overlap = tmp.write("overlap.json", R"J({"grid": {"n_x": 15, "n_t": 10}, "regions": {"omega2": [0.6, 0.9]}})J");
  CHECK(run("validate", overlap, tmp / "b") == 2);
  CHECK(manifest_of(tmp / "b")["error"].get<std::string>().find("omega2 intersects omega") != std::string::npos);

  const auto unknown = tmp.write("ok.json", kSmall);
  CHECK(run("frobnicate", unknown, tmp / "c") == 2);

  // A solver stage that runs out of iterations is a runtime failure.
  const auto diverge = tmp.write("fp.json", R"J({"grid": {"n_x": 15, "n_t": 20},
      "targets": {"yd1": ["0.5", "0"]}, "solver": {"backend": "fixed_point", "coupled_max_iters": 3}})J");
  CHECK(run("nash", diverge, tmp / "d") == 1);
  CHECK(manifest_of(tmp / "d")["status"] == "error");

  const auto disjoint = tmp.write("disjoint.json", R"J({"grid": {"n_x": 15, "n_t": 10},
      "regions": {"Od": [0.75, 0.95], "omega2": [0.05, 0.1], "omega1": [0.12, 0.2]}})J");
  CHECK(run("control", disjoint, tmp / "e") != 0);
  CHECK(run("simulate", disjoint, tmp / "f") == 0);
}

TEST_CASE("nash with zero data gives zero follower controls") {
  TempDir tmp;
  const auto problem = tmp.write("p.json", R"J({"grid": {"n_x": 15, "n_t": 20}, "initial": ["0", "0"]})J");
  REQUIRE(run("nash", problem, tmp / "out") == 0);
  for (const char* name : {"h1.csv", "h2.csv"}) {
    std::istringstream in(read_file((tmp / "out" / name).string()));
    std::string line;
    std::getline(in, line);
    CHECK(line == "t,x,h");
    int rows = 0;
    while (std::getline(in, line)) {
      ++rows;
      CHECK(std::stod(line.substr(line.rfind(',') + 1)) == 0.0);
    }
    CHECK(rows > 0);
  }
  const auto nash_json = json::parse(read_file((tmp / "out" / "nash.json").string()));
  CHECK(nash_json["h_norm"][0] == 0.0);
}

TEST_CASE("control ladder outputs, hashes and schema") {
  TempDir tmp;
  const auto problem = tmp.write("p.json", kSmall);
  REQUIRE(run("control", problem, tmp / "out") == 0);
  const auto dir = tmp / "out";
  for (const char* name : {"hum_0.json", "hum_1.json", "hum_2.json", "g_0.csv", "g_1.csv", "g_2.csv",
                           "decay.csv", "schema.json", "manifest.json"})
    CHECK(fs::exists(dir / name));
  const auto m = manifest_of(dir);
  CHECK(m["summary"]["strictly_decreasing"] == true);
  CHECK(m["seed"] == 3);
  const auto schema = json::parse(read_file((dir / "schema.json").string()));
  for (const auto& o : m["outputs"]) {
    const std::string path = o["path"];
    const std::string bytes = read_file((dir / path).string());
    CHECK(o["sha256"] == sha256_hex(bytes));
    CHECK(o["bytes"] == bytes.size());
    if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") {
      REQUIRE(schema["files"].contains(path));
      for (const auto& col : csv_header(bytes)) CHECK(schema["files"][path]["columns"].contains(col));
    }
  }
  std::istringstream decay(read_file((dir / "decay.csv").string()));
  std::string line;
  std::getline(decay, line);
  std::vector<double> norms;
  while (std::getline(decay, line)) {
    std::istringstream cells(line);
    std::string eps, tn;
    std::getline(cells, eps, ',');
    std::getline(cells, tn, ',');
    norms.push_back(std::stod(tn));
  }
  REQUIRE(norms.size() == 3);
  CHECK(norms[1] < norms[0]);
  CHECK(norms[2] < norms[1]);
  const auto hum = json::parse(read_file((dir / "hum_2.json").string()));
  CHECK(hum["epsilon"] == 1e-5);
  CHECK(hum["terminal_norm"].get<double>() == doctest::Approx(norms[2]).epsilon(1e-15));
}

TEST_CASE("repeated runs are byte-identical") {
  TempDir tmp;
  const auto problem = tmp.write("p.json", kSmall);
  REQUIRE(run("control", problem, tmp / "a") == 0);
  REQUIRE(run("control", problem, tmp / "b") == 0);
  auto ma = manifest_of(tmp / "a"), mb = manifest_of(tmp / "b");
  CHECK(ma["outputs"] == mb["outputs"]);
  for (const auto& o : ma["outputs"]) {
    const std::string path = o["path"];
    CHECK(read_file((tmp / "a" / path).string()) == read_file((tmp / "b" / path).string()));
  }
  ma.erase("wall_time_seconds");
  mb.erase("wall_time_seconds");
  ma.erase("problem");
  mb.erase("problem");
  CHECK(ma == mb);
}

TEST_CASE("flag overrides are recorded and applied") {
  TempDir tmp;
  const auto problem = tmp.write("p.json", kSmall);
  RunOptions o;
  o.command = "control";
  o.problem_path = problem;
  o.out_dir = (tmp / "out").string();
  o.epsilon_ladder = {1e-2};
  o.seed = 11;
  REQUIRE(dispatch(o) == 0);
  const auto m = manifest_of(tmp / "out");
  CHECK(m["seed"] == 11);
  CHECK(m["overrides"].contains("run.epsilon_ladder"));
  CHECK(fs::exists(tmp / "out" / "hum_0.json"));
  CHECK_FALSE(fs::exists(tmp / "out" / "hum_1.json"));
}

TEST_CASE("sweep cells run in parallel and aggregate in order") {
  TempDir tmp;
  const auto problem = tmp.write("p.json", R"J({"grid": {"n_x": 15, "n_t": 10},
      "targets": {"yd1": ["0.5", "0"]},
      "sweep": {"command": "nash", "parameters": {"weights.lambda": [1, 2], "functionals.alpha": [[1, 1], [1, 0.5]]}}})J");
  RunOptions o;
  o.command = "sweep";
  o.problem_path = problem;
  o.out_dir = (tmp / "out").string();
  o.jobs = 3;
  REQUIRE(dispatch(o) == 0);
  const std::string csv = read_file((tmp / "out" / "sweep.csv").string());
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("cell,weights.lambda,functionals.alpha,status", 0) == 0);
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rfind("cell_0000,1,\"[1,1]\",ok", 0) == 0);
  CHECK(rows[3].rfind("cell_0003,2,\"[1,0.5]\",ok", 0) == 0);
  for (int i = 0; i < 4; ++i) {
    const auto cell = tmp / "out" / ("cell_000" + std::to_string(i));
    CHECK(manifest_of(cell)["status"] == "ok");
    CHECK(fs::exists(cell / "h1.csv"));
  }
}
