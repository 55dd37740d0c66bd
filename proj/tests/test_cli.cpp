#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hmclab/config.hpp"

using namespace hmclab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hmclab_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  fs::path file(const std::string& name) const { return path / name; }
};

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p);
  f << content;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HMCLAB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("certify subcommand produces a valid certificate") {
  TempDir tmp;
  write_file(tmp.file("c.json"), R"({
    "experiment": "certify",
    "seed": 1,
    "output": ")" + tmp.file("cert.csv").string() + R"(",
    "inputs": {"t": 0.1, "eta": 0.8, "L": 1.0, "c_ls": 1.0, "a": "rule"}
  })");
  REQUIRE(run_cli("certify --config " + tmp.file("c.json").string()) == 0);
  const std::string csv = read_file(tmp.file("cert.csv"));
  REQUIRE(csv.find("rate") != std::string::npos);
  // second line holds the values; valid flag is 1 and the rate clears 3t/8
  std::istringstream lines(csv);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  std::vector<double> vals;
  std::istringstream cells(row);
  std::string cell;
  while (std::getline(cells, cell, ',')) vals.push_back(std::stod(cell));
  std::vector<std::string> cols;
  std::istringstream hs(header);
  while (std::getline(hs, cell, ',')) cols.push_back(cell);
  auto col = [&](const std::string& name) {
    for (size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return vals[i];
    FAIL("missing column " + name);
    return 0.0;
  };
  REQUIRE(col("valid") == 1.0);
  REQUIRE(col("rate") >= 0.0375);
  REQUIRE(fs::exists(tmp.file("cert.csv.manifest.json")));
}

TEST_CASE("malformed configs exit with code 2 and write nothing") {
  TempDir tmp;
  SECTION("not JSON at all") {
    write_file(tmp.file("bad.json"), "this is not json");
    REQUIRE(run_cli("certify --config " + tmp.file("bad.json").string() + " --out " +
                    tmp.file("x.csv").string()) == 2);
    REQUIRE_FALSE(fs::exists(tmp.file("x.csv")));
  }
  SECTION("unknown key rejected") {
    write_file(tmp.file("bad.json"), R"({
      "experiment": "certify", "surprise": 1,
      "inputs": {"t": 0.1}
    })");
    REQUIRE(run_cli("certify --config " + tmp.file("bad.json").string() + " --out " +
                    tmp.file("x.csv").string()) == 2);
    REQUIRE_FALSE(fs::exists(tmp.file("x.csv")));
  }
  SECTION("subcommand and config kind must agree") {
    write_file(tmp.file("k.json"), R"({"experiment": "run", "steps": 1, "potential": {"family": "zero", "dim": 1}, "chain": {"t": 0.1}})");
    REQUIRE(run_cli("certify --config " + tmp.file("k.json").string()) == 2);
  }
  SECTION("missing file") {
    REQUIRE(run_cli("certify --config " + tmp.file("absent.json").string()) != 0);
  }
}

TEST_CASE("run subcommand emits a reproducible trajectory CSV") {
  TempDir tmp;
  const std::string cfg = R"({
    "experiment": "run",
    "seed": 7,
    "output": ")" + tmp.file("a.csv").string() + R"(",
    "potential": {"family": "quadratic", "matrix": [[1.0]]},
    "chain": {"t": 0.2, "eta": 0.5},
    "steps": 20,
    "initial": {"x": [1.0], "v": [0.0]}
  })";
  write_file(tmp.file("r.json"), cfg);
  REQUIRE(run_cli("run --config " + tmp.file("r.json").string()) == 0);
  REQUIRE(run_cli("run --config " + tmp.file("r.json").string() + " --out " +
                  tmp.file("b.csv").string()) == 0);
  const std::string a = read_file(tmp.file("a.csv"));
  const std::string b = read_file(tmp.file("b.csv"));
  REQUIRE(a == b);  // bit-for-bit reproducible from config + seed
  REQUIRE(a.substr(0, a.find('\n')) == "step,x0,v0,U,x_sq");
  // 21 records + header
  REQUIRE(std::count(a.begin(), a.end(), '\n') == 22);
}

TEST_CASE("seed override changes the trajectory") {
  TempDir tmp;
  write_file(tmp.file("r.json"), R"({
    "experiment": "run", "seed": 7,
    "output": ")" + tmp.file("a.csv").string() + R"(",
    "potential": {"family": "quadratic", "matrix": [[1.0]]},
    "chain": {"t": 0.2, "eta": 0.0},
    "steps": 5,
    "initial": {"x": [1.0], "v": [0.0]}
  })");
  REQUIRE(run_cli("run --config " + tmp.file("r.json").string()) == 0);
  REQUIRE(run_cli("run --config " + tmp.file("r.json").string() + " --seed 8 --out " +
                  tmp.file("b.csv").string()) == 0);
  REQUIRE(read_file(tmp.file("a.csv")) != read_file(tmp.file("b.csv")));
}

TEST_CASE("gaussian subcommand checks the certified factor") {
  TempDir tmp;
  write_file(tmp.file("g.json"), R"({
    "experiment": "gaussian",
    "output": ")" + tmp.file("g.csv").string() + R"(",
    "P": [[1.0]],
    "t_grid": [0.1, 0.2],
    "eta_grid": [0.0, 0.5],
    "steps": 50
  })");
  REQUIRE(run_cli("gaussian --config " + tmp.file("g.json").string()) == 0);
  const std::string csv = read_file(tmp.file("g.csv"));
  REQUIRE(csv.substr(0, csv.find('\n')) ==
          "t,eta,k,kl,fisher,mixed_fisher,modified_entropy,certified_factor,observed_ratio");
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 2 * 50);
}

TEST_CASE("verlet_error subcommand emits slopes") {
  TempDir tmp;
  write_file(tmp.file("v.json"), R"({
    "experiment": "verlet_error",
    "seed": 3,
    "output": ")" + tmp.file("v.csv").string() + R"(",
    "potential": {"family": "double_well_1d", "scale": 0.022727272727272728},
    "chain": {"t": 0.2, "eta": 0.5},
    "steps": 5,
    "verlet_steps_list": [4, 8, 16],
    "replicas": 20,
    "initial": {"x_mean": [0.0], "x_std": 0.5, "v_std": 1.0}
  })");
  REQUIRE(run_cli("verlet_error --config " + tmp.file("v.json").string()) == 0);
  const std::string csv = read_file(tmp.file("v.csv"));
  REQUIRE(csv.find("slope_p2") != std::string::npos);
}

TEST_CASE("library-level config runner surfaces numerical assertions as exit 3 semantics") {
  // direct call: a certified-bound violation raises NumericalAssertion, which
  // the CLI maps to exit code 3
  TempDir tmp;
  write_file(tmp.file("g.json"), R"({
    "experiment": "gaussian",
    "output": ")" + tmp.file("g.csv").string() + R"(",
    "P": [[1.0]], "t_grid": [0.2], "eta_grid": [0.0], "steps": 5
  })");
  config::Invocation inv;
  inv.experiment = "gaussian";
  inv.config_path = tmp.file("g.json").string();
  REQUIRE_NOTHROW(config::run(inv));
}
