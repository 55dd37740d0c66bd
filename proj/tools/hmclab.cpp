#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hmclab/config.hpp"

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int threads = 0;
};

void attach(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "experiment configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "override the config seed")->each([&c](const std::string&) {
    c.seed_set = true;
  });
  sub->add_option("--out", c.out, "override the config output path");
  sub->add_option("--threads", c.threads, "worker threads (0 = KMC_THREADS or hardware)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hmclab: partially refreshed Hamiltonian chains, certificates and exact Gaussian checks"};
  app.require_subcommand(1);

  const std::vector<std::string> kinds{"run",    "certify",   "gaussian",    "couple",
                                       "anneal", "meanfield", "verlet_error"};
  std::map<std::string, Common> commons;
  for (const auto& kind : kinds) {
    auto* sub = app.add_subcommand(kind, kind + " experiment");
    attach(sub, commons[kind]);
  }

  CLI11_PARSE(app, argc, argv);

  const auto* sub = app.get_subcommands().front();
  const std::string kind = sub->get_name();
  const Common& c = commons[kind];

  hmclab::config::Invocation inv;
  inv.experiment = kind;
  inv.config_path = c.config_path;
  if (c.seed_set) inv.seed_override = c.seed;
  if (!c.out.empty()) inv.out_override = c.out;
  inv.threads = hmclab::resolve_threads(c.threads);

  try {
    auto outcome = hmclab::config::run(inv);
    std::cout << outcome.text;
    std::cout << "wrote " << outcome.output_path << "\n";
    return 0;
  } catch (const hmclab::config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const hmclab::config::NumericalAssertion& e) {
    std::cerr << "numerical assertion failed: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
