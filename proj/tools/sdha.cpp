#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sdha/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Stochastic Lagrange-d'Alembert integrators: experiments and structure checks"};
  app.require_subcommand(1);

  std::string config, out, file, kind = "auto";

  auto* run = app.add_subcommand("run", "run a Monte Carlo ensemble and write mean/sem CSV");
  run->add_option("--config", config, "experiment config file")->required();
  run->add_option("--out", out, "output CSV (overrides the config's output key)");

  auto* check = app.add_subcommand("check-tableau", "check a tableau file against its coefficient conditions");
  check->add_option("file", file, "tableau file")->required();
  check->add_option("--kind", kind, "sprk, wrk or auto")->check(CLI::IsMember({"sprk", "wrk", "auto"}));

  auto* order = app.add_subcommand("order", "estimate a mean-square or weak convergence order");
  order->add_option("--config", config, "order config file")->required();
  order->add_option("--out", out, "output CSV (overrides the config's output key)");

  auto* structure = app.add_subcommand("structure", "run a structure-preservation check");
  structure->add_option("--config", config, "structure config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (*run) return sdha::cli::cmd_run(config, out, std::cout, std::cerr);
  if (*check) return sdha::cli::cmd_check_tableau(file, kind, std::cout, std::cerr);
  if (*order) return sdha::cli::cmd_order(config, out, std::cout, std::cerr);
  return sdha::cli::cmd_structure(config, std::cout, std::cerr);
}
