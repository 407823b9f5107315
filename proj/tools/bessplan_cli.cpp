#include <iostream>

#include <CLI11.hpp>

#include "bessplan/cli.hpp"

using namespace bessplan;

int main(int argc, char** argv) {
  CLI::App app{"Battery siting and sizing planner"};
  app.require_subcommand(1);
  std::string config_path;
  int workers = 0;
  long long seed = -1;
  std::string out;
  app.add_option("--config", config_path, "run configuration (INI)")->required();
  app.add_option("--workers", workers, "parallel workers (overrides config and environment)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "random seed")->check(CLI::NonNegativeNumber);
  app.add_option("--out", out, "output directory");
  app.add_subcommand("ingest", "parse inputs, apply boundary conditions, write the run bundle");
  app.add_subcommand("plan", "decomposed planning with AC-PF refinement");
  app.add_subcommand("validate", "decomposed against centralized solve");
  app.add_subcommand("report", "size tables and scalability sweep");
  app.fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::exit_usage;
  }

  cli::RunConfig cfg;
  try {
    cfg = cli::load_config(config_path);
    cli::apply_environment(cfg);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::exit_usage;
  }
  if (workers > 0) cfg.workers = workers;
  if (seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.synthetic.seed = cfg.seed;
  }
  if (!out.empty()) cfg.out_dir = out;

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "ingest") return cli::cmd_ingest(cfg, std::cout);
    if (cmd == "plan") return cli::cmd_plan(cfg, std::cout);
    if (cmd == "validate") return cli::cmd_validate(cfg, std::cout);
    return cli::cmd_report(cfg, std::cout);
  } catch (const ingest::IngestError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return cli::exit_input;
  } catch (const NetworkError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return cli::exit_input;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_failed;
  }
}
