// Command-line driver: recover | extrapolate | scan | bench | validate-config.
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 budget
// exhausted.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "hamopt/runner.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config, "experiment config file (JSON)")
      ->required();
  sub->add_option("--out", args.out, "output directory (overrides config)");
  sub->add_option("--seed", args.seed, "RNG seed (overrides config)");
  sub->add_option("--threads", args.threads,
                  "worker threads (overrides config)");
}

hamopt::ExperimentConfig load_with_overrides(const CommonArgs& args) {
  hamopt::ExperimentConfig cfg = hamopt::load_config(args.config);
  if (!args.out.empty()) cfg.output_dir = args.out;
  if (args.seed) cfg.seed = *args.seed;
  if (args.threads) {
    if (*args.threads < 1)
      throw hamopt::ConfigError("config: threads must be >= 1");
    cfg.threads = *args.threads;
  }
  return cfg;
}

void print_report_summary(const hamopt::RecoveryReport& rep,
                          const std::string& out_dir) {
  std::cout << rep.command << ": loss " << hamopt::io::fmt_g17(rep.final_loss)
            << " after " << rep.steps << " steps (" << rep.termination << ", "
            << rep.n_evaluations << " evaluations";
  if (rep.multistart_runs > 1)
    std::cout << ", " << rep.multistart_runs << " starts, winner "
              << rep.winner;
  std::cout << ")\n";
  for (const auto& row : rep.rows) {
    std::cout << "  " << (row.is_test ? "test " : "train") << " N=" << row.n;
    if (row.overlap) std::cout << "  overlap " << hamopt::io::fmt_g17(*row.overlap);
    if (row.variance)
      std::cout << "  variance " << hamopt::io::fmt_g17(*row.variance);
    std::cout << '\n';
  }
  if (rep.off_support_abs_sum)
    std::cout << "  off-support |gamma| sum "
              << hamopt::io::fmt_g17(*rep.off_support_abs_sum) << '\n';
  if (rep.underspanned)
    std::cout << "  flag: underspanned basis (min overlap "
              << hamopt::io::fmt_g17(*rep.min_overlap) << ")\n";
  std::cout << "  report: " << out_dir << "/report.json\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learn spin-chain Hamiltonians from reference wavefunctions"};
  app.require_subcommand(1);

  CommonArgs recover_args, extrapolate_args, scan_args, bench_args,
      validate_args;
  CLI::App* recover =
      app.add_subcommand("recover", "fit a Hamiltonian to reference states");
  add_common(recover, recover_args);
  CLI::App* extrapolate = app.add_subcommand(
      "extrapolate", "train on small sizes, evaluate on larger ones");
  add_common(extrapolate, extrapolate_args);
  CLI::App* scan = app.add_subcommand(
      "scan", "map a 2-parameter loss landscape and compare descent paths");
  add_common(scan, scan_args);
  CLI::App* bench =
      app.add_subcommand("bench", "time the pipeline stages per size");
  add_common(bench, bench_args);
  CLI::App* validate = app.add_subcommand(
      "validate-config", "check a config file without running anything");
  add_common(validate, validate_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // CLI usage problems are config errors
  }

  try {
    if (recover->parsed()) {
      hamopt::ExperimentConfig cfg = load_with_overrides(recover_args);
      hamopt::RecoveryReport rep = hamopt::run_recover(cfg);
      print_report_summary(rep, cfg.output_dir);
    } else if (extrapolate->parsed()) {
      hamopt::ExperimentConfig cfg = load_with_overrides(extrapolate_args);
      hamopt::RecoveryReport rep = hamopt::run_extrapolate(cfg);
      print_report_summary(rep, cfg.output_dir);
    } else if (scan->parsed()) {
      hamopt::ExperimentConfig cfg = load_with_overrides(scan_args);
      nlohmann::json rep = hamopt::run_scan(cfg);
      std::cout << "scan: grid min " << rep["grid"]["min"]["total"]
                << " at (" << rep["grid"]["min"]["p1"] << ", "
                << rep["grid"]["min"]["p2"] << "), cgd loss "
                << rep["cgd"]["loss"] << " in " << rep["cgd"]["n_evaluations"]
                << " evaluations over " << rep["grid"]["points"]
                << " grid points\n"
                << "  report: " << cfg.output_dir << "/scan_report.json\n";
    } else if (bench->parsed()) {
      hamopt::ExperimentConfig cfg = load_with_overrides(bench_args);
      nlohmann::json rep = hamopt::run_bench(cfg);
      std::cout << "bench: " << rep["sizes"].size() << " sizes timed\n"
                << "  report: " << cfg.output_dir << "/bench.json\n";
    } else if (validate->parsed()) {
      hamopt::ExperimentConfig cfg = load_with_overrides(validate_args);
      hamopt::validate_config_semantics(cfg);
      std::cout << "config ok: " << validate_args.config << '\n';
    }
  } catch (const hamopt::BudgetError& e) {
    std::cerr << "budget exhausted: " << e.what() << '\n';
    return 4;
  } catch (const hamopt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const hamopt::ValidationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const hamopt::DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const hamopt::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
