#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "evopo/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"evopo: phase-adaptive policy optimization for evolutionary search"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  auto* run = app.add_subcommand("run", "run an evolution experiment from a config file");
  run->add_option("--config", config_path, "key = value config file")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out_dir, "output directory (default: $EVOPO_OUT_DIR or ./evopo_out)");

  evopo::cli::EstimateOptions est;
  auto* estimate = app.add_subcommand("estimate", "compute advantages for a reward file (one value per line)");
  estimate->add_option("--file", est.file, "reward file")->required();
  estimate->add_option("--mode", est.mode, "grpo|raw|entropic|pkpo|sloo|sloo-brute|phase")->required();
  estimate->add_option("--k", est.k, "best-of-k subset size (default min(4, N))");
  estimate->add_option("--gamma", est.gamma, "entropic KL budget")->capture_default_str();
  estimate->add_option("--alpha", est.alpha, "phase mixture weight on the best-of-k branch")->capture_default_str();
  estimate->add_option("--eps-num", est.eps_num, "denominator stabilizer")->capture_default_str();
  estimate->add_option("--eps-skip", est.eps_skip, "degenerate-branch threshold")->capture_default_str();
  estimate->add_option("--beta-max", est.beta_max, "upper end of the beta search")->capture_default_str();

  std::string trace_path, series;
  auto* exp = app.add_subcommand("export", "print one trace series as iteration,value CSV");
  exp->add_option("--trace", trace_path, "trace.jsonl")->required();
  exp->add_option("--series", series, "cumulative_max|entropy|grad_norm|alpha")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : evopo::cli::kExitConfig;
  }

  if (*run) return evopo::cli::cmd_run(config_path, seed, out_dir, std::cout, std::cerr);
  if (*estimate) return evopo::cli::cmd_estimate(est, std::cout, std::cerr);
  return evopo::cli::cmd_export(trace_path, series, std::cout, std::cerr);
}
