#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "tensorreg/errors.hpp"
#include "tensorreg/io.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int replicates = 0;
  std::vector<std::string> methods;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool require_config) {
  auto* opt = cmd->add_option("--config", flags.config_path, "run config JSON path");
  if (require_config) opt->required();
  cmd->add_option("--out", flags.out_dir, "output directory (overrides config)");
  cmd->add_option("--seed", flags.seed, "base seed (overrides config)")
      ->each([&](const std::string&) { flags.seed_set = true; });
  cmd->add_option("--replicates", flags.replicates, "replicate count (overrides config)");
  cmd->add_option("--methods", flags.methods, "methods subset (mdgdp, lasso)")->delimiter(',');
  cmd->add_flag("--force", flags.force, "overwrite existing outputs");
}

tensorreg::RunConfig resolve_config(const CommonFlags& flags) {
  tensorreg::RunConfig config = tensorreg::load_run_config(flags.config_path);
  if (!flags.out_dir.empty()) config.output_dir = flags.out_dir;
  if (flags.seed_set) {
    config.seed = flags.seed;
    config.scenario.seed = flags.seed;
  }
  if (flags.replicates > 0) config.replicates = flags.replicates;
  if (!flags.methods.empty()) config.methods = flags.methods;
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian tensor regression with multiway shrinkage: simulation, "
               "fitting, evaluation and rendering"};
  app.require_subcommand(1);

  CommonFlags sim_flags, fit_flags, eval_flags, render_flags;
  auto* sim = app.add_subcommand("simulate", "generate replicate datasets from a scenario");
  add_common(sim, sim_flags, true);
  auto* fit = app.add_subcommand("fit", "run the samplers on simulated datasets");
  add_common(fit, fit_flags, true);
  auto* eval = app.add_subcommand("eval", "score fits against the simulation truth");
  add_common(eval, eval_flags, true);
  auto* render = app.add_subcommand("render", "write graymaps of truth and posterior mean");
  add_common(render, render_flags, true);

  auto* prior = app.add_subcommand("prior-table", "induced prior quantile table");
  int prior_d = 2;
  std::vector<int> prior_ranks{1, 5, 10};
  long prior_samples = 1000000;
  std::uint64_t prior_seed = 1;
  std::string prior_out = "prior_table.csv";
  bool prior_force = false;
  prior->add_option("--dims", prior_d, "tensor order D");
  prior->add_option("--ranks", prior_ranks, "ranks to tabulate")->delimiter(',');
  prior->add_option("--samples", prior_samples, "Monte Carlo sample count");
  prior->add_option("--seed", prior_seed, "seed");
  prior->add_option("--out", prior_out, "output CSV path");
  prior->add_flag("--force", prior_force, "overwrite existing output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) tensorreg::cmd_simulate(resolve_config(sim_flags), sim_flags.force);
    if (fit->parsed()) tensorreg::cmd_fit(resolve_config(fit_flags), fit_flags.force);
    if (eval->parsed()) tensorreg::cmd_eval(resolve_config(eval_flags), eval_flags.force);
    if (render->parsed()) tensorreg::cmd_render(resolve_config(render_flags), render_flags.force);
    if (prior->parsed())
      tensorreg::cmd_prior_table(prior_d, prior_ranks, prior_samples, prior_seed, prior_out,
                                 prior_force);
  } catch (const tensorreg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const tensorreg::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const tensorreg::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
