#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sae/cli.hpp"
#include "sae/error.hpp"
#include "sae/version.hpp"

namespace {

void add_common_options(CLI::App* cmd, sae::cli::RunConfig& config, std::string& knots,
                        std::string& method, bool needs_input) {
  if (needs_input)
    cmd->add_option("--input", config.input, "unit-level CSV (area_id,y,x1,...,xk,z)")
        ->required();
  cmd->add_option("--degree", config.degree, "spline degree p");
  cmd->add_option("--knots", knots, "knot count K, or 'auto'");
  cmd->add_option("--method", method, "variance estimation: reml or ml")
      ->check(CLI::IsMember({"reml", "ml"}));
  cmd->add_option("--alpha", config.alpha, "test level");
  cmd->add_option("--seed", config.seed, "base seed echoed into reports");
  cmd->add_option("--out", config.out_dir, "output directory");
}

// Returns false on an unusable --knots value.
bool apply_knots(const std::string& knots, sae::cli::RunConfig& config) {
  if (knots.empty()) return true;
  if (knots == "auto") {
    config.knots = 0;
    return true;
  }
  try {
    config.knots = std::stoi(knots);
  } catch (const std::exception&) {
    return false;
  }
  return config.knots >= 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semiparametric small-area estimation with penalized splines"};
  app.set_version_flag("--version", std::string("sae ") + sae::version);
  app.require_subcommand(1);

  sae::cli::RunConfig config;
  std::string knots;
  std::string method = "reml";

  auto* fit = app.add_subcommand("fit", "fit the model and report coefficients");
  add_common_options(fit, config, knots, method, true);

  auto* predict = app.add_subcommand("predict", "per-area EBLUP estimates with MSE");
  add_common_options(predict, config, knots, method, true);
  predict->add_option("--targets", config.targets, "targets CSV (area_id,xbar1,...,xbark)");

  auto* test = app.add_subcommand("test", "tests for the presence of the area effect");
  add_common_options(test, config, knots, method, true);

  auto* diagnose = app.add_subcommand("diagnose", "area-residual diagnostic against z");
  add_common_options(diagnose, config, knots, method, true);

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study");
  add_common_options(simulate, config, knots, method, false);
  simulate->add_option("--model", config.model, "M1..M5");
  simulate->add_option("--m", config.sim_m, "area count");
  simulate->add_option("--ni", config.sim_ni, "units per area");
  simulate->add_option("--replicates", config.replicates, "replicate count B");
  simulate->add_option("--sigma-e", config.sigma_e, "error standard deviation");
  simulate->add_flag("--table1", config.table1, "run all 15 (model, m) cells");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (!apply_knots(knots, config)) {
    std::cerr << "error: --knots expects a positive integer or 'auto'\n";
    return 2;
  }
  config.method = method == "ml" ? sae::FitMethod::ml : sae::FitMethod::reml;

  if (fit->parsed()) return sae::cli::cmd_fit(config, std::cout, std::cerr);
  if (predict->parsed()) return sae::cli::cmd_predict(config, std::cout, std::cerr);
  if (test->parsed()) return sae::cli::cmd_test(config, std::cout, std::cerr);
  if (diagnose->parsed()) return sae::cli::cmd_diagnose(config, std::cout, std::cerr);
  if (simulate->parsed()) return sae::cli::cmd_simulate(config, std::cout, std::cerr);
  return 2;
}
