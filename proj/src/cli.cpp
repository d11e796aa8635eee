#include "sae/cli.hpp"

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "sae/design.hpp"
#include "sae/error.hpp"
#include "sae/inference.hpp"
#include "sae/io.hpp"
#include "sae/lmm.hpp"
#include "sae/sae.hpp"
#include "sae/sim.hpp"
#include "sae/version.hpp"

namespace sae::cli {

using nlohmann::json;

namespace {

json config_json(const RunConfig& config, bool simulate_command) {
  json out{
      {"degree", config.degree},
      {"method", to_string(config.method)},
      {"alpha", config.alpha},
      {"seed", config.seed},
      {"out", config.out_dir},
  };
  if (config.knots > 0)
    out["knots"] = config.knots;
  else
    out["knots"] = config.knots == 0 ? "auto" : "default";
  if (simulate_command) {
    out["model"] = config.model;
    out["m"] = config.sim_m;
    out["ni"] = config.sim_ni;
    out["replicates"] = config.replicates;
    out["sigma_e"] = config.sigma_e;
  } else {
    out["input"] = config.input;
    out["targets"] = config.targets.empty() ? json(nullptr) : json(config.targets);
  }
  return out;
}

// -1 keeps the application profile: 15 knots once the data carries at least
// 64 areas, otherwise the automatic quantile-count rule.
SplineConfig resolve_spline_config(const RunConfig& config, Index area_count) {
  SplineConfig spline;
  spline.degree = config.degree;
  if (config.knots > 0)
    spline.knot_count = config.knots;
  else if (config.knots < 0 && area_count >= 64)
    spline.knot_count = 15;
  else
    spline.knot_count = 0;
  return spline;
}

int exit_code_for(const Error& err) {
  return err.kind() == ErrorKind::invalid_input ? 2 : 3;
}

std::string out_path(const RunConfig& config, const std::string& name) {
  std::filesystem::create_directories(config.out_dir);
  return (std::filesystem::path(config.out_dir) / name).string();
}

struct FittedModel {
  Dataset<double> data;
  DesignMatrices<double> design;
  VarCompEstimate<double> varest;
  BlupFit<double> fit;
};

FittedModel fit_from_config(const RunConfig& config) {
  FittedModel model;
  model.data = read_unit_csv_file(config.input);
  auto groups = AreaGroups<double>::build(model.data);
  model.design = assemble_design(model.data, resolve_spline_config(config, groups.m()));
  model.varest = estimate_variance_components(model.design, config.method);
  model.fit = blup_fit(model.design, model.varest.delta);
  return model;
}

json test_json(const char* name, const TestResult<double>& result) {
  return json{
      {"test", name},
      {"statistic", result.statistic},
      {"df_or_mixture",
       result.null_dist == NullDistribution::chi_squared
           ? "chi2_df" + std::to_string(result.df)
           : std::string("mixture_half_chi2")},
      {"p_value", result.p_value},
      {"alpha", result.alpha},
      {"reject", result.reject},
      {"delta_used",
       {{"sigma_gamma_sq", result.delta_used.sigma_gamma_sq},
        {"sigma_sq", result.delta_used.sigma_sq}}},
  };
}

std::string dump_report(const json& report) { return report.dump(2) + "\n"; }

std::vector<AreaTarget<double>> resolve_targets(const RunConfig& config,
                                                const FittedModel& model) {
  if (config.targets.empty()) return targets_from_sample_means(model.design);

  std::unordered_map<std::string, Index> area_of;
  for (Index i = 0; i < model.design.m(); ++i)
    area_of.emplace(model.design.area_ids[static_cast<std::size_t>(i)], i);

  std::vector<AreaTarget<double>> targets;
  for (const auto& row : read_targets_csv_file(config.targets)) {
    auto found = area_of.find(row.area_id);
    if (found == area_of.end())
      fail_input("unknown-area", "targets reference area '" + row.area_id +
                                     "' absent from the input data");
    if (row.xbar.size() + 1 != model.design.k())
      fail_input("target-fit-mismatch",
                 "targets carry " + std::to_string(row.xbar.size()) +
                     " auxiliaries, the model has " + std::to_string(model.design.k() - 1));
    Eigen::VectorXd xbar(model.design.k());
    xbar << 1.0, row.xbar;
    targets.push_back(make_area_target(model.design, row.area_id, std::move(xbar),
                                       model.design.area_z(found->second)));
  }
  return targets;
}

}  // namespace

int cmd_fit(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    auto model = fit_from_config(config);
    const auto& design = model.design;
    const auto& varest = model.varest;
    const auto& fit = model.fit;

    json coefficients;
    Eigen::VectorXd se = fit.psi_cov.diagonal().cwiseSqrt();
    for (Index j = 0; j < design.k(); ++j) {
      coefficients["theta"].push_back(
          {{"name", j == 0 ? std::string("intercept") : "x" + std::to_string(j)},
           {"estimate", fit.psi(j)},
           {"std_error", se(j)}});
    }
    for (Index d = 0; d < design.p(); ++d) {
      coefficients["beta"].push_back(
          {{"name", d == 0 ? std::string("z") : "z^" + std::to_string(d + 1)},
           {"estimate", fit.psi(design.k() + d)},
           {"std_error", se(design.k() + d)}});
    }

    auto xp = ModelCrossProducts<double>::from(design);
    json report{
        {"command", "fit"},
        {"config", config_json(config, false)},
        {"version", version},
        {"input_hash", hash_file(config.input)},
        {"dims",
         {{"n", design.n()}, {"m", design.m()}, {"k", design.k()}, {"p", design.p()},
          {"knots", design.spline_dim()}}},
        {"knots", std::vector<double>(design.knots.knots.data(),
                                      design.knots.knots.data() + design.knots.size())},
        {"coefficients", coefficients},
        {"gamma", std::vector<double>(fit.gamma.data(), fit.gamma.data() + fit.gamma.size())},
        {"variance_components",
         {{"sigma_gamma_sq", varest.delta.sigma_gamma_sq},
          {"sigma_sq", varest.delta.sigma_sq},
          {"lambda", varest.at_boundary ? json(nullptr) : json(varest.delta.penalty_ratio())}}},
        {"fit",
         {{"method", to_string(varest.method)},
          {"loglik", varest.loglik},
          {"restricted_loglik", restricted_loglik(xp, varest.delta)},
          {"profile_loglik", profile_loglik(xp, varest.delta)},
          {"converged", varest.converged},
          {"iterations", varest.iterations},
          {"at_boundary", varest.at_boundary}}},
    };
    json warnings = json::array();
    if (design.knots_collapsed())
      warnings.push_back("duplicate knots collapsed: " +
                         std::to_string(design.spline_dim()) + " of " +
                         std::to_string(design.requested_knot_count) + " kept");
    report["warnings"] = warnings;

    const std::string path = out_path(config, "fit.json");
    write_file(path, dump_report(report));
    out << "wrote " << path << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

int cmd_predict(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    auto model = fit_from_config(config);
    auto targets = resolve_targets(config, model);

    EblupMse<double> mse(model.design, model.varest, model.fit);
    std::vector<AreaPrediction<double>> predictions;
    predictions.reserve(targets.size());
    for (const auto& target : targets) predictions.push_back(mse.predict(model.fit, target));

    std::ostringstream csv;
    write_predictions_csv(csv, predictions);
    const std::string path = out_path(config, "predictions.csv");
    write_file(path, csv.str());
    out << "wrote " << path << " (" << predictions.size() << " areas)\n";
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

int cmd_test(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    auto model = fit_from_config(config);

    auto h1 = test_beta(model.design, model.varest, config.alpha);
    auto h2 = lrt_area_effect(model.design, config.alpha);

    json report{
        {"command", "test"},
        {"config", config_json(config, false)},
        {"version", version},
        {"input_hash", hash_file(config.input)},
        {"h1_beta", test_json("beta-zero", h1)},
        {"h2_variance", test_json("area-effect-lrt", h2)},
    };
    try {
      auto diag = diagnose_area_effect(model.data);
      report["diagnostic"] = {
          {"beta1_within", diag.beta1_within},
          {"corr_with_z", diag.corr_with_z},
          {"vtilde", std::vector<double>(diag.vtilde.data(),
                                         diag.vtilde.data() + diag.vtilde.size())},
          {"areas", model.design.area_ids},
      };
    } catch (const Error& diag_err) {
      report["diagnostic"] = nullptr;
      report["diagnostic_error"] = diag_err.what();
    }

    const std::string path = out_path(config, "test.json");
    write_file(path, dump_report(report));
    out << "wrote " << path << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

int cmd_diagnose(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    auto data = read_unit_csv_file(config.input);
    auto diag = diagnose_area_effect(data);
    auto groups = AreaGroups<double>::build(data);

    json report{
        {"command", "diagnose"},
        {"config", config_json(config, false)},
        {"version", version},
        {"input_hash", hash_file(config.input)},
        {"diagnostic",
         {{"beta1_within", diag.beta1_within},
          {"corr_with_z", diag.corr_with_z},
          {"vtilde", std::vector<double>(diag.vtilde.data(),
                                         diag.vtilde.data() + diag.vtilde.size())},
          {"areas", groups.ids},
          {"area_z", std::vector<double>(groups.z.data(), groups.z.data() + groups.z.size())}}},
    };
    const std::string path = out_path(config, "diagnostic.json");
    write_file(path, dump_report(report));
    out << "wrote " << path << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

namespace {

SimScenario scenario_from_config(const RunConfig& config) {
  SimScenario scenario;
  scenario.model = parse_sim_model(config.model);
  scenario.m = config.sim_m;
  scenario.n_per_area = config.sim_ni;
  scenario.replicates = config.replicates;
  scenario.sigma_e = config.sigma_e;
  scenario.degree = config.degree;
  scenario.knot_count = config.knots > 0 ? config.knots : 0;
  scenario.alpha = config.alpha;
  scenario.method = config.method;
  scenario.base_seed = config.seed;
  return scenario;
}

json report_from_study(const RunConfig& config, const SimReport& study) {
  json metrics{
      {"smse", std::vector<double>(study.smse.data(), study.smse.data() + study.smse.size())},
      {"smse_mean", study.smse.mean()},
      {"rb", study.rb ? json(*study.rb) : json(nullptr)},
      {"cv", study.cv ? json(*study.cv) : json(nullptr)},
      {"p1", study.p1},
      {"p2", study.p2},
      {"replicates_used", study.replicates_used},
      {"failures", study.failures},
      {"high_failure_rate", study.high_failure_rate},
  };
  json failed = json::array();
  for (const auto& rec : study.records)
    if (rec.failed) failed.push_back({{"rep", rec.replicate}, {"error", rec.error_code}});

  json config_echo = config_json(config, true);
  config_echo["model"] = to_string(study.scenario.model);
  config_echo["m"] = study.scenario.m;

  json warnings = json::array();
  if (!study.rb) warnings.push_back("rb/cv undefined with fewer than 2 replicates");
  if (study.high_failure_rate) warnings.push_back("more than 2% of replicates failed");

  return json{
      {"command", "simulate"}, {"config", config_echo},  {"version", version},
      {"input_hash", nullptr}, {"metrics", metrics},     {"failed_replicates", failed},
      {"warnings", warnings},
  };
}

std::string replicates_csv(const SimReport& study) {
  std::ostringstream out;
  out << "rep,area,estimate,truth,mse,reject_h1,reject_h2\n";
  out << std::setprecision(17);
  for (const auto& rec : study.records) {
    if (rec.failed) continue;
    for (Index i = 0; i < rec.estimate.size(); ++i) {
      out << rec.replicate << ",area_" << (i + 1) << ',' << rec.estimate(i) << ','
          << rec.truth(i) << ',' << rec.mse(i) << ',' << (rec.reject_h1 ? 1 : 0) << ','
          << (rec.reject_h2 ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

}  // namespace

int cmd_simulate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    if (!config.table1) {
      SimScenario scenario = scenario_from_config(config);
      SimReport study = run_study(scenario, config.max_threads);
      const std::string json_path = out_path(config, "simulation.json");
      const std::string csv_path = out_path(config, "replicates.csv");
      write_file(json_path, dump_report(report_from_study(config, study)));
      write_file(csv_path, replicates_csv(study));
      out << "wrote " << json_path << " and " << csv_path << "\n";
      return 0;
    }

    // all 15 (model, m) cells
    std::ostringstream table;
    table << "model,m,smse_mean,rb,cv,p1,p2,replicates_used,failures\n";
    table << std::setprecision(10);
    for (const char* model : {"M1", "M2", "M3", "M4", "M5"}) {
      for (int m : {30, 60, 100}) {
        RunConfig cell = config;
        cell.model = model;
        cell.sim_m = m;
        SimScenario scenario = scenario_from_config(cell);
        SimReport study = run_study(scenario, config.max_threads);
        const std::string tag = std::string(model) + "_m" + std::to_string(m);
        write_file(out_path(config, "simulation_" + tag + ".json"),
                   dump_report(report_from_study(cell, study)));
        write_file(out_path(config, "replicates_" + tag + ".csv"), replicates_csv(study));
        table << model << ',' << m << ',' << study.smse.mean() << ','
              << (study.rb ? std::to_string(*study.rb) : "") << ','
              << (study.cv ? std::to_string(*study.cv) : "") << ',' << study.p1 << ','
              << study.p2 << ',' << study.replicates_used << ',' << study.failures << '\n';
        out << "finished " << tag << "\n";
      }
    }
    const std::string table_path = out_path(config, "table1.csv");
    write_file(table_path, table.str());
    out << "wrote " << table_path << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace sae::cli
