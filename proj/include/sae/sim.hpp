#ifndef SAE_SIM_HPP
#define SAE_SIM_HPP

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sae/dataset.hpp"
#include "sae/design.hpp"
#include "sae/distributions.hpp"
#include "sae/error.hpp"
#include "sae/inference.hpp"
#include "sae/rng.hpp"
#include "sae/sae.hpp"
#include "sae/varcomp.hpp"

namespace sae {

enum class SimModel { m1, m2, m3, m4, m5 };

inline const char* to_string(SimModel model) {
  switch (model) {
    case SimModel::m1: return "M1";
    case SimModel::m2: return "M2";
    case SimModel::m3: return "M3";
    case SimModel::m4: return "M4";
    case SimModel::m5: return "M5";
  }
  return "?";
}

inline SimModel parse_sim_model(const std::string& name) {
  if (name == "M1" || name == "m1") return SimModel::m1;
  if (name == "M2" || name == "m2") return SimModel::m2;
  if (name == "M3" || name == "m3") return SimModel::m3;
  if (name == "M4" || name == "m4") return SimModel::m4;
  if (name == "M5" || name == "m5") return SimModel::m5;
  fail_input("unknown-model", "unknown simulation model '" + name + "'");
}

// Area-effect functions of the five study models.
inline double v_function(SimModel model, double z) {
  switch (model) {
    case SimModel::m1: return std::sin(z);
    case SimModel::m2: return 1.0 + z;
    case SimModel::m3: return std::exp(z);
    case SimModel::m4: return normal_pdf(z);
    case SimModel::m5: return 1.0;
  }
  fail_input("unknown-model", "unknown simulation model");
}

struct SimScenario {
  SimModel model = SimModel::m2;
  int m = 30;                      // area count
  int n_per_area = 4;
  Eigen::Vector2d theta{1.0, 1.0}; // intercept and slope of the linear part
  double sigma_e = 1.0;            // error standard deviation
  double x_lo = 1.0 / 3.0, x_hi = 3.0;
  double z_lo = 0.5, z_hi = 2.0;
  int degree = 1;
  int knot_count = 0;              // 0 = auto rule
  int replicates = 1000;
  double alpha = 0.05;
  FitMethod method = FitMethod::reml;  // plug-in fits for prediction and T-hat
  std::uint64_t base_seed = 1;

  void validate() const {
    if (m < 2 || n_per_area < 1 || replicates < 1)
      fail_input("invalid-config", "need m >= 2, n_per_area >= 1, replicates >= 1");
    if (!(sigma_e > 0.0)) fail_input("invalid-config", "sigma_e must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) fail_input("invalid-config", "alpha must lie in (0,1)");
  }
};

struct SimulatedData {
  Dataset<double> data;
  Eigen::VectorXd truth;  // per-area Xbar_i' theta + v(z_i)
};

// One dataset draw: z_i ~ U(z range), x_ij ~ U(x range),
// y = theta0 + theta1 x + v(z_i) + e with Gaussian errors. The per-area truth
// uses the realized sample mean of x.
inline SimulatedData generate_dataset(const SimScenario& scenario, std::uint64_t seed) {
  scenario.validate();
  Rng rng(seed);
  const int m = scenario.m;
  const int ni = scenario.n_per_area;
  const Index n = static_cast<Index>(m) * ni;

  SimulatedData out;
  out.data.area_id.reserve(static_cast<std::size_t>(n));
  out.data.y.resize(n);
  out.data.x.resize(n, 2);
  out.data.z.resize(n);
  out.truth.resize(m);

  Eigen::VectorXd area_z(m);
  for (int i = 0; i < m; ++i) area_z(i) = rng.uniform(scenario.z_lo, scenario.z_hi);

  Index row = 0;
  for (int i = 0; i < m; ++i) {
    const double v = v_function(scenario.model, area_z(i));
    const std::string id = "area_" + std::to_string(i + 1);
    double x_sum = 0.0;
    for (int j = 0; j < ni; ++j, ++row) {
      const double x = rng.uniform(scenario.x_lo, scenario.x_hi);
      const double eps = rng.normal(0.0, scenario.sigma_e);
      x_sum += x;
      out.data.area_id.push_back(id);
      out.data.x(row, 0) = 1.0;
      out.data.x(row, 1) = x;
      out.data.z(row) = area_z(i);
      out.data.y(row) = scenario.theta(0) + scenario.theta(1) * x + v + eps;
    }
    const double xbar = x_sum / ni;
    out.truth(i) = scenario.theta(0) + scenario.theta(1) * xbar + v;
  }
  return out;
}

struct ReplicateRecord {
  int replicate = 0;
  bool failed = false;
  std::string error_code;
  VarianceComponents<double> delta_hat;
  bool at_boundary = false;
  Eigen::VectorXd estimate;  // per-area EBLUP
  Eigen::VectorXd truth;     // per-area target value
  Eigen::VectorXd mse;       // per-area mse_total
  double beta_stat = 0.0, beta_pvalue = 1.0;
  bool reject_h1 = false;
  double lrt_stat = 0.0, lrt_pvalue = 1.0;
  bool reject_h2 = false;
};

// REML fit, EBLUP with second-order MSE for every area, and both area-effect
// tests. Failures are recorded, never silently dropped.
inline ReplicateRecord run_replicate(const SimScenario& scenario, std::uint64_t seed) {
  ReplicateRecord record;
  auto sim = generate_dataset(scenario, seed);
  record.truth = sim.truth;
  try {
    SplineConfig config{scenario.degree, scenario.knot_count};
    auto design = assemble_design(sim.data, config);
    auto varest = estimate_variance_components(design, scenario.method);
    auto fit = blup_fit(design, varest.delta);
    record.delta_hat = varest.delta;
    record.at_boundary = varest.at_boundary;

    auto targets = targets_from_sample_means(design);
    EblupMse<double> mse(design, varest, fit);
    record.estimate.resize(design.m());
    record.mse.resize(design.m());
    for (Index i = 0; i < design.m(); ++i) {
      auto prediction = mse.predict(fit, targets[static_cast<std::size_t>(i)]);
      record.estimate(i) = prediction.estimate;
      record.mse(i) = prediction.mse_total;
    }

    auto h1 = test_beta(design, varest, scenario.alpha);
    record.beta_stat = h1.statistic;
    record.beta_pvalue = h1.p_value;
    record.reject_h1 = h1.reject;

    auto h2 = lrt_area_effect(design, scenario.alpha);
    record.lrt_stat = h2.statistic;
    record.lrt_pvalue = h2.p_value;
    record.reject_h2 = h2.reject;
  } catch (const Error& err) {
    record.failed = true;
    record.error_code = err.code();
  }
  return record;
}

struct SimReport {
  SimScenario scenario;
  Eigen::VectorXd smse;          // per-area empirical MSE of the EBLUP
  std::optional<double> rb;      // mean relative bias of the MSE estimator
  std::optional<double> cv;      // mean coefficient of variation
  double p1 = 0.0;               // rejection proportion, beta test
  double p2 = 0.0;               // rejection proportion, LRT
  int replicates_used = 0;
  int failures = 0;
  bool high_failure_rate = false;  // more than 2% of replicates failed
  std::vector<ReplicateRecord> records;
};

// Aggregation over replicate records, in replicate-index order.
//   SMSE_i = mean_b (estimate - truth)^2
//   RB_i   = (mean_b mse_i - SMSE_i) / SMSE_i
//   CV_i   = sqrt(mean_b (mse_i - SMSE_i)^2) / SMSE_i
inline SimReport summarize_replicates(const SimScenario& scenario,
                                      std::vector<ReplicateRecord> records) {
  const int m = scenario.m;
  SimReport report;
  report.scenario = scenario;
  report.records = std::move(records);

  Eigen::VectorXd sq_err = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd mse_mean = Eigen::VectorXd::Zero(m);
  int used = 0;
  int rejections_h1 = 0, rejections_h2 = 0;
  for (const auto& rec : report.records) {
    if (rec.failed) {
      ++report.failures;
      continue;
    }
    ++used;
    sq_err += (rec.estimate - rec.truth).array().square().matrix();
    mse_mean += rec.mse;
    rejections_h1 += rec.reject_h1 ? 1 : 0;
    rejections_h2 += rec.reject_h2 ? 1 : 0;
  }
  if (used == 0) fail_numeric("study-failed", "all replicates failed");
  report.replicates_used = used;
  report.high_failure_rate =
      report.failures > 0 &&
      static_cast<double>(report.failures) > 0.02 * static_cast<double>(report.records.size());

  report.smse = sq_err / used;
  mse_mean /= used;
  report.p1 = static_cast<double>(rejections_h1) / used;
  report.p2 = static_cast<double>(rejections_h2) / used;

  if (used >= 2) {
    double rb_sum = 0.0, cv_sum = 0.0;
    Eigen::VectorXd cv_acc = Eigen::VectorXd::Zero(m);
    for (const auto& rec : report.records) {
      if (rec.failed) continue;
      cv_acc += (rec.mse - report.smse).array().square().matrix();
    }
    cv_acc /= used;
    for (int i = 0; i < m; ++i) {
      rb_sum += (mse_mean(i) - report.smse(i)) / report.smse(i);
      cv_sum += std::sqrt(cv_acc(i)) / report.smse(i);
    }
    report.rb = rb_sum / m;
    report.cv = cv_sum / m;
  }
  return report;
}

inline int resolve_worker_count(int requested) {
  int limit = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (limit < 1) limit = 1;
  if (const char* env = std::getenv("SAE_MAX_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1 && cap < limit) limit = cap;
  }
  return limit;
}

// Monte Carlo study: replicate b is a pure function of (scenario, mix_seed(
// base_seed, b)), so results are identical for any worker count; aggregation
// runs in replicate-index order.
inline SimReport run_study(const SimScenario& scenario, int max_threads = 0) {
  scenario.validate();
  const int B = scenario.replicates;
  std::vector<ReplicateRecord> records(static_cast<std::size_t>(B));
  const int workers = std::min(resolve_worker_count(max_threads), B);

  if (workers <= 1) {
    for (int b = 0; b < B; ++b) {
      records[static_cast<std::size_t>(b)] =
          run_replicate(scenario, mix_seed(scenario.base_seed, static_cast<std::uint64_t>(b)));
      records[static_cast<std::size_t>(b)].replicate = b;
    }
  } else {
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (;;) {
        const int b = next.fetch_add(1);
        if (b >= B) return;
        records[static_cast<std::size_t>(b)] =
            run_replicate(scenario, mix_seed(scenario.base_seed, static_cast<std::uint64_t>(b)));
        records[static_cast<std::size_t>(b)].replicate = b;
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return summarize_replicates(scenario, std::move(records));
}

}  // namespace sae

#endif
