#include <doctest.h>

#include "helpers.hpp"
#include "sae/inference.hpp"
#include "sae/sim.hpp"

using namespace sae;
using sae::testing::random_design;

TEST_CASE("chi-squared survival function spot values") {
  CHECK(chi_squared_sf(2.706, 1.0) == doctest::Approx(0.10).epsilon(2e-4));
  CHECK(chi_squared_sf(3.841, 1.0) == doctest::Approx(0.05).epsilon(2e-4));
  CHECK(chi_squared_sf(5.991, 2.0) == doctest::Approx(0.05).epsilon(2e-4));
  // df = 2 has the closed form exp(-x/2)
  for (double x : {0.5, 1.0, 3.0, 8.0})
    CHECK(chi_squared_sf(x, 2.0) == doctest::Approx(std::exp(-x / 2)).epsilon(1e-10));
  CHECK(chi_squared_sf(0.0, 1.0) == 1.0);
}

TEST_CASE("mixture_pvalue convention and oracle values") {
  CHECK(mixture_pvalue(0.0) == 1.0);
  CHECK(mixture_pvalue(2.706) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(mixture_pvalue(3.841) == doctest::Approx(0.025).epsilon(1e-3));
  CHECK_THROWS_WITH_AS(mixture_pvalue(-0.1), doctest::Contains("invalid-statistic"),
                       Error);
}

TEST_CASE("mixture_pvalue is monotone nonincreasing") {
  double previous = mixture_pvalue(0.0);
  for (double t = 0.01; t < 20.0; t += 0.37) {
    const double current = mixture_pvalue(t);
    CHECK(current <= previous);
    previous = current;
  }
}

TEST_CASE("test_beta: response in the column space of X gives statistic zero") {
  Rng rng(137);
  auto design = random_design(rng, 8, 3, 2);
  design.y = design.x * Eigen::VectorXd::Ones(design.k());
  auto result = test_beta(design, VarianceComponents<double>{0.8, 1.2});
  CHECK(result.statistic <= 1e-18);
  CHECK(result.p_value == doctest::Approx(1.0));
  CHECK_FALSE(result.reject);
}

TEST_CASE("test_beta equals the quadratic form in beta-tilde") {
  Rng rng(139);
  for (int trial = 0; trial < 8; ++trial) {
    auto design = random_design(rng, 7, 3, 2);
    VarianceComponents<double> delta{rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0)};
    auto result = test_beta(design, delta);

    // beta' (Z'MZ) beta via the projection
    auto m = projection_m(design, delta);
    Eigen::MatrixXd mz = m.apply(design.z);
    Eigen::MatrixXd zmz = design.z.transpose() * mz;
    Eigen::VectorXd beta = zmz.ldlt().solve(mz.transpose() * design.y);
    const double expected = beta.dot(zmz * beta);
    CHECK(result.statistic == doctest::Approx(expected).epsilon(1e-10));
    CHECK(result.df == 1);
  }
}

TEST_CASE("test_beta generalizes to degree two") {
  Rng rng(141);
  auto data = sae::testing::random_dataset(rng, 9, 3, 1);
  auto design = assemble_design(data, SplineConfig{2, 2});
  VarianceComponents<double> delta{0.6, 1.2};
  auto result = test_beta(design, delta);
  CHECK(result.df == 2);
  CHECK(result.p_value >= 0.0);
  CHECK(result.p_value <= 1.0);

  auto m = projection_m(design, delta);
  Eigen::MatrixXd mz = m.apply(design.z);
  Eigen::MatrixXd zmz = design.z.transpose() * mz;
  Eigen::VectorXd beta = zmz.ldlt().solve(mz.transpose() * design.y);
  CHECK(result.statistic == doctest::Approx(beta.dot(zmz * beta)).epsilon(1e-8));
}

TEST_CASE("test_beta invariances") {
  Rng rng(149);
  auto design = random_design(rng, 8, 3, 2);
  VarianceComponents<double> delta{0.9, 1.1};
  const double base = test_beta(design, delta).statistic;

  // shift along X columns
  auto shifted = design;
  Eigen::VectorXd coef(design.k());
  for (Index j = 0; j < coef.size(); ++j) coef(j) = rng.normal();
  shifted.y += design.x * coef;
  CHECK(test_beta(shifted, delta).statistic == doctest::Approx(base).epsilon(1e-8));

  // scale: c^2 at fixed delta, invariant when delta rescales with c^2
  auto scaled = design;
  scaled.y *= 2.0;
  CHECK(test_beta(scaled, delta).statistic == doctest::Approx(4.0 * base).epsilon(1e-10));
  VarianceComponents<double> rescaled{4.0 * delta.sigma_gamma_sq, 4.0 * delta.sigma_sq};
  CHECK(test_beta(scaled, rescaled).statistic == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("test_beta rejects Z collinear with X") {
  Rng rng(151);
  auto design = random_design(rng, 8, 3, 2);
  design.z = design.x.col(1);
  CHECK_THROWS_WITH_AS(test_beta(design, VarianceComponents<double>{1.0, 1.0}),
                       doctest::Contains("z-collinear-with-x"), Error);
}

TEST_CASE("lrt_area_effect: boundary gives statistic zero, p-value one") {
  Rng rng(157);
  // null data until a replicate lands on the boundary
  bool found = false;
  for (int trial = 0; trial < 20 && !found; ++trial) {
    auto data = sae::testing::random_dataset(rng, 10, 2, 1);
    auto design = assemble_design(data, SplineConfig{1, 2});
    Eigen::VectorXd noise(design.n());
    for (Index i = 0; i < noise.size(); ++i) noise(i) = rng.normal();
    design.y = design.u * Eigen::VectorXd::Ones(design.u.cols()) + noise;
    auto ml = estimate_variance_components(design, FitMethod::ml);
    if (!ml.at_boundary) continue;
    found = true;
    auto result = lrt_area_effect(design);
    CHECK(result.statistic == 0.0);
    CHECK(result.p_value == 1.0);
    CHECK_FALSE(result.reject);
    CHECK(result.null_dist == NullDistribution::mixture_half_chi_squared);
  }
  CHECK(found);
}

TEST_CASE("lrt_area_effect statistic is nonnegative") {
  Rng rng(163);
  for (int trial = 0; trial < 6; ++trial) {
    auto data = sae::testing::random_dataset(rng, 10, 2, 1);
    auto design = assemble_design(data, SplineConfig{1, 2});
    auto result = lrt_area_effect(design);
    CHECK(result.statistic >= 0.0);
    CHECK(result.p_value >= 0.0);
    CHECK(result.p_value <= 1.0);
    CHECK(result.reject == (result.p_value < result.alpha));
  }
}

TEST_CASE("diagnose_area_effect recovers an exact within-area slope") {
  // y = 2 x within every area plus an area shift tied to z
  Dataset<double> data;
  const int m = 6;
  std::vector<double> y, z;
  std::vector<double> xcol;
  for (int i = 0; i < m; ++i) {
    const double zi = 1.0 + i;
    for (int j = 0; j < 3; ++j) {
      const double x = 0.5 * j + 0.1 * i;
      xcol.push_back(x);
      y.push_back(2.0 * x + 3.0 * zi);  // vtilde = 3 z
      z.push_back(zi);
      data.area_id.push_back("area_" + std::to_string(i));
    }
  }
  const Index n = static_cast<Index>(y.size());
  data.y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  data.z = Eigen::Map<const Eigen::VectorXd>(z.data(), n);
  data.x.resize(n, 2);
  data.x.col(0).setOnes();
  data.x.col(1) = Eigen::Map<const Eigen::VectorXd>(xcol.data(), n);

  auto diag = diagnose_area_effect(data);
  CHECK(diag.beta1_within == doctest::Approx(2.0));
  CHECK(diag.vtilde.size() == m);
  for (int i = 0; i < m; ++i) {
    const double zi = 1.0 + i;
    const double xbar = 0.5 + 0.1 * i;
    CHECK(diag.vtilde(i) == doctest::Approx(2.0 * xbar + 3.0 * zi - 2.0 * xbar));
  }
  CHECK(diag.corr_with_z == doctest::Approx(1.0));
}

TEST_CASE("diagnose_area_effect degenerate inputs") {
  Dataset<double> no_variation;
  for (int i = 0; i < 4; ++i) {
    no_variation.area_id.push_back("area_" + std::to_string(i));
    no_variation.area_id.push_back("area_" + std::to_string(i));
  }
  no_variation.y = Eigen::VectorXd::LinSpaced(8, 0.0, 7.0);
  no_variation.z = Eigen::VectorXd::LinSpaced(8, 1.0, 4.5);
  // make z constant within areas
  for (int i = 0; i < 4; ++i) {
    no_variation.z(2 * i) = i + 1.0;
    no_variation.z(2 * i + 1) = i + 1.0;
  }
  no_variation.x = Eigen::MatrixXd::Ones(8, 2);  // x constant within areas
  CHECK_THROWS_WITH_AS(diagnose_area_effect(no_variation),
                       doctest::Contains("degenerate-within-variation"), Error);

  // vtilde constant across areas: correlation undefined
  Dataset<double> flat;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) flat.area_id.push_back("area_" + std::to_string(i));
  flat.x.resize(8, 2);
  flat.x.col(0).setOnes();
  flat.x.col(1) << 0, 1, 0, 1, 0, 1, 0, 1;
  flat.y = 2.0 * flat.x.col(1);  // same intercept everywhere
  flat.z.resize(8);
  flat.z << 1, 1, 2, 2, 3, 3, 4, 4;
  CHECK_THROWS_WITH_AS(diagnose_area_effect(flat),
                       doctest::Contains("zero-variance-diagnostic"), Error);

  // needs exactly one covariate
  Dataset<double> wide = flat;
  wide.x.resize(8, 3);
  wide.x.setOnes();
  CHECK_THROWS_WITH_AS(diagnose_area_effect(wide), doctest::Contains("invalid-config"),
                       Error);
}

TEST_CASE("diagnose_area_effect flags a linear area effect in simulated data") {
  SimScenario scenario;
  scenario.model = SimModel::m2;  // v = 1 + z
  scenario.m = 40;
  scenario.base_seed = 2024;
  auto sim = generate_dataset(scenario, mix_seed(scenario.base_seed, 0));
  auto diag = diagnose_area_effect(sim.data);
  CHECK(diag.corr_with_z > 0.5);
}
