#include <doctest.h>

#include "helpers.hpp"
#include "sae/sae.hpp"

using namespace sae;
using sae::testing::fixture_f1;
using sae::testing::random_design;

namespace {

AreaTarget<double> f1_target() {
  AreaTarget<double> target;
  target.area_id = "a";
  target.xbar.resize(1);
  target.xbar << 1.0;
  target.zpoly.resize(0);
  target.w.resize(1);
  target.w << 1.0;
  return target;
}

}  // namespace

TEST_CASE("area_predictor on the fixture") {
  auto f1 = fixture_f1();
  auto fit = blup_fit(f1, {1.0, 1.0});
  CHECK(area_predictor(fit, f1_target()) == doctest::Approx(2.0));
}

TEST_CASE("area_predictor special cases") {
  Rng rng(101);
  auto design = random_design(rng, 8, 3, 2);

  // gamma = 0: synthetic regression estimate
  auto fit0 = blup_fit(design, {0.0, 1.0});
  auto targets = targets_from_sample_means(design);
  for (const auto& target : targets)
    CHECK(area_predictor(fit0, target) == doctest::Approx(target.ubar().dot(fit0.psi)));

  // w = 0 (z below the first knot): fixed part only
  auto fit = blup_fit(design, {1.5, 1.0});
  Eigen::VectorXd xbar(design.k());
  xbar << 1.0, 0.3;
  const double low_z = std::min(design.area_z.minCoeff(), design.knots.knots(0)) - 1.0;
  auto low = make_area_target(design, "below", xbar, low_z);
  CHECK(low.w.isZero(0.0));
  CHECK(low.extrapolation);
  CHECK(area_predictor(fit, low) == doctest::Approx(low.ubar().dot(fit.psi)));
}

TEST_CASE("area_predictor rejects mismatched targets") {
  auto f1 = fixture_f1();
  auto fit = blup_fit(f1, {1.0, 1.0});
  auto target = f1_target();
  target.w.resize(3);
  target.w.setZero();
  CHECK_THROWS_WITH_AS(area_predictor(fit, target),
                       doctest::Contains("target-fit-mismatch"), Error);
}

TEST_CASE("b_vector on the fixture and its vanishing cases") {
  auto f1 = fixture_f1();
  auto target = f1_target();
  auto b = b_vector(f1, VarianceComponents<double>{1.0, 1.0}, target);
  REQUIRE(b.size() == 1);
  CHECK(b(0) == doctest::Approx(0.5));

  // sigma_gamma_sq = 0: b = Ubar
  auto b0 = b_vector(f1, VarianceComponents<double>{0.0, 1.0}, target);
  CHECK(b0(0) == doctest::Approx(1.0));

  // w = 0: b = Ubar
  auto zero_w = target;
  zero_w.w.setZero();
  auto bz = b_vector(f1, VarianceComponents<double>{1.0, 1.0}, zero_w);
  CHECK(bz(0) == doctest::Approx(1.0));
}

TEST_CASE("mse_known on the fixture") {
  auto f1 = fixture_f1();
  auto known = mse_known(f1, VarianceComponents<double>{1.0, 1.0}, f1_target());
  CHECK(known.fixed_part == doctest::Approx(1.0 / 6.0));
  CHECK(known.gamma_part == doctest::Approx(0.5));
  CHECK(known.total() == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("mse_known special cases and nonnegativity") {
  Rng rng(103);
  auto design = random_design(rng, 8, 3, 2);
  auto targets = targets_from_sample_means(design);

  // sigma_gamma_sq = 0: GLS variance only
  MseContext<double> ctx0(design, {0.0, 1.3});
  for (const auto& target : targets) {
    auto known = mse_known(ctx0, target);
    CHECK(known.gamma_part == 0.0);
    Eigen::MatrixXd suu = design.u.transpose() * design.u / 1.3;
    Eigen::VectorXd ubar = target.ubar();
    CHECK(known.fixed_part ==
          doctest::Approx(ubar.dot(suu.ldlt().solve(ubar))).epsilon(1e-8));
  }

  MseContext<double> ctx(design, {0.9, 1.3});
  for (const auto& target : targets) {
    auto known = mse_known(ctx, target);
    CHECK(known.fixed_part >= 0.0);
    CHECK(known.gamma_part >= 0.0);
  }
}

TEST_CASE("mse_known is invariant to area order and knot relabeling") {
  Rng rng(107);
  auto design = random_design(rng, 8, 3, 3);
  VarianceComponents<double> delta{0.8, 1.1};
  auto targets = targets_from_sample_means(design);
  auto baseline = mse_known(design, delta, targets[2]);

  // reverse the rows (area order)
  auto reversed = design;
  reversed.y = design.y.reverse();
  reversed.x = design.x.colwise().reverse();
  reversed.z = design.z.colwise().reverse();
  reversed.w = design.w.colwise().reverse();
  reversed.u = design.u.colwise().reverse();
  auto rev = mse_known(reversed, delta, targets[2]);
  CHECK(rev.fixed_part == doctest::Approx(baseline.fixed_part).epsilon(1e-10));
  CHECK(rev.gamma_part == doctest::Approx(baseline.gamma_part).epsilon(1e-10));

  // permute the spline columns together with the target entries
  auto permuted = design;
  std::vector<int> perm{2, 0, 1};
  for (int j = 0; j < 3; ++j)
    permuted.w.col(j) = design.w.col(perm[static_cast<std::size_t>(j)]);
  auto permuted_target = targets[2];
  for (int j = 0; j < 3; ++j)
    permuted_target.w(j) = targets[2].w(perm[static_cast<std::size_t>(j)]);
  auto per = mse_known(permuted, delta, permuted_target);
  CHECK(per.fixed_part == doctest::Approx(baseline.fixed_part).epsilon(1e-10));
  CHECK(per.gamma_part == doctest::Approx(baseline.gamma_part).epsilon(1e-10));
}

TEST_CASE("s_rows match finite differences of the shrinkage weights") {
  Rng rng(109);
  auto design = random_design(rng, 7, 3, 2);
  auto targets = targets_from_sample_means(design);
  VarianceComponents<double> delta{0.8, 1.4};

  auto weight_row = [&](const VarianceComponents<double>& d, const AreaTarget<double>& t) {
    CovarianceV<double> cov(design.w, d);
    return Eigen::VectorXd(d.sigma_gamma_sq * cov.solve(Eigen::VectorXd(design.w * t.w)));
  };

  for (const auto& target : {targets[0], targets[4]}) {
    auto rows = s_rows(design, delta, target);
    for (int component = 0; component < 2; ++component) {
      const double h = 1e-6;
      auto lo = delta;
      auto hi = delta;
      (component == 0 ? lo.sigma_gamma_sq : lo.sigma_sq) -= h;
      (component == 0 ? hi.sigma_gamma_sq : hi.sigma_sq) += h;
      Eigen::VectorXd fd = (weight_row(hi, target) - weight_row(lo, target)) / (2 * h);
      CHECK((rows.row(component).transpose() - fd).norm() <= 1e-5 * (1.0 + fd.norm()));
    }
  }
}

TEST_CASE("s_rows vanishing cases") {
  Rng rng(113);
  auto design = random_design(rng, 7, 3, 2);
  auto targets = targets_from_sample_means(design);

  auto zero_target = targets[0];
  zero_target.w.setZero();
  CHECK(s_rows(design, VarianceComponents<double>{0.7, 1.0}, zero_target).isZero(0.0));

  // sigma_gamma_sq = 0: S2 = 0 and S1 = w W' V^-1
  auto rows = s_rows(design, VarianceComponents<double>{0.0, 1.3}, targets[1]);
  CHECK(rows.row(1).isZero(0.0));
  Eigen::VectorXd expected = design.w * targets[1].w / 1.3;
  CHECK((rows.row(0).transpose() - expected).norm() <= 1e-12 * (1.0 + expected.norm()));
}

namespace {

DesignMatrices<double> spline_signal_design(Rng& rng, int m, int knots) {
  auto data = sae::testing::random_dataset(rng, m, 2, 1);
  auto design = assemble_design(data, SplineConfig{1, knots});
  Eigen::VectorXd gamma(design.spline_dim());
  for (Index j = 0; j < gamma.size(); ++j) gamma(j) = rng.normal(0.0, 2.0);
  Eigen::VectorXd noise(design.n());
  for (Index i = 0; i < noise.size(); ++i) noise(i) = rng.normal();
  design.y = design.u * Eigen::VectorXd::Ones(design.u.cols()) + design.w * gamma + noise;
  return design;
}

}  // namespace

TEST_CASE("mse_eblup: interior corrections are nonnegative, boundary is flagged") {
  Rng rng(127);
  auto design = spline_signal_design(rng, 12, 3);
  auto varest = estimate_variance_components(design, FitMethod::reml);
  auto fit = blup_fit(design, varest.delta);
  auto targets = targets_from_sample_means(design);
  EblupMse<double> mse(design, varest, fit);

  for (const auto& target : targets) {
    auto prediction = mse.predict(fit, target);
    CHECK(prediction.mse_total == doctest::Approx(prediction.mse_fixed +
                                                  prediction.mse_gamma +
                                                  prediction.mse_correction));
    CHECK(prediction.rmse == doctest::Approx(std::sqrt(prediction.mse_total)));
    CHECK(prediction.sample_mean_auxiliary);
    if (!varest.at_boundary) {
      CHECK(prediction.mse_correction >= 0.0);
      CHECK_FALSE(prediction.no_correction_at_boundary);
    }
  }

  // forced boundary: correction omitted and flagged
  auto boundary = varest;
  boundary.at_boundary = true;
  boundary.delta.sigma_gamma_sq = 0.0;
  auto fit0 = blup_fit(design, boundary.delta);
  EblupMse<double> mse0(design, boundary, fit0);
  auto prediction = mse0.predict(fit0, targets[0]);
  CHECK(prediction.no_correction_at_boundary);
  CHECK(prediction.mse_correction == 0.0);
}

TEST_CASE("known-variance error terms are uncorrelated over draws") {
  Rng rng(131);
  auto data = sae::testing::random_dataset(rng, 8, 2, 1);
  auto design = assemble_design(data, SplineConfig{1, 2});
  VarianceComponents<double> delta{1.2, 0.8};
  auto target = targets_from_sample_means(design)[3];

  MseContext<double> ctx(design, delta);
  Eigen::VectorXd psi_true = Eigen::VectorXd::Ones(design.u.cols());
  RowVectorX<double> b = b_vector(ctx, target);

  const int draws = 4000;
  double sum1 = 0, sum2 = 0, sum12 = 0;
  auto scratch = design;
  for (int d = 0; d < draws; ++d) {
    Eigen::VectorXd gamma(design.spline_dim());
    for (Index j = 0; j < gamma.size(); ++j)
      gamma(j) = rng.normal(0.0, std::sqrt(delta.sigma_gamma_sq));
    Eigen::VectorXd eps(design.n());
    for (Index i = 0; i < eps.size(); ++i)
      eps(i) = rng.normal(0.0, std::sqrt(delta.sigma_sq));
    scratch.y = design.u * psi_true + design.w * gamma + eps;

    auto fit = blup_fit(scratch, delta);
    const double term1 = b.dot(fit.psi - psi_true);
    Eigen::VectorXd resid_true = scratch.y - design.u * psi_true;
    const double term2 =
        delta.sigma_gamma_sq *
            target.w.dot(design.w.transpose() * ctx.covariance().solve(resid_true)) -
        target.w.dot(gamma);
    sum1 += term1;
    sum2 += term2;
    sum12 += term1 * term2;
  }
  const double cov = sum12 / draws - (sum1 / draws) * (sum2 / draws);
  CHECK(std::abs(cov) < 0.05 * mse_known(ctx, target).total());
}

TEST_CASE("mse correction shrinks as the area count grows") {
  auto average_correction = [](int m, std::uint64_t seed) {
    Rng rng(seed);
    double total = 0.0;
    int count = 0;
    for (int rep = 0; rep < 25; ++rep) {
      auto design = spline_signal_design(rng, m, 3);
      try {
        auto varest = estimate_variance_components(design, FitMethod::reml);
        if (varest.at_boundary) continue;
        auto fit = blup_fit(design, varest.delta);
        EblupMse<double> mse(design, varest, fit);
        for (const auto& target : targets_from_sample_means(design)) {
          total += mse.predict(fit, target).mse_correction;
          ++count;
        }
      } catch (const Error&) {
      }
    }
    REQUIRE(count > 0);
    return total / count;
  };

  const double small_m = average_correction(10, 991);
  const double large_m = average_correction(40, 992);
  CHECK(large_m < small_m);  // order m^-1 behavior, checked loosely
}
