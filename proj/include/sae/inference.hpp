#ifndef SAE_INFERENCE_HPP
#define SAE_INFERENCE_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "sae/dataset.hpp"
#include "sae/design.hpp"
#include "sae/distributions.hpp"
#include "sae/error.hpp"
#include "sae/lmm.hpp"
#include "sae/types.hpp"
#include "sae/varcomp.hpp"

namespace sae {

enum class NullDistribution { chi_squared, mixture_half_chi_squared };

template <class Scalar>
struct TestResult {
  Scalar statistic = Scalar(0);
  NullDistribution null_dist = NullDistribution::chi_squared;
  int df = 1;
  Scalar p_value = Scalar(1);
  bool reject = false;
  Scalar alpha = Scalar(0.05);
  VarianceComponents<Scalar> delta_used;
};

// p-value under the equal mixture of a point mass at zero and chi^2_1:
// 1 at t = 0 (the point mass), else P(chi^2_1 >= t) / 2.
template <class Scalar>
Scalar mixture_pvalue(Scalar t) {
  if (t < Scalar(0)) fail_input("invalid-statistic", "mixture statistic must be >= 0");
  if (t == Scalar(0)) return Scalar(1);
  return Scalar(0.5) * chi_squared_sf(t, Scalar(1));
}

// Wald-type statistic Y'MZ (Z'MZ)^-1 Z'MY for the hypothesis beta = 0, with M
// the projection orthogonal to X in the V metric. Chi-squared with p degrees
// of freedom under the null.
template <class Scalar>
TestResult<Scalar> test_beta(const DesignMatrices<Scalar>& design,
                             const VarianceComponents<Scalar>& delta,
                             Scalar alpha = Scalar(0.05)) {
  CovarianceV<Scalar> cov(design.w, delta);
  MatrixX<Scalar> vinv_x = cov.solve(design.x);
  detail::SpdSolver<Scalar> sxx;
  sxx.compute(MatrixX<Scalar>(design.x.transpose() * vinv_x), "collinear-fixed-effects");

  MatrixX<Scalar> vinv_z = cov.solve(design.z);
  MatrixX<Scalar> mz =
      vinv_z - vinv_x * sxx.solve(MatrixX<Scalar>(design.x.transpose() * vinv_z));
  VectorX<Scalar> zmy = mz.transpose() * design.y;

  detail::SpdSolver<Scalar> zmz;
  MatrixX<Scalar> zmz_mat = design.z.transpose() * mz;
  const Scalar z_scale =
      (design.z.transpose() * vinv_z).diagonal().cwiseAbs().maxCoeff();
  if (!(zmz_mat.diagonal().minCoeff() > Scalar(1e-10) * z_scale) ||
      !zmz.try_compute(zmz_mat))
    fail_input("z-collinear-with-x", "Z^T M Z is singular");

  TestResult<Scalar> result;
  result.statistic = std::max(Scalar(0), zmy.dot(zmz.solve(zmy)));
  result.null_dist = NullDistribution::chi_squared;
  result.df = static_cast<int>(design.p());
  result.p_value = chi_squared_sf(result.statistic, Scalar(result.df));
  result.alpha = alpha;
  result.reject = result.p_value < alpha;
  result.delta_used = delta;
  return result;
}

template <class Scalar>
TestResult<Scalar> test_beta(const DesignMatrices<Scalar>& design,
                             const VarCompEstimate<Scalar>& varest,
                             Scalar alpha = Scalar(0.05)) {
  return test_beta(design, varest.delta, alpha);
}

// One-sided likelihood ratio test of sigma_gamma_sq = 0: twice the gap in the
// profiled ML log-likelihood between the full model and the null, referred to
// the mixture null. Zero exactly when the unconstrained estimate sits on the
// boundary.
template <class Scalar>
TestResult<Scalar> lrt_area_effect(const DesignMatrices<Scalar>& design,
                                   Scalar alpha = Scalar(0.05),
                                   const VarCompOptions& options = {}) {
  auto xp = ModelCrossProducts<Scalar>::from(design);
  VarCompEstimate<Scalar> full = estimate_variance_components(xp, FitMethod::ml, options);

  TestResult<Scalar> result;
  result.null_dist = NullDistribution::mixture_half_chi_squared;
  result.df = 1;
  result.alpha = alpha;
  result.delta_used = full.delta;

  if (full.at_boundary) {
    result.statistic = Scalar(0);
  } else {
    const Scalar null_sigma_sq = xp.rss_ols / Scalar(xp.n);
    const Scalar null_ll =
        profile_loglik(xp, VarianceComponents<Scalar>{Scalar(0), null_sigma_sq});
    result.statistic = std::max(Scalar(0), Scalar(2) * (full.loglik - null_ll));
  }
  result.p_value = mixture_pvalue(result.statistic);
  result.reject = result.p_value < alpha;
  return result;
}

template <class Scalar>
struct AreaDiagnostic {
  Scalar beta1_within = Scalar(0);  // pooled within-area slope
  VectorX<Scalar> vtilde;           // area mean residuals ybar_i - xbar_i * beta1
  Scalar corr_with_z = Scalar(0);
};

// Exploratory check that the area-level residuals from a pooled within-area
// regression depend on the area-indicative variable. Requires exactly one
// non-intercept covariate.
template <class Scalar>
AreaDiagnostic<Scalar> diagnose_area_effect(const Dataset<Scalar>& data) {
  validate_dataset(data);
  if (data.k() != 2)
    fail_input("invalid-config",
               "diagnostic needs exactly one covariate besides the intercept");
  auto groups = AreaGroups<Scalar>::build(data);
  const Index m = groups.m();

  VectorX<Scalar> xbar = VectorX<Scalar>::Zero(m);
  VectorX<Scalar> ybar = VectorX<Scalar>::Zero(m);
  for (Index row = 0; row < data.n(); ++row) {
    const int area = groups.row_area[static_cast<std::size_t>(row)];
    xbar(area) += data.x(row, 1);
    ybar(area) += data.y(row);
  }
  for (Index i = 0; i < m; ++i) {
    xbar(i) /= Scalar(groups.counts[static_cast<std::size_t>(i)]);
    ybar(i) /= Scalar(groups.counts[static_cast<std::size_t>(i)]);
  }

  Scalar sxx = Scalar(0);
  Scalar sxy = Scalar(0);
  for (Index row = 0; row < data.n(); ++row) {
    const int area = groups.row_area[static_cast<std::size_t>(row)];
    const Scalar dx = data.x(row, 1) - xbar(area);
    sxx += dx * dx;
    sxy += dx * (data.y(row) - ybar(area));
  }
  if (!(sxx > Scalar(0)))
    fail_input("degenerate-within-variation", "no within-area variation in x");

  AreaDiagnostic<Scalar> diag;
  diag.beta1_within = sxy / sxx;
  diag.vtilde = ybar - diag.beta1_within * xbar;

  const VectorX<Scalar>& z = groups.z;
  const Scalar v_mean = diag.vtilde.mean();
  const Scalar z_mean = z.mean();
  VectorX<Scalar> vc = diag.vtilde.array() - v_mean;
  VectorX<Scalar> zc = z.array() - z_mean;
  const Scalar v_ss = vc.squaredNorm();
  const Scalar z_ss = zc.squaredNorm();
  if (!(v_ss > Scalar(0)) || !(z_ss > Scalar(0)))
    fail_numeric("zero-variance-diagnostic",
                 "correlation with z undefined: a diagnostic series is constant");
  diag.corr_with_z = vc.dot(zc) / std::sqrt(v_ss * z_ss);
  return diag;
}

}  // namespace sae

#endif
