#ifndef SAE_SAE_HPP
#define SAE_SAE_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sae/design.hpp"
#include "sae/error.hpp"
#include "sae/lmm.hpp"
#include "sae/types.hpp"
#include "sae/varcomp.hpp"

namespace sae {

// Prediction target for one area: population means of the auxiliaries (leading
// intercept entry), the area-indicative value, and its derived polynomial and
// spline rows. The spline row is always recomputed from the design's knots.
template <class Scalar>
struct AreaTarget {
  std::string area_id;
  VectorX<Scalar> xbar;   // k entries, leading 1
  Scalar z = Scalar(0);
  VectorX<Scalar> zpoly;  // z, z^2, ..., z^p
  VectorX<Scalar> w;      // spline_row(z)
  bool extrapolation = false;          // z outside the fitted z range
  bool sample_mean_auxiliary = false;  // xbar fell back to sample means

  VectorX<Scalar> ubar() const {
    VectorX<Scalar> row(xbar.size() + zpoly.size());
    row << xbar, zpoly;
    return row;
  }
};

template <class Scalar>
AreaTarget<Scalar> make_area_target(const DesignMatrices<Scalar>& design,
                                    std::string area_id, VectorX<Scalar> xbar,
                                    Scalar z) {
  if (xbar.size() != design.k())
    fail_input("target-fit-mismatch",
               "target for area '" + area_id + "' has " + std::to_string(xbar.size()) +
                   " auxiliary entries, design has " + std::to_string(design.k()));
  AreaTarget<Scalar> target;
  target.area_id = std::move(area_id);
  target.xbar = std::move(xbar);
  target.z = z;
  target.zpoly.resize(design.p());
  Scalar power = z;
  for (Index d = 0; d < design.p(); ++d) {
    target.zpoly(d) = power;
    power *= z;
  }
  target.w = spline_row(z, design.knots, design.config.degree);
  target.extrapolation = z < design.area_z.minCoeff() || z > design.area_z.maxCoeff();
  return target;
}

// One target per sampled area, auxiliaries set to within-area sample means.
template <class Scalar>
std::vector<AreaTarget<Scalar>> targets_from_sample_means(
    const DesignMatrices<Scalar>& design) {
  const Index m = design.m();
  MatrixX<Scalar> sums = MatrixX<Scalar>::Zero(m, design.k());
  for (Index row = 0; row < design.n(); ++row)
    sums.row(design.area_index[static_cast<std::size_t>(row)]) += design.x.row(row);
  std::vector<AreaTarget<Scalar>> targets;
  targets.reserve(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    VectorX<Scalar> xbar = sums.row(i).transpose() / Scalar(design.area_counts[static_cast<std::size_t>(i)]);
    auto target = make_area_target(design, design.area_ids[static_cast<std::size_t>(i)],
                                   std::move(xbar), design.area_z(i));
    target.sample_mean_auxiliary = true;
    targets.push_back(std::move(target));
  }
  return targets;
}

// Point prediction: Xbar' theta + zpoly' beta + w' gamma.
template <class Scalar>
Scalar area_predictor(const BlupFit<Scalar>& fit, const AreaTarget<Scalar>& target) {
  if (target.xbar.size() + target.zpoly.size() != fit.psi.size() ||
      target.w.size() != fit.gamma.size())
    fail_input("target-fit-mismatch", "target dimensions do not match the fit");
  return target.ubar().dot(fit.psi) + target.w.dot(fit.gamma);
}

// Per-fit workspace shared by the per-area MSE computations.
template <class Scalar>
class MseContext {
 public:
  MseContext(const DesignMatrices<Scalar>& design, const VarianceComponents<Scalar>& delta)
      : cov_(design.w, delta), delta_(delta) {
    vinv_w_ = cov_.solve(design.w);
    MatrixX<Scalar> vinv_u = cov_.solve(design.u);
    suu_.compute(MatrixX<Scalar>(design.u.transpose() * vinv_u), "collinear-fixed-effects");
    wt_vinv_u_ = design.w.transpose() * vinv_u;
    wt_vinv_w_ = design.w.transpose() * vinv_w_;
  }

  const CovarianceV<Scalar>& covariance() const { return cov_; }
  const VarianceComponents<Scalar>& delta() const { return delta_; }
  const MatrixX<Scalar>& vinv_w() const { return vinv_w_; }
  const MatrixX<Scalar>& wt_vinv_u() const { return wt_vinv_u_; }
  const MatrixX<Scalar>& wt_vinv_w() const { return wt_vinv_w_; }
  const detail::SpdSolver<Scalar>& suu() const { return suu_; }

 private:
  CovarianceV<Scalar> cov_;
  VarianceComponents<Scalar> delta_;
  MatrixX<Scalar> vinv_w_;     // V^-1 W
  MatrixX<Scalar> wt_vinv_u_;  // W^T V^-1 U
  MatrixX<Scalar> wt_vinv_w_;  // W^T V^-1 W
  detail::SpdSolver<Scalar> suu_;
};

// b_i = Ubar_i - w_i sigma_gamma^2 W^T V^-1 U, the row mapping GLS coefficient
// error into prediction error.
template <class Scalar>
RowVectorX<Scalar> b_vector(const MseContext<Scalar>& ctx, const AreaTarget<Scalar>& target) {
  return target.ubar().transpose() -
         ctx.delta().sigma_gamma_sq * (target.w.transpose() * ctx.wt_vinv_u());
}

template <class Scalar>
RowVectorX<Scalar> b_vector(const DesignMatrices<Scalar>& design,
                            const VarianceComponents<Scalar>& delta,
                            const AreaTarget<Scalar>& target) {
  return b_vector(MseContext<Scalar>(design, delta), target);
}

template <class Scalar>
struct KnownMse {
  Scalar fixed_part;  // b (U'V^-1 U)^-1 b'
  Scalar gamma_part;  // w sg^2 (I - sg^2 W'V^-1 W) w'
  Scalar total() const { return fixed_part + gamma_part; }
};

// Known-variance MSE of the area predictor, split into the GLS part and the
// spline shrinkage part. Both terms are nonnegative.
template <class Scalar>
KnownMse<Scalar> mse_known(const MseContext<Scalar>& ctx, const AreaTarget<Scalar>& target) {
  RowVectorX<Scalar> b = b_vector(ctx, target);
  KnownMse<Scalar> out;
  out.fixed_part = b.dot(ctx.suu().solve(b.transpose()));
  const Scalar sg = ctx.delta().sigma_gamma_sq;
  out.gamma_part =
      sg * (target.w.squaredNorm() - sg * target.w.dot(ctx.wt_vinv_w() * target.w));
  return out;
}

template <class Scalar>
KnownMse<Scalar> mse_known(const DesignMatrices<Scalar>& design,
                           const VarianceComponents<Scalar>& delta,
                           const AreaTarget<Scalar>& target) {
  return mse_known(MseContext<Scalar>(design, delta), target);
}

// Derivative rows of the weight w_i D_i = w_i sigma_gamma^2 W^T V^-1 with
// respect to delta, ordered (sigma_gamma^2 row, sigma^2 row):
//   S1 = w_i W^T V^-1 (I - sigma_gamma^2 W W^T V^-1),  S2 = -w_i sigma_gamma^2 W^T V^-1 V^-1.
template <class Scalar>
MatrixX<Scalar> s_rows(const MseContext<Scalar>& ctx, const AreaTarget<Scalar>& target) {
  const Scalar sg = ctx.delta().sigma_gamma_sq;
  VectorX<Scalar> r0 = ctx.vinv_w() * target.w;  // V^-1 W w_i'
  VectorX<Scalar> s1 = r0 - sg * (ctx.vinv_w() * (ctx.covariance().w().transpose() * r0));
  VectorX<Scalar> s2 = -sg * ctx.covariance().solve(r0);
  MatrixX<Scalar> rows(2, r0.size());
  rows.row(0) = s1.transpose();
  rows.row(1) = s2.transpose();
  return rows;
}

template <class Scalar>
MatrixX<Scalar> s_rows(const DesignMatrices<Scalar>& design,
                       const VarianceComponents<Scalar>& delta,
                       const AreaTarget<Scalar>& target) {
  return s_rows(MseContext<Scalar>(design, delta), target);
}

template <class Scalar>
struct AreaPrediction {
  std::string area_id;
  Scalar estimate = Scalar(0);
  Scalar mse_fixed = Scalar(0);
  Scalar mse_gamma = Scalar(0);
  Scalar mse_correction = Scalar(0);
  Scalar mse_total = Scalar(0);
  Scalar rmse = Scalar(0);
  bool no_correction_at_boundary = false;
  bool correction_clamped = false;
  bool extrapolation = false;
  bool sample_mean_auxiliary = false;
};

// Per-fit state for the EBLUP MSE estimator: the known-variance context at the
// estimated delta plus the inverse Fisher information for the correction term.
template <class Scalar>
class EblupMse {
 public:
  EblupMse(const DesignMatrices<Scalar>& design, const VarCompEstimate<Scalar>& varest,
           const BlupFit<Scalar>& fit)
      : ctx_(design, varest.delta) {
    vinv_resid_ = ctx_.covariance().solve(fit.residual);
    wt_vinv_resid_ = ctx_.covariance().w().transpose() * vinv_resid_;
    boundary_ = varest.at_boundary;
    if (!boundary_) {
      fisher_ok_ = fisher_.try_compute(varest.fisher);
    }
  }

  const MseContext<Scalar>& context() const { return ctx_; }

  AreaPrediction<Scalar> predict(const BlupFit<Scalar>& fit,
                                 const AreaTarget<Scalar>& target) const {
    AreaPrediction<Scalar> out;
    out.area_id = target.area_id;
    out.extrapolation = target.extrapolation;
    out.sample_mean_auxiliary = target.sample_mean_auxiliary;
    out.estimate = area_predictor(fit, target);

    KnownMse<Scalar> known = mse_known(ctx_, target);
    out.mse_fixed = known.fixed_part;
    out.mse_gamma = known.gamma_part;

    if (boundary_ || !fisher_ok_) {
      out.no_correction_at_boundary = true;
      out.mse_correction = Scalar(0);
    } else {
      // 2 (Y - U psi)' S' I^-1 S (Y - U psi), via the 2-vector t = S resid
      const Scalar sg = ctx_.delta().sigma_gamma_sq;
      VectorX<Scalar> r0 = ctx_.vinv_w() * target.w;
      Vector2<Scalar> t;
      t(0) = r0.dot(fit.residual) - sg * (ctx_.covariance().w().transpose() * r0).dot(wt_vinv_resid_);
      t(1) = -sg * r0.dot(vinv_resid_);
      Scalar correction = Scalar(2) * t.dot(fisher_.solve(t));
      if (correction < Scalar(0)) {
        out.correction_clamped = true;
        correction = Scalar(0);
      }
      out.mse_correction = correction;
    }

    out.mse_total = out.mse_fixed + out.mse_gamma + out.mse_correction;
    out.rmse = std::sqrt(out.mse_total);
    return out;
  }

 private:
  MseContext<Scalar> ctx_;
  VectorX<Scalar> vinv_resid_;
  VectorX<Scalar> wt_vinv_resid_;
  bool boundary_ = false;
  bool fisher_ok_ = false;
  detail::SpdSolver<Scalar> fisher_;
};

// EBLUP prediction with the second-order MSE estimate: the known-variance
// terms at the estimated delta plus the plug-in correction, clamped at zero.
template <class Scalar>
AreaPrediction<Scalar> mse_eblup(const DesignMatrices<Scalar>& design,
                                 const VarCompEstimate<Scalar>& varest,
                                 const BlupFit<Scalar>& fit,
                                 const AreaTarget<Scalar>& target) {
  return EblupMse<Scalar>(design, varest, fit).predict(fit, target);
}

}  // namespace sae

#endif
