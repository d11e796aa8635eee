#ifndef SAE_VARCOMP_HPP
#define SAE_VARCOMP_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "sae/design.hpp"
#include "sae/error.hpp"
#include "sae/lmm.hpp"
#include "sae/types.hpp"

namespace sae {

enum class FitMethod { reml, ml };

inline const char* to_string(FitMethod method) {
  return method == FitMethod::reml ? "reml" : "ml";
}

// Expected information is the standard choice for ML. The two alternative
// trace forms are retained for diagnostics only.
enum class MlInfoVariant { expected, q_form, v_form };

template <class Scalar>
struct VarCompEstimate {
  VarianceComponents<Scalar> delta;
  FitMethod method = FitMethod::reml;
  Matrix2<Scalar> fisher = Matrix2<Scalar>::Zero();  // ordered (sigma_gamma_sq, sigma_sq)
  Scalar loglik = Scalar(0);                         // method objective at delta
  bool converged = false;
  int iterations = 0;
  bool at_boundary = false;  // sigma_gamma_sq clamped to 0
};

struct VarCompOptions {
  int max_iterations = 200;
  double score_tol = 1e-6;       // convergence: score norm in delta units
  double loglik_tol = 1e-10;     // convergence: log-likelihood change
  double boundary_ratio = 1e-10; // clamp when sigma_gamma_sq < ratio * sigma_sq
};

// One-time O(n (K+q)^2) reductions of the design; every likelihood, score and
// information evaluation below is K x K algebra on top of these.
template <class Scalar>
struct ModelCrossProducts {
  Index n = 0;
  Index q = 0;           // fixed-effect count k + p
  Index spline_dim = 0;  // K
  MatrixX<Scalar> utu;   // U^T U
  VectorX<Scalar> uty;
  Scalar yty = Scalar(0);
  MatrixX<Scalar> wtw;   // W^T W
  MatrixX<Scalar> wtu;   // W^T U
  VectorX<Scalar> wty;
  Scalar rss_ols = Scalar(0);     // residual sum of squares of OLS on U
  Scalar logdet_utu = Scalar(0);

  static ModelCrossProducts from(const DesignMatrices<Scalar>& design) {
    ModelCrossProducts xp;
    xp.n = design.n();
    xp.q = design.u.cols();
    xp.spline_dim = design.w.cols();
    xp.utu = design.u.transpose() * design.u;
    xp.uty = design.u.transpose() * design.y;
    xp.yty = design.y.squaredNorm();
    xp.wtw = design.w.transpose() * design.w;
    xp.wtu = design.w.transpose() * design.u;
    xp.wty = design.w.transpose() * design.y;

    detail::SpdSolver<Scalar> utu_solver;
    utu_solver.compute(xp.utu, "collinear-fixed-effects");
    xp.rss_ols = xp.yty - xp.uty.dot(utu_solver.solve(xp.uty));
    xp.logdet_utu = utu_solver.logdet();
    return xp;
  }
};

namespace detail {

// All delta-dependent quantities, computed through the reduced system. With
// P = W (lambda I + W^T W)^-1 W^T the powers of V^-1 = (I - P)/sigma^2 expand
// into K x K kernels applied between cached cross products.
template <class Scalar>
class DeltaWorkspace {
 public:
  DeltaWorkspace(const ModelCrossProducts<Scalar>& xp,
                 const VarianceComponents<Scalar>& delta)
      : xp_(&xp), delta_(delta) {
    validate_components(delta);
    null_model_ = delta.sigma_gamma_sq == Scalar(0) || xp.spline_dim == 0;
    const Index K = xp.spline_dim;
    const Scalar inv_s2 = Scalar(1) / delta.sigma_sq;

    if (null_model_) {
      logdet_v_ = Scalar(xp.n) * std::log(delta.sigma_sq);
      kernel1_ = MatrixX<Scalar>::Zero(K, K);
    } else {
      MatrixX<Scalar> cw = xp.wtw;
      cw.diagonal().array() += delta.penalty_ratio();
      SpdSolver<Scalar> cw_solver;
      cw_solver.compute(cw, "invalid-variance");
      kernel1_ = cw_solver.inverse(K);
      logdet_v_ = Scalar(xp.n - K) * std::log(delta.sigma_sq) +
                  Scalar(K) * std::log(delta.sigma_gamma_sq) + cw_solver.logdet();
    }

    suu_mat_ = cross1(xp.utu, xp.wtu, xp.wtu);
    suy_ = cross1(xp.uty, xp.wtu, xp.wty);
    syy_ = inv_s2 * (xp.yty - quad1(xp.wty, xp.wty));
    suu_.compute(suu_mat_, "collinear-fixed-effects");
    logdet_suu_ = suu_.logdet();
    alpha_ = suu_.solve(suy_);
    yqy_ = syy_ - suy_.dot(alpha_);
  }

  Scalar restricted_loglik() const {
    return Scalar(-0.5) * (logdet_v_ + logdet_suu_ + yqy_);
  }

  Scalar profile_loglik() const { return Scalar(-0.5) * (logdet_v_ + yqy_); }

  Scalar loglik(FitMethod method) const {
    return method == FitMethod::reml ? restricted_loglik() : profile_loglik();
  }

  Scalar yqy() const { return yqy_; }
  Scalar logdet_v() const { return logdet_v_; }
  Scalar logdet_suu() const { return logdet_suu_; }

  Vector2<Scalar> score(FitMethod method) {
    prepare_derivatives();
    Vector2<Scalar> s;
    const Scalar yq_b1_qy = wqy_.squaredNorm();  // Y'Q W W'Q Y
    if (method == FitMethod::reml) {
      s(0) = Scalar(0.5) * (yq_b1_qy - wqw_.trace());
      s(1) = Scalar(0.5) * (yq2y_ - trace_q_);
    } else {
      s(0) = Scalar(0.5) * (yq_b1_qy - wv1w_.trace());
      s(1) = Scalar(0.5) * (yq2y_ - trace_v1_);
    }
    return s;
  }

  Matrix2<Scalar> fisher(FitMethod method, MlInfoVariant variant = MlInfoVariant::expected) {
    prepare_derivatives();
    Matrix2<Scalar> reml_info;
    reml_info(0, 0) = Scalar(0.5) * wqw_.squaredNorm();
    reml_info(0, 1) = Scalar(0.5) * wq2w_trace_;
    reml_info(1, 0) = reml_info(0, 1);
    reml_info(1, 1) = Scalar(0.5) * trace_q2_;
    if (method == FitMethod::reml) return reml_info;

    Matrix2<Scalar> ml_expected;
    ml_expected(0, 0) = Scalar(0.5) * wv1w_.squaredNorm();
    ml_expected(0, 1) = Scalar(0.5) * wv2w_.trace();
    ml_expected(1, 0) = ml_expected(0, 1);
    ml_expected(1, 1) = Scalar(0.5) * trace_v2_;
    if (variant == MlInfoVariant::expected) return ml_expected;
    if (variant == MlInfoVariant::q_form)
      return Scalar(2) * reml_info - ml_expected;  // tr(QBiQBj) - tr(V^-1 Bi V^-1 Bj)/2

    // v_form: tr(V Bi V Bj) - tr(Q Bi Q Bj)/2, with V (not V^-1) inside.
    const Scalar sg = delta_.sigma_gamma_sq;
    const Scalar s2 = delta_.sigma_sq;
    const MatrixX<Scalar>& b = xp_->wtw;
    MatrixX<Scalar> b2 = b * b;
    MatrixX<Scalar> wvw = sg * b2 + s2 * b;  // W^T V W
    Matrix2<Scalar> vf;
    vf(0, 0) = wvw.squaredNorm();
    vf(0, 1) = sg * sg * (b2 * b).trace() + Scalar(2) * sg * s2 * b2.trace() +
               s2 * s2 * b.trace();
    vf(1, 0) = vf(0, 1);
    vf(1, 1) = sg * sg * b2.trace() + Scalar(2) * sg * s2 * b.trace() +
               Scalar(xp_->n) * s2 * s2;
    return vf - reml_info;  // reml_info already carries the 1/2 factor
  }

  // GLS coefficients and their precision, used by the estimator's callers.
  const VectorX<Scalar>& gls_coefficients() const { return alpha_; }

 private:
  // kernels for V^-1 = (I - W M1 W^T)/s2, V^-2, V^-3 expansions
  MatrixX<Scalar> kernel2() const {
    return Scalar(2) * kernel1_ - kernel1_ * xp_->wtw * kernel1_;
  }
  MatrixX<Scalar> kernel3() const {
    MatrixX<Scalar> kb = kernel1_ * xp_->wtw;
    return Scalar(3) * kernel1_ - Scalar(3) * kb * kernel1_ + kb * kb * kernel1_;
  }

  // A^T V^-1 B from raw = A^T B and the W-side projections of A and B.
  template <class Raw, class Wa, class Wb>
  auto cross1(const Raw& raw, const Wa& wta, const Wb& wtb) const {
    return ((raw - wta.transpose() * (kernel1_ * wtb).eval()) / delta_.sigma_sq).eval();
  }
  Scalar quad1(const VectorX<Scalar>& wta, const VectorX<Scalar>& wtb) const {
    return wta.dot(kernel1_ * wtb);
  }

  void prepare_derivatives() {
    if (derivatives_ready_) return;
    derivatives_ready_ = true;
    const Scalar s2 = delta_.sigma_sq;
    const Scalar inv_s2 = Scalar(1) / s2;
    const Scalar inv_s4 = inv_s2 * inv_s2;
    const Scalar inv_s6 = inv_s4 * inv_s2;
    const MatrixX<Scalar>& b = xp_->wtw;
    const Index n = xp_->n;

    MatrixX<Scalar> m2 = kernel2();
    MatrixX<Scalar> m3 = kernel3();

    // V^-1 and V^-2 cross products
    wv1w_ = inv_s2 * (b - b * kernel1_ * b);
    wv2w_ = inv_s4 * (b - b * m2 * b);
    MatrixX<Scalar> wv1u = inv_s2 * (xp_->wtu - b * kernel1_ * xp_->wtu);
    VectorX<Scalar> wv1y = inv_s2 * (xp_->wty - b * kernel1_ * xp_->wty);
    MatrixX<Scalar> wv2u = inv_s4 * (xp_->wtu - b * m2 * xp_->wtu);
    VectorX<Scalar> wv2y = inv_s4 * (xp_->wty - b * m2 * xp_->wty);
    MatrixX<Scalar> suu2 = inv_s4 * (xp_->utu - xp_->wtu.transpose() * m2 * xp_->wtu);
    VectorX<Scalar> suy2 = inv_s4 * (xp_->uty - xp_->wtu.transpose() * m2 * xp_->wty);
    Scalar syy2 = inv_s4 * (xp_->yty - xp_->wty.dot(m2 * xp_->wty));
    MatrixX<Scalar> suu3 = inv_s6 * (xp_->utu - xp_->wtu.transpose() * m3 * xp_->wtu);

    trace_v1_ = inv_s2 * (Scalar(n) - (kernel1_ * b).trace());
    trace_v2_ = inv_s4 * (Scalar(n) - (m2 * b).trace());

    // Q-level quantities
    wqy_ = wv1y - wv1u * alpha_;
    wqw_ = wv1w_ - wv1u * suu_.solve(wv1u.transpose()).eval();
    MatrixX<Scalar> suu_inv_suu2 = suu_.solve(suu2);
    trace_q_ = trace_v1_ - suu_inv_suu2.trace();
    trace_q2_ = trace_v2_ - Scalar(2) * suu_.solve(suu3).trace() +
                (suu_inv_suu2 * suu_inv_suu2).trace();
    yq2y_ = syy2 - Scalar(2) * suy2.dot(alpha_) + alpha_.dot(suu2 * alpha_);
    MatrixX<Scalar> wv1u_suuinv = suu_.solve(wv1u.transpose()).transpose();
    wq2w_trace_ = (wv2w_ - wv2u * wv1u_suuinv.transpose() -
                   wv1u_suuinv * wv2u.transpose() +
                   wv1u_suuinv * suu2 * wv1u_suuinv.transpose())
                      .trace();
  }

  const ModelCrossProducts<Scalar>* xp_;
  VarianceComponents<Scalar> delta_;
  bool null_model_ = false;
  MatrixX<Scalar> kernel1_;
  Scalar logdet_v_ = Scalar(0);

  MatrixX<Scalar> suu_mat_;
  SpdSolver<Scalar> suu_;
  Scalar logdet_suu_ = Scalar(0);
  VectorX<Scalar> suy_;
  Scalar syy_ = Scalar(0);
  VectorX<Scalar> alpha_;
  Scalar yqy_ = Scalar(0);

  bool derivatives_ready_ = false;
  MatrixX<Scalar> wv1w_, wv2w_;
  VectorX<Scalar> wqy_;
  MatrixX<Scalar> wqw_;
  Scalar trace_v1_ = 0, trace_v2_ = 0, trace_q_ = 0, trace_q2_ = 0;
  Scalar yq2y_ = 0, wq2w_trace_ = 0;
};

}  // namespace detail

template <class Scalar>
Scalar restricted_loglik(const ModelCrossProducts<Scalar>& xp,
                         const VarianceComponents<Scalar>& delta) {
  return detail::DeltaWorkspace<Scalar>(xp, delta).restricted_loglik();
}

template <class Scalar>
Scalar restricted_loglik(const DesignMatrices<Scalar>& design,
                         const VarianceComponents<Scalar>& delta) {
  return restricted_loglik(ModelCrossProducts<Scalar>::from(design), delta);
}

template <class Scalar>
Scalar profile_loglik(const ModelCrossProducts<Scalar>& xp,
                      const VarianceComponents<Scalar>& delta) {
  return detail::DeltaWorkspace<Scalar>(xp, delta).profile_loglik();
}

template <class Scalar>
Scalar profile_loglik(const DesignMatrices<Scalar>& design,
                      const VarianceComponents<Scalar>& delta) {
  return profile_loglik(ModelCrossProducts<Scalar>::from(design), delta);
}

// Gradient of the restricted log-likelihood in delta = (sigma_gamma_sq, sigma_sq):
// component i is  Y'Q Bi Q Y / 2 - tr(Q Bi) / 2  with B1 = W W^T, B2 = I.
template <class Scalar>
Vector2<Scalar> reml_score(const ModelCrossProducts<Scalar>& xp,
                           const VarianceComponents<Scalar>& delta) {
  return detail::DeltaWorkspace<Scalar>(xp, delta).score(FitMethod::reml);
}

template <class Scalar>
Vector2<Scalar> reml_score(const DesignMatrices<Scalar>& design,
                           const VarianceComponents<Scalar>& delta) {
  return reml_score(ModelCrossProducts<Scalar>::from(design), delta);
}

template <class Scalar>
Vector2<Scalar> ml_score(const ModelCrossProducts<Scalar>& xp,
                         const VarianceComponents<Scalar>& delta) {
  return detail::DeltaWorkspace<Scalar>(xp, delta).score(FitMethod::ml);
}

template <class Scalar>
Vector2<Scalar> ml_score(const DesignMatrices<Scalar>& design,
                         const VarianceComponents<Scalar>& delta) {
  return ml_score(ModelCrossProducts<Scalar>::from(design), delta);
}

template <class Scalar>
Matrix2<Scalar> fisher_info(const ModelCrossProducts<Scalar>& xp,
                            const VarianceComponents<Scalar>& delta, FitMethod method,
                            MlInfoVariant variant = MlInfoVariant::expected) {
  return detail::DeltaWorkspace<Scalar>(xp, delta).fisher(method, variant);
}

template <class Scalar>
Matrix2<Scalar> fisher_info(const DesignMatrices<Scalar>& design,
                            const VarianceComponents<Scalar>& delta, FitMethod method,
                            MlInfoVariant variant = MlInfoVariant::expected) {
  return fisher_info(ModelCrossProducts<Scalar>::from(design), delta, method, variant);
}

template <class Scalar>
class VarCompNoConvergence : public Error {
 public:
  explicit VarCompNoConvergence(VarCompEstimate<Scalar> last)
      : Error(ErrorKind::numerical, "varcomp-no-convergence",
              "no convergence after " + std::to_string(last.iterations) + " iterations"),
        last_(std::move(last)) {}

  const VarCompEstimate<Scalar>& last_iterate() const { return last_; }

 private:
  VarCompEstimate<Scalar> last_;
};

namespace detail {

// Profiled objective over log(lambda): sigma^2 has the closed form
// Y'Q0 Y / (n - q) under REML (or / n under ML) once lambda is fixed.
template <class Scalar>
struct ProfiledPoint {
  Scalar objective;
  Scalar sigma_sq;
};

template <class Scalar>
ProfiledPoint<Scalar> profile_at_lambda(const ModelCrossProducts<Scalar>& xp,
                                        Scalar log_lambda, FitMethod method) {
  const Scalar lambda = std::exp(log_lambda);
  VarianceComponents<Scalar> unit{Scalar(1) / lambda, Scalar(1)};
  DeltaWorkspace<Scalar> ws(xp, unit);
  const Scalar dof = method == FitMethod::reml ? Scalar(xp.n - xp.q) : Scalar(xp.n);
  const Scalar sigma_sq = ws.yqy() / dof;
  Scalar objective = -Scalar(0.5) * (dof * (std::log(sigma_sq) + Scalar(1)) + ws.logdet_v());
  if (method == FitMethod::reml) objective -= Scalar(0.5) * ws.logdet_suu();
  return {objective, sigma_sq};
}

template <class Scalar>
Scalar golden_section_lambda(const ModelCrossProducts<Scalar>& xp, FitMethod method,
                             Scalar lo, Scalar hi) {
  const Scalar inv_phi = Scalar(0.6180339887498949);
  Scalar x1 = hi - inv_phi * (hi - lo);
  Scalar x2 = lo + inv_phi * (hi - lo);
  Scalar f1 = profile_at_lambda(xp, x1, method).objective;
  Scalar f2 = profile_at_lambda(xp, x2, method).objective;
  while (hi - lo > Scalar(1e-9)) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = profile_at_lambda(xp, x2, method).objective;
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = profile_at_lambda(xp, x1, method).objective;
    }
  }
  return (lo + hi) / Scalar(2);
}

}  // namespace detail

// REML or ML estimation of delta by Fisher scoring on (log sigma_gamma_sq,
// log sigma_sq) with step halving, falling back to a golden-section search
// over log(lambda) with sigma^2 profiled out whenever scoring stalls. An
// iterate with sigma_gamma_sq below boundary_ratio * sigma_sq is clamped to
// the sigma_gamma_sq = 0 null model if the null log-likelihood is at least as
// high.
template <class Scalar>
VarCompEstimate<Scalar> estimate_variance_components(
    const ModelCrossProducts<Scalar>& xp, FitMethod method,
    const VarCompOptions& options = {}) {
  const Index n = xp.n;
  const Index q = xp.q;
  if (n <= q + 1) fail_input("invalid-config", "need n > k + p + 1 observations");

  if (!(xp.rss_ols > Scalar(1e-14) * xp.yty) || !(xp.rss_ols > Scalar(0)))
    fail_numeric("degenerate-response",
                 "response is an exact linear fit on [X | Z]; error variance vanishes");

  const Scalar null_sigma_sq =
      xp.rss_ols / (method == FitMethod::reml ? Scalar(n - q) : Scalar(n));
  const VarianceComponents<Scalar> null_delta{Scalar(0), null_sigma_sq};
  detail::DeltaWorkspace<Scalar> null_ws(xp, null_delta);
  const Scalar null_ll = null_ws.loglik(method);

  auto boundary_estimate = [&](int iterations) {
    VarCompEstimate<Scalar> est;
    est.delta = null_delta;
    est.method = method;
    est.fisher = null_ws.fisher(method);
    est.loglik = null_ll;
    est.converged = true;
    est.iterations = iterations;
    est.at_boundary = true;
    return est;
  };

  auto make_estimate = [&](const VarianceComponents<Scalar>& delta,
                           detail::DeltaWorkspace<Scalar>& ws, bool converged,
                           int iterations) {
    VarCompEstimate<Scalar> est;
    est.delta = delta;
    est.method = method;
    est.fisher = ws.fisher(method);
    est.loglik = ws.loglik(method);
    est.converged = converged;
    est.iterations = iterations;
    est.at_boundary = false;
    return est;
  };

  // start at lambda = 1 with the OLS error variance
  Vector2<Scalar> log_delta;
  log_delta << std::log(null_sigma_sq), std::log(null_sigma_sq);

  auto delta_of = [](const Vector2<Scalar>& ld) {
    return VarianceComponents<Scalar>{std::exp(ld(0)), std::exp(ld(1))};
  };

  VarianceComponents<Scalar> delta = delta_of(log_delta);
  detail::DeltaWorkspace<Scalar> ws(xp, delta);
  Scalar ll = ws.loglik(method);
  Scalar ll_prev = -std::numeric_limits<Scalar>::infinity();
  bool fallback_used = false;
  int iterations = 0;
  bool converged = false;
  bool boundary_signal = false;

  const Scalar lambda_lo = std::log(Scalar(1e-12));
  const Scalar lambda_hi = std::log(Scalar(1e12));

  auto accept = [&](const Vector2<Scalar>& cand_log, VarianceComponents<Scalar> cand,
                    detail::DeltaWorkspace<Scalar>&& cand_ws, Scalar cand_ll) {
    log_delta = cand_log;
    delta = cand;
    ws = std::move(cand_ws);
    ll_prev = ll;
    ll = cand_ll;
  };

  while (iterations < options.max_iterations) {
    ++iterations;
    Vector2<Scalar> score = ws.score(method);
    if (score.norm() < Scalar(options.score_tol) &&
        std::abs(ll - ll_prev) < Scalar(options.loglik_tol)) {
      converged = true;
      break;
    }

    // scoring step in log parameters
    Matrix2<Scalar> fisher = ws.fisher(method);
    Eigen::DiagonalMatrix<Scalar, 2> jac(delta.sigma_gamma_sq, delta.sigma_sq);
    Vector2<Scalar> score_log = jac * score;
    Matrix2<Scalar> fisher_log = jac * fisher * jac;
    Vector2<Scalar> step;
    Eigen::LDLT<Matrix2<Scalar>> fact(fisher_log);
    if (fact.info() == Eigen::Success && fisher_log.determinant() > Scalar(0))
      step = fact.solve(score_log);
    else
      step = score_log;
    if (step.dot(score_log) <= Scalar(0)) step = score_log;
    const Scalar max_step = step.template lpNorm<Eigen::Infinity>();
    if (max_step > Scalar(4)) step *= Scalar(4) / max_step;

    bool accepted = false;
    Scalar t = Scalar(1);
    for (int halving = 0; halving < 40 && !accepted; ++halving, t /= Scalar(2)) {
      Vector2<Scalar> cand_log = log_delta + t * step;
      VarianceComponents<Scalar> cand = delta_of(cand_log);
      if (cand.sigma_gamma_sq < Scalar(options.boundary_ratio) * cand.sigma_sq) {
        boundary_signal = true;
        continue;
      }
      detail::DeltaWorkspace<Scalar> cand_ws(xp, cand);
      Scalar cand_ll = cand_ws.loglik(method);
      if (cand_ll > ll) {
        accept(cand_log, cand, std::move(cand_ws), cand_ll);
        accepted = true;
      }
    }

    if (!accepted) {
      // Likelihood changes are at machine precision; take the full scoring
      // step anyway as long as it shrinks the score, which drives the
      // gradient itself to zero.
      Vector2<Scalar> cand_log = log_delta + step;
      VarianceComponents<Scalar> cand = delta_of(cand_log);
      if (cand.sigma_gamma_sq >= Scalar(options.boundary_ratio) * cand.sigma_sq) {
        detail::DeltaWorkspace<Scalar> cand_ws(xp, cand);
        Eigen::DiagonalMatrix<Scalar, 2> cand_jac(cand.sigma_gamma_sq, cand.sigma_sq);
        Vector2<Scalar> cand_score_log = cand_jac * cand_ws.score(method);
        if (cand_score_log.norm() < score_log.norm()) {
          Scalar cand_ll = cand_ws.loglik(method);
          accept(cand_log, cand, std::move(cand_ws), cand_ll);
          accepted = true;
        }
      } else {
        boundary_signal = true;
      }
    }

    if (!accepted) {
      if (!fallback_used) {
        fallback_used = true;
        Scalar log_lambda =
            detail::golden_section_lambda<Scalar>(xp, method, lambda_lo, lambda_hi);
        if (std::exp(-log_lambda) < Scalar(options.boundary_ratio)) {
          boundary_signal = true;
          break;
        }
        auto point = detail::profile_at_lambda(xp, log_lambda, method);
        Vector2<Scalar> cand_log;
        cand_log << std::log(point.sigma_sq) - log_lambda, std::log(point.sigma_sq);
        VarianceComponents<Scalar> cand = delta_of(cand_log);
        detail::DeltaWorkspace<Scalar> cand_ws(xp, cand);
        Scalar cand_ll = cand_ws.loglik(method);
        if (cand_ll > ll) {
          accept(cand_log, cand, std::move(cand_ws), cand_ll);
          continue;
        }
      }
      // stalled at a numerical optimum
      converged = ws.score(method).norm() < Scalar(options.score_tol);
      break;
    }
  }

  // The clamp rule: once iterates dip below the boundary ratio, the null
  // model competes with the best interior iterate on log-likelihood.
  if (null_ll >= ll || (boundary_signal && null_ll >= ll - Scalar(1e-7) * (Scalar(1) + std::abs(null_ll))))
    return boundary_estimate(iterations);

  VarCompEstimate<Scalar> estimate = make_estimate(delta, ws, converged, iterations);
  if (!converged) throw VarCompNoConvergence<Scalar>(std::move(estimate));
  return estimate;
}

template <class Scalar>
VarCompEstimate<Scalar> estimate_variance_components(
    const DesignMatrices<Scalar>& design, FitMethod method,
    const VarCompOptions& options = {}) {
  return estimate_variance_components(ModelCrossProducts<Scalar>::from(design), method,
                                      options);
}

}  // namespace sae

#endif
