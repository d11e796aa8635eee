#ifndef SAE_LMM_HPP
#define SAE_LMM_HPP

#include <cmath>
#include <limits>
#include <utility>

#include "sae/design.hpp"
#include "sae/error.hpp"
#include "sae/types.hpp"

namespace sae {

// delta = (sigma_gamma_sq, sigma_sq), in that order everywhere.
template <class Scalar>
struct VarianceComponents {
  Scalar sigma_gamma_sq = Scalar(0);  // spline random-effect variance, >= 0
  Scalar sigma_sq = Scalar(1);        // unit error variance, > 0

  // Penalty ratio lambda = sigma^2 / sigma_gamma^2, +inf when sigma_gamma^2 = 0.
  Scalar penalty_ratio() const {
    if (sigma_gamma_sq == Scalar(0)) return std::numeric_limits<Scalar>::infinity();
    return sigma_sq / sigma_gamma_sq;
  }
};

template <class Scalar>
void validate_components(const VarianceComponents<Scalar>& delta) {
  if (!(delta.sigma_sq > Scalar(0)) || !(delta.sigma_gamma_sq >= Scalar(0)) ||
      !std::isfinite(delta.sigma_sq) || !std::isfinite(delta.sigma_gamma_sq))
    fail_input("invalid-variance",
               "need sigma_sq > 0 and sigma_gamma_sq >= 0, both finite");
}

namespace detail {

// Solve a symmetric positive definite system with a relative pivot check,
// reporting rank trouble under the caller's error code.
template <class Scalar>
class SpdSolver {
 public:
  SpdSolver() = default;

  bool try_compute(const MatrixX<Scalar>& a) {
    ldlt_.compute(a);
    Scalar max_d = ldlt_.vectorD().cwiseAbs().maxCoeff();
    Scalar min_d = ldlt_.vectorD().minCoeff();
    return ldlt_.info() == Eigen::Success && max_d > Scalar(0) &&
           min_d > Scalar(1e-10) * max_d;
  }

  void compute(const MatrixX<Scalar>& a, const char* code) {
    if (!try_compute(a)) fail_numeric(code, "matrix is singular or not positive definite");
  }

  template <class Rhs>
  auto solve(const Rhs& rhs) const {
    return ldlt_.solve(rhs);
  }

  Scalar logdet() const { return ldlt_.vectorD().array().log().sum(); }

  MatrixX<Scalar> inverse(Index dim) const {
    return ldlt_.solve(MatrixX<Scalar>::Identity(dim, dim));
  }

 private:
  Eigen::LDLT<MatrixX<Scalar>> ldlt_;
};

}  // namespace detail

// Factorized handle on V = sigma_gamma^2 W W^T + sigma^2 I. Solves and the
// log-determinant go through the K x K reduced system
//   V^-1 = sigma^-2 (I - W (lambda I_K + W^T W)^-1 W^T),  lambda = sigma^2/sigma_gamma^2,
// so no n x n matrix is ever formed outside dense() (kept for tests).
template <class Scalar>
class CovarianceV {
 public:
  CovarianceV(MatrixX<Scalar> w, VarianceComponents<Scalar> delta)
      : w_(std::move(w)), delta_(delta) {
    validate_components(delta_);
    diagonal_ = delta_.sigma_gamma_sq == Scalar(0) || w_.cols() == 0;
    if (!diagonal_) {
      gram_ = w_.transpose() * w_;
      MatrixX<Scalar> cw = gram_;
      cw.diagonal().array() += delta_.penalty_ratio();
      cw_.compute(cw, "invalid-variance");
    }
  }

  Index rows() const { return w_.rows(); }
  const MatrixX<Scalar>& w() const { return w_; }
  const VarianceComponents<Scalar>& components() const { return delta_; }

  MatrixX<Scalar> solve(const MatrixX<Scalar>& rhs) const {
    if (diagonal_) return rhs / delta_.sigma_sq;
    MatrixX<Scalar> wt_rhs = w_.transpose() * rhs;
    return (rhs - w_ * cw_.solve(wt_rhs)) / delta_.sigma_sq;
  }

  VectorX<Scalar> solve(const VectorX<Scalar>& rhs) const {
    if (diagonal_) return rhs / delta_.sigma_sq;
    VectorX<Scalar> wt_rhs = w_.transpose() * rhs;
    return (rhs - w_ * cw_.solve(wt_rhs)) / delta_.sigma_sq;
  }

  Scalar logdet() const {
    const Index n = rows();
    if (diagonal_) return Scalar(n) * std::log(delta_.sigma_sq);
    // |V| = sigma^2(n-K) * sigma_gamma^2K * |lambda I + W^T W|
    const Index K = w_.cols();
    return Scalar(n - K) * std::log(delta_.sigma_sq) +
           Scalar(K) * std::log(delta_.sigma_gamma_sq) + cw_.logdet();
  }

  MatrixX<Scalar> dense() const {
    MatrixX<Scalar> v = delta_.sigma_gamma_sq * (w_ * w_.transpose());
    v.diagonal().array() += delta_.sigma_sq;
    return v;
  }

  Scalar trace_inverse() const {
    const Scalar inv_s2 = Scalar(1) / delta_.sigma_sq;
    if (diagonal_) return Scalar(rows()) * inv_s2;
    return inv_s2 * (Scalar(rows()) - cw_.solve(gram_).trace());
  }

  Scalar trace_inverse_squared() const {
    const Scalar inv_s4 = Scalar(1) / (delta_.sigma_sq * delta_.sigma_sq);
    if (diagonal_) return Scalar(rows()) * inv_s4;
    MatrixX<Scalar> cg = cw_.solve(gram_);
    return inv_s4 * (Scalar(rows()) - Scalar(2) * cg.trace() + (cg * cg).trace());
  }

 private:
  MatrixX<Scalar> w_;
  VarianceComponents<Scalar> delta_;
  bool diagonal_ = true;
  MatrixX<Scalar> gram_;  // W^T W
  detail::SpdSolver<Scalar> cw_;
};

template <class Scalar>
CovarianceV<Scalar> covariance_v(const MatrixX<Scalar>& w,
                                 const VarianceComponents<Scalar>& delta) {
  return CovarianceV<Scalar>(w, delta);
}

// P = V^-1 - V^-1 C (C^T V^-1 C)^-1 C^T V^-1 for a full-column-rank block C.
// Symmetric, annihilates C, and satisfies P V P = P.
template <class Scalar>
class Projection {
 public:
  Projection(CovarianceV<Scalar> cov, MatrixX<Scalar> c)
      : cov_(std::move(cov)), c_(std::move(c)) {
    if (!detail::full_column_rank(c_))
      fail_input("collinear-fixed-effects", "projection block is rank deficient");
    vinv_c_ = cov_.solve(c_);
    gram_.compute(MatrixX<Scalar>(c_.transpose() * vinv_c_), "collinear-fixed-effects");
  }

  VectorX<Scalar> apply(const VectorX<Scalar>& r) const {
    VectorX<Scalar> vr = cov_.solve(r);
    return vr - vinv_c_ * gram_.solve(VectorX<Scalar>(c_.transpose() * vr));
  }

  MatrixX<Scalar> apply(const MatrixX<Scalar>& r) const {
    MatrixX<Scalar> vr = cov_.solve(r);
    return vr - vinv_c_ * gram_.solve(MatrixX<Scalar>(c_.transpose() * vr));
  }

  MatrixX<Scalar> dense() const {
    MatrixX<Scalar> identity = MatrixX<Scalar>::Identity(cov_.rows(), cov_.rows());
    return apply(identity);
  }

  Scalar logdet_gram() const { return gram_.logdet(); }
  const CovarianceV<Scalar>& covariance() const { return cov_; }

 private:
  CovarianceV<Scalar> cov_;
  MatrixX<Scalar> c_;
  MatrixX<Scalar> vinv_c_;
  detail::SpdSolver<Scalar> gram_;
};

template <class Scalar>
Projection<Scalar> projection_q(const DesignMatrices<Scalar>& design,
                                const VarianceComponents<Scalar>& delta) {
  return Projection<Scalar>(CovarianceV<Scalar>(design.w, delta), design.u);
}

template <class Scalar>
Projection<Scalar> projection_m(const DesignMatrices<Scalar>& design,
                                const VarianceComponents<Scalar>& delta) {
  return Projection<Scalar>(CovarianceV<Scalar>(design.w, delta), design.x);
}

// BLUP solution at fixed variance components: GLS fixed effects
// psi = (U^T V^-1 U)^-1 U^T V^-1 Y and shrunken spline coefficients
// gamma = sigma_gamma^2 W^T V^-1 (Y - U psi).
template <class Scalar>
struct BlupFit {
  VectorX<Scalar> psi;       // (theta^T, beta^T)^T, k + p entries
  VectorX<Scalar> gamma;     // K spline coefficients
  MatrixX<Scalar> psi_cov;   // (U^T V^-1 U)^-1
  VarianceComponents<Scalar> delta;
  VectorX<Scalar> residual;  // Y - U psi
  Index k = 0;               // split point between theta and beta

  VectorX<Scalar> theta() const { return psi.head(k); }
  VectorX<Scalar> beta() const { return psi.tail(psi.size() - k); }
};

template <class Scalar>
BlupFit<Scalar> blup_fit(const DesignMatrices<Scalar>& design,
                         const VarianceComponents<Scalar>& delta) {
  CovarianceV<Scalar> cov(design.w, delta);
  MatrixX<Scalar> vinv_u = cov.solve(design.u);
  detail::SpdSolver<Scalar> suu;
  suu.compute(MatrixX<Scalar>(design.u.transpose() * vinv_u), "collinear-fixed-effects");

  BlupFit<Scalar> fit;
  fit.delta = delta;
  fit.k = design.k();
  fit.psi = suu.solve(VectorX<Scalar>(vinv_u.transpose() * design.y));
  fit.residual = design.y - design.u * fit.psi;
  fit.gamma = delta.sigma_gamma_sq * (design.w.transpose() * cov.solve(fit.residual));
  fit.psi_cov = suu.inverse(design.u.cols());
  return fit;
}

// Standalone GLS components: beta = (Z^T M Z)^-1 Z^T M Y with M the projection
// orthogonal to X, and theta the GLS coefficients on X of Y - Z beta. Matches
// the psi sub-blocks of blup_fit.
template <class Scalar>
std::pair<VectorX<Scalar>, VectorX<Scalar>> gls_components(
    const DesignMatrices<Scalar>& design, const VarianceComponents<Scalar>& delta) {
  CovarianceV<Scalar> cov(design.w, delta);
  MatrixX<Scalar> vinv_x = cov.solve(design.x);
  detail::SpdSolver<Scalar> sxx;
  sxx.compute(MatrixX<Scalar>(design.x.transpose() * vinv_x), "collinear-fixed-effects");

  // M Z and M Y without forming M.
  MatrixX<Scalar> vinv_z = cov.solve(design.z);
  MatrixX<Scalar> mz = vinv_z - vinv_x * sxx.solve(MatrixX<Scalar>(design.x.transpose() * vinv_z));
  VectorX<Scalar> vinv_y = cov.solve(design.y);
  VectorX<Scalar> my = vinv_y - vinv_x * sxx.solve(VectorX<Scalar>(design.x.transpose() * vinv_y));

  detail::SpdSolver<Scalar> zmz;
  MatrixX<Scalar> zmz_mat = design.z.transpose() * mz;
  MatrixX<Scalar> zvz_mat = design.z.transpose() * vinv_z;
  const Scalar z_scale = zvz_mat.diagonal().cwiseAbs().maxCoeff();
  if (!(zmz_mat.diagonal().minCoeff() > Scalar(1e-10) * z_scale) ||
      !zmz.try_compute(zmz_mat))
    fail_input("z-collinear-with-x", "Z^T M Z is singular");
  VectorX<Scalar> beta = zmz.solve(VectorX<Scalar>(design.z.transpose() * my));
  VectorX<Scalar> adjusted = design.y - design.z * beta;
  VectorX<Scalar> theta =
      sxx.solve(VectorX<Scalar>(design.x.transpose() * cov.solve(adjusted)));
  return {theta, beta};
}

}  // namespace sae

#endif
