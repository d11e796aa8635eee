#ifndef SAE_TESTS_HELPERS_HPP
#define SAE_TESTS_HELPERS_HPP

#include <string>
#include <vector>

#include "sae/design.hpp"
#include "sae/lmm.hpp"
#include "sae/rng.hpp"

namespace sae::testing {

// Hand-checkable two-observation fixture: U a column of ones, W = (1, 0)',
// Y = (3, 0), assembled directly rather than through assemble_design.
inline DesignMatrices<double> fixture_f1() {
  DesignMatrices<double> design;
  design.y.resize(2);
  design.y << 3.0, 0.0;
  design.x = Eigen::MatrixXd::Ones(2, 1);
  design.z.resize(2, 0);
  design.w.resize(2, 1);
  design.w << 1.0, 0.0;
  design.u = design.x;
  design.area_index = {0, 1};
  design.area_ids = {"a", "b"};
  design.area_counts = {1, 1};
  design.area_z.resize(2);
  design.area_z << 0.0, 1.0;
  design.config.degree = 1;
  design.requested_knot_count = 1;
  design.knots.knots.resize(1);
  design.knots.knots << 0.5;
  return design;
}

// Random unit-level data with distinct area z values and a spline-shaped
// signal, suitable for identity and oracle checks.
inline Dataset<double> random_dataset(Rng& rng, int m, int max_ni, int covariates = 1) {
  Dataset<double> data;
  std::vector<double> y, z;
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < m; ++i) {
    const double zi = rng.uniform(0.0, 2.0) + 2.0 * i;  // distinct by construction
    const int ni = 1 + static_cast<int>(rng.uniform() * max_ni);
    const double vi = std::sin(0.3 * zi) + 0.2 * zi;
    for (int j = 0; j < ni; ++j) {
      std::vector<double> x(static_cast<std::size_t>(covariates));
      double mean = 1.0 + 0.1 * zi + vi;
      for (int c = 0; c < covariates; ++c) {
        x[static_cast<std::size_t>(c)] = rng.uniform(-1.0, 1.0);
        mean += 0.5 * x[static_cast<std::size_t>(c)];
      }
      data.area_id.push_back("area_" + std::to_string(i + 1));
      xs.push_back(std::move(x));
      y.push_back(mean + rng.normal(0.0, 0.5));
      z.push_back(zi);
    }
  }
  const Index n = static_cast<Index>(y.size());
  data.y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  data.z = Eigen::Map<const Eigen::VectorXd>(z.data(), n);
  data.x.resize(n, covariates + 1);
  data.x.col(0).setOnes();
  for (Index r = 0; r < n; ++r)
    for (int c = 0; c < covariates; ++c)
      data.x(r, c + 1) = xs[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return data;
}

inline DesignMatrices<double> random_design(Rng& rng, int m, int max_ni,
                                            int knot_count, int covariates = 1,
                                            int degree = 1) {
  SplineConfig config{degree, knot_count};
  return assemble_design(random_dataset(rng, m, max_ni, covariates), config);
}

// Dense independent route for the BLUP: solves the penalized least-squares
// normal equations
//   [U'U      U'W    ] [psi  ]   [U'Y]
//   [W'U  W'W + lam I ] [gamma] = [W'Y]
// in one shot.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> penalized_ls(
    const DesignMatrices<double>& design, double lambda) {
  const Index q = design.u.cols();
  const Index K = design.w.cols();
  Eigen::MatrixXd normal(q + K, q + K);
  normal.topLeftCorner(q, q) = design.u.transpose() * design.u;
  normal.topRightCorner(q, K) = design.u.transpose() * design.w;
  normal.bottomLeftCorner(K, q) = design.w.transpose() * design.u;
  normal.bottomRightCorner(K, K) = design.w.transpose() * design.w +
                                   lambda * Eigen::MatrixXd::Identity(K, K);
  Eigen::VectorXd rhs(q + K);
  rhs.head(q) = design.u.transpose() * design.y;
  rhs.tail(K) = design.w.transpose() * design.y;
  Eigen::VectorXd solution = normal.ldlt().solve(rhs);
  return {solution.head(q), solution.tail(K)};
}

}  // namespace sae::testing

#endif
