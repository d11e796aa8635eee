#ifndef SAE_DESIGN_HPP
#define SAE_DESIGN_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sae/dataset.hpp"
#include "sae/error.hpp"
#include "sae/types.hpp"

namespace sae {

// Spline configuration: degree p >= 1 and the number of knots K. knot_count 0
// selects the automatic rule K = min(floor(#unique z / 4), 35), at least 1.
struct SplineConfig {
  int degree = 1;
  int knot_count = 0;

  static constexpr int max_auto_knots = 35;
};

inline int resolve_knot_count(const SplineConfig& config, Index unique_z_count) {
  if (config.degree < 1) fail_input("invalid-config", "spline degree must be >= 1");
  if (config.knot_count < 0) fail_input("invalid-config", "knot count must be positive or 0 for auto");
  if (config.knot_count > 0) return config.knot_count;
  int k = static_cast<int>(unique_z_count / 4);
  k = std::min(k, SplineConfig::max_auto_knots);
  return std::max(k, 1);
}

template <class Scalar>
struct KnotSet {
  VectorX<Scalar> knots;  // strictly increasing

  Index size() const { return knots.size(); }
};

// Knots at the k/(K+1) quantiles (k = 1..K) of the distinct sorted z values,
// with linear interpolation between order statistics. Coincident quantiles
// collapse to a single knot, so the result may hold fewer than K knots.
template <class Scalar>
KnotSet<Scalar> place_knots(const Eigen::Ref<const VectorX<Scalar>>& area_z, int knot_count) {
  if (knot_count <= 0) fail_input("invalid-config", "knot count must be >= 1");

  std::vector<Scalar> unique_z(area_z.data(), area_z.data() + area_z.size());
  std::sort(unique_z.begin(), unique_z.end());
  unique_z.erase(std::unique(unique_z.begin(), unique_z.end()), unique_z.end());
  const Index n_u = static_cast<Index>(unique_z.size());
  if (n_u < knot_count + 1)
    fail_input("insufficient-distinct-areas",
               "need at least K+1 distinct z values, got " + std::to_string(n_u));

  std::vector<Scalar> knots;
  knots.reserve(static_cast<std::size_t>(knot_count));
  for (int j = 1; j <= knot_count; ++j) {
    const Scalar q = Scalar(j) / Scalar(knot_count + 1);
    const Scalar h = Scalar(1) + Scalar(n_u - 1) * q;  // 1-based position
    const Index lo = static_cast<Index>(std::floor(h)) - 1;
    const Index hi = std::min(lo + 1, n_u - 1);
    const Scalar frac = h - std::floor(h);
    const Scalar knot = unique_z[static_cast<std::size_t>(lo)] +
                        frac * (unique_z[static_cast<std::size_t>(hi)] -
                                unique_z[static_cast<std::size_t>(lo)]);
    if (knots.empty() || knot > knots.back()) knots.push_back(knot);
  }

  KnotSet<Scalar> result;
  result.knots = Eigen::Map<const VectorX<Scalar>>(knots.data(),
                                                   static_cast<Index>(knots.size()));
  return result;
}

// (z - knot)_+^p with strict activation: zero at and below the knot.
template <class Scalar>
Scalar truncated_power(Scalar z, Scalar knot, int degree) {
  if (z <= knot) return Scalar(0);
  Scalar base = z - knot;
  Scalar value = base;
  for (int i = 1; i < degree; ++i) value *= base;
  return value;
}

template <class Scalar>
VectorX<Scalar> spline_row(Scalar z, const KnotSet<Scalar>& knots, int degree) {
  VectorX<Scalar> row(knots.size());
  for (Index j = 0; j < knots.size(); ++j)
    row(j) = truncated_power(z, knots.knots(j), degree);
  return row;
}

// Working-model matrices: response Y, fixed part X (n x k) and Z (n x p with
// columns z, z^2, ..., z^p), spline block W (n x K), all with per-area rows
// repeated across the units of an area.
template <class Scalar>
struct DesignMatrices {
  VectorX<Scalar> y;
  MatrixX<Scalar> x;
  MatrixX<Scalar> z;
  MatrixX<Scalar> w;
  MatrixX<Scalar> u;  // [X | Z], full column rank

  std::vector<int> area_index;        // n -> [0, m)
  std::vector<std::string> area_ids;  // m labels
  std::vector<int> area_counts;       // m
  VectorX<Scalar> area_z;             // m
  KnotSet<Scalar> knots;
  SplineConfig config;
  int requested_knot_count = 0;

  Index n() const { return y.size(); }
  Index m() const { return area_z.size(); }
  Index k() const { return x.cols(); }
  Index p() const { return z.cols(); }
  Index spline_dim() const { return w.cols(); }
  bool knots_collapsed() const { return knots.size() < requested_knot_count; }
};

namespace detail {

template <class Scalar>
bool full_column_rank(const MatrixX<Scalar>& a, Scalar rel_tol = Scalar(1e-10)) {
  if (a.cols() == 0) return false;
  Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(a);
  const auto& r = qr.matrixR();
  const Scalar pivot0 = std::abs(r(0, 0));
  if (pivot0 == Scalar(0)) return false;
  const Index rank_max = std::min(a.rows(), a.cols());
  if (rank_max < a.cols()) return false;
  return std::abs(r(a.cols() - 1, a.cols() - 1)) > rel_tol * pivot0;
}

}  // namespace detail

template <class Scalar>
DesignMatrices<Scalar> assemble_design(const Dataset<Scalar>& data,
                                       const SplineConfig& config) {
  validate_dataset(data);
  auto groups = AreaGroups<Scalar>::build(data);

  std::vector<Scalar> unique_z(groups.z.data(), groups.z.data() + groups.z.size());
  std::sort(unique_z.begin(), unique_z.end());
  unique_z.erase(std::unique(unique_z.begin(), unique_z.end()), unique_z.end());
  const int knot_count = resolve_knot_count(config, static_cast<Index>(unique_z.size()));

  DesignMatrices<Scalar> design;
  design.config = config;
  design.requested_knot_count = knot_count;
  design.knots = place_knots<Scalar>(groups.z, knot_count);
  design.y = data.y;
  design.x = data.x;
  design.area_index = groups.row_area;
  design.area_ids = groups.ids;
  design.area_counts = groups.counts;
  design.area_z = groups.z;

  const Index n = data.n();
  const Index p = config.degree;
  const Index K = design.knots.size();

  // Per-area rows of Z and W, replicated over the area's units.
  MatrixX<Scalar> area_zpoly(groups.m(), p);
  MatrixX<Scalar> area_w(groups.m(), K);
  for (Index i = 0; i < groups.m(); ++i) {
    Scalar zi = groups.z(i);
    Scalar power = zi;
    for (Index d = 0; d < p; ++d) {
      area_zpoly(i, d) = power;
      power *= zi;
    }
    area_w.row(i) = spline_row(zi, design.knots, config.degree).transpose();
  }

  design.z.resize(n, p);
  design.w.resize(n, K);
  for (Index row = 0; row < n; ++row) {
    const int area = groups.row_area[static_cast<std::size_t>(row)];
    design.z.row(row) = area_zpoly.row(area);
    design.w.row(row) = area_w.row(area);
  }

  design.u.resize(n, data.k() + p);
  design.u << design.x, design.z;
  if (!detail::full_column_rank(design.u))
    fail_input("collinear-fixed-effects", "[X | Z] is rank deficient");

  return design;
}

}  // namespace sae

#endif
