#ifndef SAE_DATASET_HPP
#define SAE_DATASET_HPP

#include <string>
#include <unordered_map>
#include <vector>

#include "sae/error.hpp"
#include "sae/types.hpp"

namespace sae {

// Unit-level records in row order: one response per sampled unit, with the
// auxiliary vector x (leading intercept entry of 1) and the area-indicative
// value z, constant within each area.
template <class Scalar>
struct Dataset {
  std::vector<std::string> area_id;  // n labels
  VectorX<Scalar> y;                 // n responses
  MatrixX<Scalar> x;                 // n x k, column 0 is the intercept
  VectorX<Scalar> z;                 // n, repeated within area

  Index n() const { return y.size(); }
  Index k() const { return x.cols(); }
};

// Area grouping in order of first appearance. Construction checks that z is
// constant within each area.
template <class Scalar>
struct AreaGroups {
  std::vector<std::string> ids;  // m distinct labels
  std::vector<int> row_area;     // n -> [0, m)
  std::vector<int> counts;       // m unit counts
  VectorX<Scalar> z;             // m area-level values

  Index m() const { return static_cast<Index>(ids.size()); }

  static AreaGroups build(const Dataset<Scalar>& data) {
    AreaGroups groups;
    groups.row_area.resize(static_cast<std::size_t>(data.n()));
    std::unordered_map<std::string, int> index;
    std::vector<Scalar> area_z;
    for (Index row = 0; row < data.n(); ++row) {
      const std::string& id = data.area_id[static_cast<std::size_t>(row)];
      auto [it, inserted] = index.emplace(id, static_cast<int>(groups.ids.size()));
      if (inserted) {
        groups.ids.push_back(id);
        groups.counts.push_back(0);
        area_z.push_back(data.z(row));
      } else if (data.z(row) != area_z[static_cast<std::size_t>(it->second)]) {
        fail_input("inconsistent-area-variable",
                   "area '" + id + "' carries more than one z value");
      }
      groups.row_area[static_cast<std::size_t>(row)] = it->second;
      ++groups.counts[static_cast<std::size_t>(it->second)];
    }
    groups.z = Eigen::Map<const VectorX<Scalar>>(area_z.data(),
                                                 static_cast<Index>(area_z.size()));
    return groups;
  }
};

template <class Scalar>
void validate_dataset(const Dataset<Scalar>& data) {
  if (data.n() == 0) fail_input("no-records", "dataset has no rows");
  if (data.x.rows() != data.n() || data.z.size() != data.n() ||
      static_cast<Index>(data.area_id.size()) != data.n())
    fail_input("invalid-config", "dataset fields have inconsistent lengths");
  if (data.k() < 1) fail_input("invalid-config", "x must have at least the intercept column");
  for (Index row = 0; row < data.n(); ++row) {
    if (data.x(row, 0) != Scalar(1))
      fail_input("invalid-config", "x must carry a leading intercept column of ones");
  }
}

}  // namespace sae

#endif
