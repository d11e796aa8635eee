#ifndef SAE_IO_HPP
#define SAE_IO_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "sae/dataset.hpp"
#include "sae/sae.hpp"
#include "sae/types.hpp"

namespace sae {

// RFC-4180 CSV: quoted fields may contain commas, quotes and newlines.
// Returns false at end of input. Mixed CRLF/LF line endings are accepted.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields);

// Quotes a field only when needed.
std::string csv_field(const std::string& value);

// Unit-level data, schema `area_id,y,x1,...,xk,z` (header required). The
// intercept column of x is synthesized, so the returned dataset has
// k = #file covariates + 1.
Dataset<double> read_unit_csv(std::istream& in, const std::string& source_name);
Dataset<double> read_unit_csv_file(const std::string& path);

struct TargetRow {
  std::string area_id;
  Eigen::VectorXd xbar;  // file covariates only, no intercept
};

// Prediction targets, schema `area_id,xbar1,...,xbark`.
std::vector<TargetRow> read_targets_csv(std::istream& in, const std::string& source_name);
std::vector<TargetRow> read_targets_csv_file(const std::string& path);

void write_predictions_csv(std::ostream& out,
                           const std::vector<AreaPrediction<double>>& predictions);

// FNV-1a 64-bit content hash, hex-encoded; reports embed it so a run can be
// tied to its exact input bytes.
std::string fnv1a64_hex(const std::string& bytes);
std::string hash_file(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace sae

#endif
