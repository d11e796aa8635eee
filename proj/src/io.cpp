#include "sae/io.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "sae/error.hpp"

namespace sae {

bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  int c = in.get();
  if (c == std::istream::traits_type::eof()) return false;

  std::string field;
  bool quoted = false;
  for (;;) {
    if (c == std::istream::traits_type::eof()) {
      fields.push_back(field);
      return true;
    }
    const char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"' && field.empty()) {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(field);
      field.clear();
    } else if (ch == '\n') {
      fields.push_back(field);
      return true;
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get();
      fields.push_back(field);
      return true;
    } else {
      field.push_back(ch);
    }
    c = in.get();
  }
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string quoted = "\"";
  for (char ch : value) {
    if (ch == '"') quoted += "\"\"";
    else quoted.push_back(ch);
  }
  quoted.push_back('"');
  return quoted;
}

namespace {

double parse_number(const std::string& text, const std::string& source, std::size_t line,
                    const std::string& column) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end)
    fail_input("malformed-csv", source + " line " + std::to_string(line) + ": field '" +
                                    column + "' is not a number: '" + text + "'");
  return value;
}

void check_field_count(std::size_t got, std::size_t expected, const std::string& source,
                       std::size_t line) {
  if (got != expected)
    fail_input("malformed-csv", source + " line " + std::to_string(line) + ": expected " +
                                    std::to_string(expected) + " fields, got " +
                                    std::to_string(got));
}

}  // namespace

Dataset<double> read_unit_csv(std::istream& in, const std::string& source_name) {
  std::vector<std::string> header;
  if (!read_csv_record(in, header))
    fail_input("no-records", source_name + ": empty file");
  if (header.size() < 3 || header.front() != "area_id" || header[1] != "y" ||
      header.back() != "z")
    fail_input("malformed-csv",
               source_name + " line 1: header must be area_id,y,x1,...,xk,z");
  const std::size_t k_file = header.size() - 3;
  for (std::size_t j = 0; j < k_file; ++j) {
    if (header[2 + j] != "x" + std::to_string(j + 1))
      fail_input("malformed-csv", source_name + " line 1: expected column 'x" +
                                      std::to_string(j + 1) + "', got '" + header[2 + j] + "'");
  }

  std::vector<std::string> area_id;
  std::vector<double> y, z;
  std::vector<double> x_flat;
  std::vector<std::string> fields;
  std::size_t line = 1;
  while (read_csv_record(in, fields)) {
    ++line;
    if (fields.size() == 1 && fields[0].empty()) continue;  // trailing blank line
    check_field_count(fields.size(), header.size(), source_name, line);
    if (fields[0].empty())
      fail_input("malformed-csv",
                 source_name + " line " + std::to_string(line) + ": empty area_id");
    area_id.push_back(fields[0]);
    y.push_back(parse_number(fields[1], source_name, line, "y"));
    for (std::size_t j = 0; j < k_file; ++j)
      x_flat.push_back(parse_number(fields[2 + j], source_name, line, header[2 + j]));
    z.push_back(parse_number(fields.back(), source_name, line, "z"));
  }
  if (area_id.empty()) fail_input("no-records", source_name + ": no data rows");

  const Index n = static_cast<Index>(area_id.size());
  Dataset<double> data;
  data.area_id = std::move(area_id);
  data.y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  data.z = Eigen::Map<const Eigen::VectorXd>(z.data(), n);
  data.x.resize(n, static_cast<Index>(k_file) + 1);
  data.x.col(0).setOnes();
  for (Index i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k_file; ++j)
      data.x(i, static_cast<Index>(j) + 1) = x_flat[static_cast<std::size_t>(i) * k_file + j];
  return data;
}

Dataset<double> read_unit_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_input("no-records", "cannot open input file: " + path);
  return read_unit_csv(in, path);
}

std::vector<TargetRow> read_targets_csv(std::istream& in, const std::string& source_name) {
  std::vector<std::string> header;
  if (!read_csv_record(in, header))
    fail_input("no-records", source_name + ": empty file");
  if (header.size() < 2 || header.front() != "area_id")
    fail_input("malformed-csv",
               source_name + " line 1: header must be area_id,xbar1,...,xbark");
  const std::size_t k_file = header.size() - 1;
  for (std::size_t j = 0; j < k_file; ++j) {
    if (header[1 + j] != "xbar" + std::to_string(j + 1))
      fail_input("malformed-csv", source_name + " line 1: expected column 'xbar" +
                                      std::to_string(j + 1) + "', got '" + header[1 + j] + "'");
  }

  std::vector<TargetRow> rows;
  std::vector<std::string> fields;
  std::size_t line = 1;
  while (read_csv_record(in, fields)) {
    ++line;
    if (fields.size() == 1 && fields[0].empty()) continue;
    check_field_count(fields.size(), header.size(), source_name, line);
    TargetRow row;
    row.area_id = fields[0];
    row.xbar.resize(static_cast<Index>(k_file));
    for (std::size_t j = 0; j < k_file; ++j)
      row.xbar(static_cast<Index>(j)) = parse_number(fields[1 + j], source_name, line, header[1 + j]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail_input("no-records", source_name + ": no data rows");
  return rows;
}

std::vector<TargetRow> read_targets_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_input("no-records", "cannot open targets file: " + path);
  return read_targets_csv(in, path);
}

namespace {

std::string format_double(double value) {
  std::ostringstream out;
  out << std::setprecision(17) << value;
  return out.str();
}

}  // namespace

void write_predictions_csv(std::ostream& out,
                           const std::vector<AreaPrediction<double>>& predictions) {
  out << "area_id,estimate,mse_fixed,mse_gamma,mse_correction,mse_total,rmse,flags\n";
  for (const auto& p : predictions) {
    std::string flags;
    auto add = [&flags](const char* flag) {
      if (!flags.empty()) flags += ';';
      flags += flag;
    };
    if (p.sample_mean_auxiliary) add("sample-mean-auxiliary");
    if (p.extrapolation) add("extrapolation");
    if (p.no_correction_at_boundary) add("no-correction-at-boundary");
    if (p.correction_clamped) add("correction-clamped");
    out << csv_field(p.area_id) << ',' << format_double(p.estimate) << ','
        << format_double(p.mse_fixed) << ',' << format_double(p.mse_gamma) << ','
        << format_double(p.mse_correction) << ',' << format_double(p.mse_total) << ','
        << format_double(p.rmse) << ',' << csv_field(flags) << '\n';
  }
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (unsigned char ch : bytes) {
    hash ^= ch;
    hash *= 0x100000001B3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << hash;
  return out.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_input("no-records", "cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string hash_file(const std::string& path) { return fnv1a64_hex(read_file(path)); }

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_input("invalid-config", "cannot write file: " + path);
  out << content;
}

}  // namespace sae
