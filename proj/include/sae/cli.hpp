#ifndef SAE_CLI_HPP
#define SAE_CLI_HPP

#include <cstdint>
#include <iosfwd>
#include <string>

#include "sae/varcomp.hpp"

namespace sae::cli {

// Resolved command configuration; every report echoes it in full.
struct RunConfig {
  std::string input;
  std::string targets;  // empty = fall back to within-area sample means
  std::string out_dir = ".";
  int degree = 1;
  int knots = -1;  // -1 = default profile, 0 = auto rule, > 0 explicit count
  FitMethod method = FitMethod::reml;
  double alpha = 0.05;
  std::uint64_t seed = 1;

  // simulate
  std::string model = "M2";
  int sim_m = 30;
  int sim_ni = 4;
  int replicates = 1000;
  double sigma_e = 1.0;
  bool table1 = false;
  int max_threads = 0;
};

// Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.
int cmd_fit(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_predict(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_test(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_simulate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_diagnose(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace sae::cli

#endif
