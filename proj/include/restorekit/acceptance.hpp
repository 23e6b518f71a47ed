#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace restorekit {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  /// Artifacts of the run go to artifact_dir/jobs<N>/.
  std::filesystem::path artifact_dir = "acceptance_artifacts";
  std::uint64_t seed = 20240917;
  /// Rerun the suite at the other worker count (1 <-> 8) and compare artifacts.
  bool check_determinism = true;
};

/// Runs the twelve acceptance criteria, printing one PASS/FAIL line per
/// criterion to `out`. Artifacts are %.17g text files, so two runs agree
/// byte-for-byte exactly when every computed value agrees bit-for-bit.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out);

bool all_passed(const std::vector<CriterionResult>& results);

}  // namespace restorekit
