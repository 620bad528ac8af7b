#pragma once

// Self-check suites behind `broyden_lab verify`. Every suite uses fixed
// internal seeds, so repeated runs print identical reports.

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "broyden_lab/theory.hpp"

namespace broyden_lab {

enum class VerifySuite { Lemmas, Bounds, Jacobians, All };

std::optional<VerifySuite> parse_verify_suite(std::string_view name);

struct CheckLine {
  std::string name;
  bool passed = true;
  /// Not applicable under the run's conditions; does not fail the suite.
  bool skipped = false;
  /// Smallest margin between bound and observation (negative on failure).
  std::optional<double> slack;
  std::string detail;
};

struct SuiteReport {
  std::vector<CheckLine> lines;
  bool passed() const;
};

SuiteReport run_verify(VerifySuite suite);

/// One line per check: "<name>: PASS|FAIL|SKIP [slack=...] [detail]".
void print_report(std::ostream& out, const SuiteReport& report);

/// Random constants satisfying 48 sqrt(n) c M r0 + c sigma0 <= 1/3.
theory::ProblemConstants random_feasible_constants(RngStream& stream);

}  // namespace broyden_lab
