#pragma once

// Acceptance suite: ten numbered criteria, each with its tolerance fixed in code.

#include <functional>
#include <string>
#include <vector>

namespace rfmag::acceptance {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  unsigned threads = 8;
};

using Reporter = std::function<void(const CriterionResult&)>;

inline constexpr int criterion_count = 10;

/// Criteria 1 to 9. Throws std::out_of_range for any other id.
CriterionResult run_criterion(int id, const Options& options);

/// Criterion 10: repeated CLI runs are byte-identical at 1 and 8 threads, and every
/// earlier criterion passed.
CriterionResult determinism_criterion(const std::vector<CriterionResult>& earlier);

/// Runs all criteria in order, calling `report` after each.
std::vector<CriterionResult> run_all(const Options& options, const Reporter& report = {});

/// "[PASS] 3 sensitivity budget (0.01 s): detail"
std::string format_line(const CriterionResult& result);

}  // namespace rfmag::acceptance
