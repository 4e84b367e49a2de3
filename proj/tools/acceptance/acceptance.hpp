#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bsvie::acceptance {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

inline constexpr int kCriteria = 11;

CriterionResult run_criterion(int id);

/// Runs the given criteria (all when empty), printing one line per criterion.
/// Returns true when every criterion passed.
bool run_suite(const std::vector<int>& ids, std::ostream& os);

}  // namespace bsvie::acceptance
