#pragma once

#include <string>
#include <vector>

#include "pn/matrix.hpp"

namespace pn {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // measured deviation or counterexample summary
};

// Property suites backing `verify --suite ...`. Each check prints nothing;
// callers format the PASS/FAIL lines.
std::vector<CheckResult> verify_grad(std::uint64_t seed);
std::vector<CheckResult> verify_equivariance(std::uint64_t seed);
std::vector<CheckResult> verify_kernel(std::uint64_t seed);
std::vector<CheckResult> verify_poly(std::uint64_t seed);
std::vector<CheckResult> verify_wl(std::uint64_t seed);
std::vector<CheckResult> verify_all(std::uint64_t seed);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace pn
