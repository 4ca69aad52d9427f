#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace ssimadv::selftest {

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

/// 1000 random image pairs (4x4 to 28x28, 1 and 3 channels): ssim symmetry
/// within 1e-12, ssim(x,x) == 1 exactly, values inside (-1, 1].
SuiteResult ssim_properties(uint64_t seed);

/// Analytic constraint gradients and the Lagrangian's delta gradient against
/// central finite differences: 100 random cases each, rel. err 1e-4 for the
/// plain constraints and 1e-3 through a conv model.
SuiteResult gradient_checks(uint64_t seed);

/// 1000 random (u1, u2, v, C) with <u_i, v> >= -C/2: midpoint NMSE never
/// exceeds the worse endpoint by more than 1e-9.
SuiteResult quasi_convexity(uint64_t seed);

/// Binary-search schedule traces: always-fail decade ramp, always-succeed
/// halving, and a success gate keeping the upper bound monotone.
SuiteResult search_traces();

std::vector<SuiteResult> run_all(uint64_t seed);

/// Prints one line per suite; returns 0 when everything passed, 1 otherwise.
int run_selftest(uint64_t seed, std::ostream& os);

}  // namespace ssimadv::selftest
