// Runs every acceptance criterion at full scale and prints one line each.

#include <cstdio>

#include "relusparse/testing/criteria.hpp"

int main() {
  const auto results = relusparse::testing::run_criteria({}, [](const relusparse::testing::CriterionResult& r) {
    std::printf("[%s] criterion %d: %s (%.2fs): %s\n", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(), r.seconds,
                r.detail.c_str());
    std::fflush(stdout);
  });
  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::printf("%d/%zu criteria passed\n", int(results.size()) - failed, results.size());
  return failed == 0 ? 0 : 1;
}
