#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace pvtadp::verify {

// A named property check; `run` returns an empty string on success and a
// short description of the violation otherwise.
struct Invariant {
  std::string name;
  std::function<std::string()> run;
};

// Block degeneracies, loss and metric identities, model shape/range, early
// stopping and checkpoint round trip. Cheap enough to run on every build.
std::vector<Invariant> invariant_cases();

struct InvariantSummary {
  std::size_t passed = 0;
  std::size_t failed = 0;
  double seconds = 0.0;
  bool all_passed() const { return failed == 0; }
};

InvariantSummary run_invariants(const std::vector<Invariant>& cases, std::ostream* table = nullptr);

}  // namespace pvtadp::verify
