#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pvtadp/autodiff/ops.h"
#include "pvtadp/verify/gradcheck.h"

namespace pvtadp::verify {

struct GradCase {
  std::string name;
  std::function<GradCheckResult()> run;
};

// Every differentiable op over at least three input shapes, 64-bit, rel err < 1e-5.
std::vector<GradCase> primitive_op_cases();

// SE, residual-SE, adapter, CBR, transformer block and a tiny full model.
std::vector<GradCase> composite_cases();

// Swap in a different conv2d implementation for the primitive conv cases.
// Used to confirm that the checker actually catches a broken backward.
using Conv2dFn = std::function<Var<double>(const Var<double>&, const Var<double>&,
                                           const std::optional<Var<double>>&, const Conv2dOptions&)>;
std::vector<GradCase> conv_cases(const Conv2dFn& conv);

struct SuiteSummary {
  std::vector<GradCheckResult> results;
  bool all_passed = true;
  double seconds = 0.0;
};

SuiteSummary run_cases(const std::vector<GradCase>& cases, std::ostream* table = nullptr);

}  // namespace pvtadp::verify
