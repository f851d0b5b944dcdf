#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pvtadp/autodiff/param_store.h"
#include "pvtadp/autodiff/tape.h"

namespace pvtadp::verify {

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-5;
  std::uint64_t seed = 7;
  // Coordinates probed per input tensor; 0 means all of them.
  std::size_t max_coords = 0;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t coords = 0;
  bool passed = false;
  double seconds = 0.0;
};

// Builds a graph from leaves holding `inputs`. The checked scalar is a fixed
// random projection of the graph output, so every output element contributes.
using InputGraph = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

GradCheckResult check_input_gradients(const std::string& name, const std::vector<Tensor<double>>& inputs,
                                      const InputGraph& graph, const GradCheckOptions& opts = {});

// Same for the trainable entries of a parameter store; `graph` must bind its
// parameters through Tape::parameter so gradients land in Parameter::grad.
using ParamGraph = std::function<Var<double>(Tape<double>&)>;

GradCheckResult check_param_gradients(const std::string& name, ParamStore<double>& params,
                                      const ParamGraph& graph, const GradCheckOptions& opts = {});

// |analytic - numeric| / max(1, |numeric|)
double relative_error(double analytic, double numeric);

}  // namespace pvtadp::verify
