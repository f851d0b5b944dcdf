#include "pvtadp/verify/gradcheck.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "pvtadp/autodiff/ops.h"
#include "pvtadp/core/rng.h"

namespace pvtadp::verify {

namespace {

using Clock = std::chrono::steady_clock;

// Projection weights are drawn once per output shape so the forward used for
// finite differences sees exactly the same scalar function.
class Projection {
 public:
  explicit Projection(std::uint64_t seed) : seed_(seed) {}

  Var<double> apply(const Var<double>& out) {
    if (weights_.shape() != out.shape()) {
      Rng rng(seed_);
      weights_ = Tensor<double>(out.shape());
      for (std::size_t i = 0; i < weights_.numel(); ++i) weights_[i] = rng.uniform(-1.0, 1.0);
    }
    return sum(mul(out, out.tape().constant(weights_)));
  }

 private:
  std::uint64_t seed_;
  Tensor<double> weights_;
};

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t max_coords, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (max_coords == 0 || max_coords >= n) return idx;
  for (std::size_t i = 0; i < max_coords; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                            static_cast<std::int64_t>(n - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

GradCheckResult check_input_gradients(const std::string& name, const std::vector<Tensor<double>>& inputs,
                                      const InputGraph& graph, const GradCheckOptions& opts) {
  const auto start = Clock::now();
  GradCheckResult result{name, 0.0, opts.tolerance, 0, false, 0.0};
  Projection proj(opts.seed);

  auto evaluate = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> tape(false);
    std::vector<Var<double>> leaves;
    for (const auto& x : xs) leaves.push_back(tape.leaf(x, false));
    return proj.apply(graph(tape, leaves)).value().item();
  };

  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
    const Var<double> loss = proj.apply(graph(tape, leaves));
    tape.backward(loss);
    for (const auto& leaf : leaves) {
      analytic.push_back(tape.has_grad(leaf) ? tape.grad(leaf) : Tensor<double>(leaf.shape()));
    }
  }

  Rng rng(mix_seed(opts.seed, 1));
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i : pick_coords(inputs[k].numel(), opts.max_coords, rng)) {
      const double orig = probe[k][i];
      probe[k][i] = orig + opts.step;
      const double up = evaluate(probe);
      probe[k][i] = orig - opts.step;
      const double down = evaluate(probe);
      probe[k][i] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[k][i], numeric));
      ++result.coords;
    }
  }
  result.passed = result.max_rel_error < opts.tolerance;
  result.seconds = seconds_since(start);
  return result;
}

GradCheckResult check_param_gradients(const std::string& name, ParamStore<double>& params,
                                      const ParamGraph& graph, const GradCheckOptions& opts) {
  const auto start = Clock::now();
  GradCheckResult result{name, 0.0, opts.tolerance, 0, false, 0.0};
  Projection proj(opts.seed);

  // Non-trainable buffers (running statistics) may be updated by the graph;
  // restore them around every evaluation so all passes see the same state.
  std::vector<Tensor<double>> buffers;
  for (const auto& p : params) {
    if (!p->trainable) buffers.push_back(p->value);
  }
  auto restore_buffers = [&] {
    std::size_t b = 0;
    for (auto& p : params) {
      if (!p->trainable) p->value = buffers[b++];
    }
  };
  auto evaluate = [&] {
    restore_buffers();
    Tape<double> tape(false);
    return proj.apply(graph(tape)).value().item();
  };

  params.zero_grad();
  {
    restore_buffers();
    Tape<double> tape;
    tape.backward(proj.apply(graph(tape)));
  }

  Rng rng(mix_seed(opts.seed, 2));
  for (auto& p : params) {
    if (!p->trainable) continue;
    for (std::size_t i : pick_coords(p->value.numel(), opts.max_coords, rng)) {
      const double orig = p->value[i];
      p->value[i] = orig + opts.step;
      const double up = evaluate();
      p->value[i] = orig - opts.step;
      const double down = evaluate();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(p->grad[i], numeric));
      ++result.coords;
    }
  }
  restore_buffers();
  params.zero_grad();
  result.passed = result.max_rel_error < opts.tolerance;
  result.seconds = seconds_since(start);
  return result;
}

}  // namespace pvtadp::verify
