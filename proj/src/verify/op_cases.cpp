#include <cstdio>
#include <iomanip>

#include "pvtadp/autodiff/ops.h"
#include "pvtadp/core/rng.h"
#include "pvtadp/loss/losses.h"
#include "pvtadp/verify/suites.h"

namespace pvtadp::verify {

namespace {

using V = Var<double>;
using Vs = std::vector<V>;

Tensor<double> rand_t(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Bounded away from zero so kinks are not straddled by the FD stencil.
Tensor<double> rand_off_zero(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(0.05, 1.0);
    t[i] = rng.bernoulli() ? mag : -mag;
  }
  return t;
}

GradCase input_case(std::string name, std::vector<Tensor<double>> inputs, InputGraph graph,
                    double tolerance = 1e-5) {
  return {name, [name, inputs = std::move(inputs), graph = std::move(graph), tolerance] {
            GradCheckOptions opts;
            opts.tolerance = tolerance;
            return check_input_gradients(name, inputs, graph, opts);
          }};
}

const Shape kShapes[] = {{5}, {2, 3, 4}, {2, 3, 4, 5}};

std::string shape_tag(const Shape& s) { return to_string(s); }

}  // namespace

std::vector<GradCase> conv_cases(const Conv2dFn& conv) {
  struct Cfg {
    Shape x, w;
    Conv2dOptions opts;
    bool bias;
  };
  const Cfg cfgs[] = {
      {{2, 3, 5, 5}, {4, 3, 3, 3}, {1, 1, 1}, true},   // 3x3 same-size
      {{1, 2, 8, 8}, {3, 2, 3, 3}, {2, 1, 1}, false},  // strided
      {{2, 4, 4, 4}, {6, 4, 1, 1}, {1, 0, 1}, true},   // pointwise
      {{1, 4, 5, 5}, {4, 1, 3, 3}, {1, 1, 4}, false},  // depthwise
      {{1, 4, 5, 4}, {6, 2, 3, 3}, {1, 1, 2}, true},   // grouped
      {{1, 2, 8, 8}, {3, 2, 7, 7}, {4, 3, 1}, true},   // overlapping patch embedding
      {{1, 2, 5, 5}, {2, 2, 2, 2}, {2, 0, 1}, false},  // floor output size
  };
  std::vector<GradCase> cases;
  std::uint64_t seed = 500;
  for (const auto& c : cfgs) {
    std::vector<Tensor<double>> in{rand_t(c.x, seed), rand_t(c.w, seed + 1)};
    if (c.bias) in.push_back(rand_t({c.w[0]}, seed + 2));
    seed += 3;
    const std::string name = "conv2d x" + shape_tag(c.x) + " w" + shape_tag(c.w) + " s" +
                             std::to_string(c.opts.stride) + " p" + std::to_string(c.opts.padding) +
                             " g" + std::to_string(c.opts.groups);
    const Conv2dOptions opts = c.opts;
    cases.push_back(input_case(name, std::move(in), [conv, opts](Tape<double>&, const Vs& v) {
      std::optional<V> bias;
      if (v.size() == 3) bias = v[2];
      return conv(v[0], v[1], bias, opts);
    }));
  }
  return cases;
}

std::vector<GradCase> primitive_op_cases() {
  std::vector<GradCase> cases;
  std::uint64_t seed = 1;

  for (const auto& s : kShapes) {
    const std::string tag = shape_tag(s);
    cases.push_back(input_case("add " + tag, {rand_t(s, seed++), rand_t(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return add(v[0], v[1]); }));
    cases.push_back(input_case("sub " + tag, {rand_t(s, seed++), rand_t(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return sub(v[0], v[1]); }));
    cases.push_back(input_case("mul " + tag, {rand_t(s, seed++), rand_t(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return mul(v[0], v[1]); }));
    cases.push_back(input_case("scale " + tag, {rand_t(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return scale(v[0], -1.7); }));
    cases.push_back(input_case("relu " + tag, {rand_off_zero(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return relu(v[0]); }));
    cases.push_back(input_case("leaky_relu " + tag, {rand_off_zero(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return leaky_relu(v[0]); }));
    cases.push_back(input_case("gelu " + tag, {rand_t(s, seed++, -3, 3)},
                               [](Tape<double>&, const Vs& v) { return gelu(v[0]); }));
    cases.push_back(input_case("sigmoid " + tag, {rand_t(s, seed++, -4, 4)},
                               [](Tape<double>&, const Vs& v) { return sigmoid(v[0]); }));
    cases.push_back(input_case("sum " + tag, {rand_t(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return sum(v[0]); }));
    cases.push_back(input_case("mean " + tag, {rand_t(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return mean(v[0]); }));
    cases.push_back(input_case("softmax last " + tag, {rand_t(s, seed++, -2, 2)},
                               [n = s.size()](Tape<double>&, const Vs& v) { return softmax(v[0], n - 1); }));
    cases.push_back(input_case("softmax first " + tag, {rand_t(s, seed++, -2, 2)},
                               [](Tape<double>&, const Vs& v) { return softmax(v[0], 0); }));
    cases.push_back(input_case("layer_norm " + tag,
                               {rand_t(s, seed++, -2, 2), rand_t({s.back()}, seed++, 0.5, 1.5),
                                rand_t({s.back()}, seed++)},
                               [](Tape<double>&, const Vs& v) { return layer_norm(v[0], v[1], v[2], 1e-5); }));
    cases.push_back(input_case("reshape " + tag, {rand_t(s, seed++)}, [n = numel(s)](Tape<double>&, const Vs& v) {
      return reshape(v[0], Shape{n});
    }));
  }

  // Broadcasting forms used by the model.
  const std::pair<Shape, Shape> bcasts[] = {
      {{2, 3, 4, 4}, {2, 3, 1, 1}}, {{2, 3, 4, 4}, {1}}, {{2, 5, 6}, {6}}, {{3, 4, 2}, {3, 1, 2}}};
  for (const auto& [a, b] : bcasts) {
    const std::string tag = shape_tag(a) + "<-" + shape_tag(b);
    cases.push_back(input_case("add bcast " + tag, {rand_t(a, seed++), rand_t(b, seed++)},
                               [](Tape<double>&, const Vs& v) { return add(v[0], v[1]); }));
    cases.push_back(input_case("sub bcast " + tag, {rand_t(a, seed++), rand_t(b, seed++)},
                               [](Tape<double>&, const Vs& v) { return sub(v[0], v[1]); }));
    cases.push_back(input_case("mul bcast " + tag, {rand_t(a, seed++), rand_t(b, seed++)},
                               [](Tape<double>&, const Vs& v) { return mul(v[0], v[1]); }));
  }

  const std::tuple<std::size_t, std::size_t, std::size_t> mm[] = {{4, 5, 3}, {1, 7, 2}, {6, 3, 6}};
  for (const auto& [m, k, n] : mm) {
    cases.push_back(input_case("matmul " + std::to_string(m) + "x" + std::to_string(k) + "x" + std::to_string(n),
                               {rand_t({m, k}, seed++), rand_t({k, n}, seed++)},
                               [](Tape<double>&, const Vs& v) { return matmul(v[0], v[1]); }));
    cases.push_back(input_case("bmm 3x" + std::to_string(m) + "x" + std::to_string(k) + "x" + std::to_string(n),
                               {rand_t({3, m, k}, seed++), rand_t({3, k, n}, seed++)},
                               [](Tape<double>&, const Vs& v) { return bmm(v[0], v[1]); }));
  }

  const Shape maps[] = {{1, 1, 2, 2}, {2, 3, 4, 4}, {1, 2, 4, 8}};
  for (const auto& s : maps) {
    const std::string tag = shape_tag(s);
    cases.push_back(input_case("global_avg_pool " + tag, {rand_t(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return global_avg_pool(v[0]); }));
    cases.push_back(input_case("upsample x2 " + tag, {rand_t(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return upsample_bilinear_2x(v[0]); }));
    cases.push_back(input_case("upsample x4 " + tag, {rand_t(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return upsample_bilinear(v[0], 4); }));
    cases.push_back(input_case("downsample x2 " + tag, {rand_t(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return downsample(v[0], 2); }));
    cases.push_back(input_case("permute " + tag, {rand_t(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return permute(v[0], {0, 2, 3, 1}); }));
    cases.push_back(input_case("pad2d_end " + tag, {rand_t(s, seed++)},
                               [](Tape<double>&, const Vs& v) { return pad2d_end(v[0], 1, 2); }));
    Shape other = s;
    other[1] += 1;
    cases.push_back(input_case("concat_channels " + tag, {rand_t(s, seed++), rand_t(other, seed++)},
                               [](Tape<double>&, const Vs& v) { return concat_channels<double>({v[0], v[1]}); }));
  }

  const Shape bn_shapes[] = {{2, 3, 2, 2}, {4, 2, 3, 1}, {1, 4, 3, 3}};
  for (const auto& s : bn_shapes) {
    const std::string tag = shape_tag(s);
    for (bool training : {true, false}) {
      const std::size_t C = s[1];
      cases.push_back(input_case(
          std::string("batch_norm2d ") + (training ? "train " : "eval ") + tag,
          {rand_t(s, seed++, -2, 2), rand_t({C}, seed++, 0.5, 1.5), rand_t({C}, seed++)},
          [C, training, rm = rand_t({C}, seed, -0.5, 0.5), rv = rand_t({C}, seed + 1, 0.5, 2.0)](
              Tape<double>&, const Vs& v) {
            // Fresh running buffers each call keep every evaluation identical.
            Parameter<double> mean{"rm", rm, {}, false};
            Parameter<double> var{"rv", rv, {}, false};
            (void)C;
            return batch_norm2d(v[0], v[1], v[2], mean, var, {}, training);
          }));
      seed += 2;
    }
  }

  auto plain_conv = [](const V& x, const V& w, const std::optional<V>& b, const Conv2dOptions& o) {
    return conv2d(x, w, b, o);
  };
  for (auto& c : conv_cases(plain_conv)) cases.push_back(std::move(c));

  const Shape loss_shapes[] = {{6}, {2, 1, 3, 4}, {3, 1, 5, 5}};
  for (const auto& s : loss_shapes) {
    const std::string tag = shape_tag(s);
    Tensor<double> target = rand_t(s, seed++, 0, 1);
    for (std::size_t i = 0; i < target.numel(); ++i) target[i] = target[i] < 0.4 ? 1.0 : 0.0;
    cases.push_back(input_case("bce_loss " + tag, {rand_t(s, seed++, 0.05, 0.95)},
                               [target](Tape<double>&, const Vs& v) { return loss::bce_loss(v[0], target); }));
    cases.push_back(input_case("dice_loss " + tag, {rand_t(s, seed++, 0.05, 0.95)},
                               [target](Tape<double>&, const Vs& v) { return loss::dice_loss(v[0], target, 1.0); }));
    cases.push_back(input_case("jaccard_loss " + tag, {rand_t(s, seed++, 0.05, 0.95)}, [target](Tape<double>&, const Vs& v) {
      return loss::jaccard_loss(v[0], target, 1.0);
    }));
    cases.push_back(input_case("total_loss " + tag, {rand_t(s, seed++, 0.05, 0.95)}, [target](Tape<double>&, const Vs& v) {
      return loss::total_loss(v[0], target, loss::LossConfig{0.7, 0.5, 1.0, 0.5, 2.0}).total;
    }));
  }
  return cases;
}

SuiteSummary run_cases(const std::vector<GradCase>& cases, std::ostream* table) {
  SuiteSummary summary;
  for (const auto& c : cases) {
    GradCheckResult r = c.run();
    summary.all_passed &= r.passed;
    summary.seconds += r.seconds;
    if (table) {
      char line[256];
      std::snprintf(line, sizeof line, "%-4s %-58s max_rel_err=%.3e tol=%.0e coords=%zu\n",
                    r.passed ? "PASS" : "FAIL", r.name.c_str(), r.max_rel_error, r.tolerance, r.coords);
      *table << line << std::flush;
    }
    summary.results.push_back(std::move(r));
  }
  return summary;
}

}  // namespace pvtadp::verify
