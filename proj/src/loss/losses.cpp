#include "pvtadp/loss/losses.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pvtadp/autodiff/ops.h"

namespace pvtadp::loss {

namespace {

template <typename T>
void require_same_shape(const Var<T>& pred, const Tensor<T>& target, const char* name) {
  if (pred.shape() != target.shape()) {
    throw ShapeError(std::string(name) + ": prediction " + to_string(pred.shape()) + " vs target " +
                     to_string(target.shape()));
  }
}

constexpr double kClamp = 1e-7;

}  // namespace

void LossConfig::validate() const {
  if (!(alpha > 0)) throw std::invalid_argument("loss alpha must be positive");
  if (!(epsilon > 0)) throw std::invalid_argument("loss epsilon must be positive");
  if (w_bce < 0 || w_dice < 0 || w_jaccard < 0) throw std::invalid_argument("loss weights must be non-negative");
}

template <typename T>
Var<T> bce_loss(const Var<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "bce_loss");
  const T lo = static_cast<T>(kClamp), hi = static_cast<T>(1.0 - kClamp);
  const Tensor<T>& p = pred.value();
  const std::size_t n = p.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::clamp(p[i], lo, hi);
    acc -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
  }
  const std::size_t pid = pred.id();
  return pred.tape().record(
      "bce_loss", Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n))), {pred},
      [pid, target, lo, hi](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
        T* dp = tape.grad_buffer(pid);
        const Tensor<T>& p = tape.value(pid);
        const T scale = g[0] / static_cast<T>(p.numel());
        for (std::size_t i = 0; i < p.numel(); ++i) {
          if (p[i] < lo || p[i] > hi) continue;
          dp[i] += scale * (-target[i] / p[i] + (T(1) - target[i]) / (T(1) - p[i]));
        }
      });
}

template <typename T>
Var<T> dice_loss(const Var<T>& pred, const Tensor<T>& target, double epsilon) {
  require_same_shape(pred, target, "dice_loss");
  if (!(epsilon > 0)) throw std::invalid_argument("dice_loss: epsilon must be positive");
  const Tensor<T>& p = pred.value();
  double inter = 0.0, sum_y = 0.0, sum_p = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    inter += static_cast<double>(target[i]) * p[i];
    sum_y += target[i];
    sum_p += p[i];
  }
  const double num = 2.0 * inter + epsilon;
  const double den = sum_y + sum_p + epsilon;
  const std::size_t pid = pred.id();
  return pred.tape().record("dice_loss", Tensor<T>::scalar(static_cast<T>(1.0 - num / den)), {pred},
                            [pid, target, num, den](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                              T* dp = tape.grad_buffer(pid);
                              const double inv = 1.0 / (den * den);
                              for (std::size_t i = 0; i < target.numel(); ++i) {
                                dp[i] += g[0] * static_cast<T>(-(2.0 * target[i] * den - num) * inv);
                              }
                            });
}

template <typename T>
Var<T> jaccard_loss(const Var<T>& pred, const Tensor<T>& target, double alpha) {
  require_same_shape(pred, target, "jaccard_loss");
  if (!(alpha > 0)) throw std::invalid_argument("jaccard_loss: alpha must be positive");
  const Tensor<T>& p = pred.value();
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double yp = static_cast<double>(target[i]) * p[i];
    inter += yp;
    uni += target[i] + p[i] - yp;
  }
  const double num = inter + alpha;
  const double den = uni + alpha;
  const std::size_t pid = pred.id();
  return pred.tape().record("jaccard_loss", Tensor<T>::scalar(static_cast<T>(alpha * (1.0 - num / den))), {pred},
                            [pid, target, num, den, alpha](Tape<T>& tape, const Tensor<T>& g, const Tensor<T>&) {
                              T* dp = tape.grad_buffer(pid);
                              const double inv = 1.0 / (den * den);
                              for (std::size_t i = 0; i < target.numel(); ++i) {
                                const double y = target[i];
                                dp[i] += g[0] * static_cast<T>(-alpha * (y * den - num * (1.0 - y)) * inv);
                              }
                            });
}

template <typename T>
LossTerms<T> total_loss(const Var<T>& pred, const Tensor<T>& target, const LossConfig& cfg) {
  cfg.validate();
  LossTerms<T> t;
  t.bce = bce_loss(pred, target);
  t.dice = dice_loss(pred, target, cfg.epsilon);
  t.jaccard = jaccard_loss(pred, target, cfg.alpha);
  t.total = add(add(scale(t.bce, static_cast<T>(cfg.w_bce)), scale(t.dice, static_cast<T>(cfg.w_dice))),
                scale(t.jaccard, static_cast<T>(cfg.w_jaccard)));
  return t;
}

#define PVTADP_INSTANTIATE_LOSSES(T)                                             \
  template Var<T> bce_loss<T>(const Var<T>&, const Tensor<T>&);                   \
  template Var<T> dice_loss<T>(const Var<T>&, const Tensor<T>&, double);          \
  template Var<T> jaccard_loss<T>(const Var<T>&, const Tensor<T>&, double);       \
  template LossTerms<T> total_loss<T>(const Var<T>&, const Tensor<T>&, const LossConfig&);

PVTADP_INSTANTIATE_LOSSES(float)
PVTADP_INSTANTIATE_LOSSES(double)

}  // namespace pvtadp::loss
