#pragma once

#include "pvtadp/autodiff/tape.h"

namespace pvtadp::loss {

struct LossConfig {
  double alpha = 1.0;    // Jaccard smoothing
  double epsilon = 1.0;  // Dice stabiliser
  double w_bce = 1.0;
  double w_dice = 1.0;
  double w_jaccard = 1.0;

  void validate() const;
};

// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
template <typename T>
Var<T> bce_loss(const Var<T>& pred, const Tensor<T>& target);

// 1 - (2 sum(y p) + eps) / (sum(y) + sum(p) + eps), sums over every element.
template <typename T>
Var<T> dice_loss(const Var<T>& pred, const Tensor<T>& target, double epsilon);

// alpha * (1 - (sum(y p) + alpha) / (sum(y + p - y p) + alpha)), sums over every element.
template <typename T>
Var<T> jaccard_loss(const Var<T>& pred, const Tensor<T>& target, double alpha);

template <typename T>
struct LossTerms {
  Var<T> total, bce, dice, jaccard;
};

template <typename T>
LossTerms<T> total_loss(const Var<T>& pred, const Tensor<T>& target, const LossConfig& cfg);

}  // namespace pvtadp::loss
