#pragma once

#include <unordered_map>

#include "pvtadp/autodiff/param_store.h"
#include "pvtadp/autodiff/tape.h"

namespace pvtadp::nn {

// Per-forward state: the tape being recorded, the train/eval switch, and the
// parameter leaves already bound on this tape.
template <typename T>
class Context {
 public:
  Context(Tape<T>& tape, bool training) : tape_(tape), training_(training) {}

  Tape<T>& tape() const { return tape_; }
  bool training() const { return training_; }

  Var<T> bind(Parameter<T>& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    Var<T> v = tape_.parameter(p);
    bound_.emplace(&p, v);
    return v;
  }

 private:
  Tape<T>& tape_;
  bool training_;
  std::unordered_map<const Parameter<T>*, Var<T>> bound_;
};

}  // namespace pvtadp::nn
