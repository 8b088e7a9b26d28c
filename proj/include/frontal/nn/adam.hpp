#pragma once

#include "frontal/common.hpp"

#include <cmath>
#include <map>
#include <string>

namespace frontal::nn {

// Adam with bias correction and no weight decay. State is keyed by parameter
// name (slots are created on first use), so it serializes naturally into
// checkpoints and updates run in a deterministic order.
class Adam {
public:
  struct Slot {
    Vec m, v;
  };

  Adam() = default;
  Adam(Scalar beta1, Scalar beta2, Scalar eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  template <class Model>
  void step(Model& model, Scalar lr) {
    ++t_;
    const Scalar bc1 = 1.0 - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar bc2 = 1.0 - std::pow(beta2_, static_cast<Scalar>(t_));
    model.for_each_param("", [&](const std::string& name, auto& p, auto& g) {
      Slot& s = slots_[name];
      if (s.m.size() != p.size()) {
        s.m = Vec::Zero(p.size());
        s.v = Vec::Zero(p.size());
      }
      Eigen::Map<Vec> pv(p.data(), p.size());
      Eigen::Map<const Vec> gv(g.data(), g.size());
      s.m.array() = beta1_ * s.m.array() + (1.0 - beta1_) * gv.array();
      s.v.array() = beta2_ * s.v.array() + (1.0 - beta2_) * gv.array().square();
      pv.array() -= lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + eps_);
    });
  }

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  Scalar beta1() const { return beta1_; }
  Scalar beta2() const { return beta2_; }
  Scalar eps() const { return eps_; }
  void set_betas(Scalar b1, Scalar b2) {
    beta1_ = b1;
    beta2_ = b2;
  }

  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }

private:
  Scalar beta1_ = 0.5;
  Scalar beta2_ = 0.99;
  Scalar eps_ = 1e-8;
  long t_ = 0;
  std::map<std::string, Slot> slots_;
};

}  // namespace frontal::nn
