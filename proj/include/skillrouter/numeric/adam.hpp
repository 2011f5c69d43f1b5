#pragma once

#include <map>
#include <string>

#include "skillrouter/numeric/param_store.hpp"

namespace skillrouter::numeric {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moment buffers are keyed by parameter path so new
// parameters can join mid-run (bootstrap adds heads to a trained store).
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Applies one update with step counter t >= 1 to every trainable
  // parameter, then clears all gradients.
  void step(ParamStore& store, long t);

  const AdamConfig& config() const { return config_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  AdamConfig config_;
  std::map<std::string, Moments> moments_;
};

}  // namespace skillrouter::numeric
