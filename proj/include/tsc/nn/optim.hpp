#pragma once

#include <cstdint>
#include <vector>

#include "tsc/nn/tape.hpp"

namespace tsc::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // decoupled: w -= lr * wd * w
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One update of every parameter from its gradient slot.
  void step(ParamStore& params);
  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<Matrix> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace tsc::nn
