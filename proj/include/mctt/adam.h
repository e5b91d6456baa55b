#pragma once

#include <cstdint>
#include <vector>

#include "mctt/tensor.h"

namespace mctt {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates, one pair per registered parameter.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Adam with bias correction. Gradients are read, never cleared; the caller
// zeroes them between steps.
class Adam {
 public:
  Adam(ParameterSet params, AdamOptions options);

  void step();

  const AdamOptions& options() const { return options_; }
  void set_options(const AdamOptions& options) { options_ = options; }
  const AdamState& state() const { return state_; }
  // Replaces the moment estimates; shapes must match the parameters.
  void restore(AdamState state);
  const ParameterSet& params() const { return params_; }

 private:
  ParameterSet params_;
  AdamOptions options_;
  AdamState state_;
};

}  // namespace mctt
