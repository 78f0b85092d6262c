#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "tsc/nn/tape.hpp"

namespace tsc::nn {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Denominator floor: rel = |a - n| / max(|a| + |n|, floor).
  double floor = 1e-6;
  /// The floor is raised to this times |loss|, so the check does not depend
  /// on the scale of the loss.
  double loss_relative_floor = 0.0;
  /// A coordinate whose error exceeds `tolerance` while its one-sided
  /// differences disagree straddles a kink; it is retried with a step ten
  /// times smaller, at most this many times.
  int kink_retries = 0;
  double tolerance = 1e-4;
  /// Coordinates probed per parameter; 0 probes all of them.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;  // coordinates retried with a smaller step
};

/// `build_loss` records a 1x1 loss on the given tape from the current values
/// in `params`. Analytic gradients come from one backward pass; numeric ones
/// from central differences on each probed coordinate.
GradCheckResult grad_check(ParamStore& params, const std::function<Var(Tape&)>& build_loss,
                           const GradCheckOptions& options = {});

}  // namespace tsc::nn
