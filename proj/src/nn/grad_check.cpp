#include "tsc/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace tsc::nn {

GradCheckResult grad_check(ParamStore& params, const std::function<Var(Tape&)>& build_loss,
                           const GradCheckOptions& options) {
  params.zero_grad();
  {
    Tape tape;
    tape.backward(build_loss(tape));
  }
  auto loss_at = [&] {
    Tape tape(false);
    return tape.value(build_loss(tape))(0, 0);
  };
  const double l0 = loss_at();
  const double floor = std::max(options.floor, options.loss_relative_floor * std::abs(l0));
  auto rel_error = [&](double a, double n) { return std::abs(a - n) / std::max(std::abs(a) + std::abs(n), floor); };
  GradCheckResult res;
  std::mt19937_64 rng(options.seed);
  for (auto& p : params) {
    const auto n = static_cast<std::size_t>(p.value.size());
    std::vector<Eigen::Index> coords(n);
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (options.max_coords_per_param > 0 && n > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
    }
    for (Eigen::Index c : coords) {
      double& w = p.value.data()[c];
      const double saved = w;
      const double analytic = p.grad.data()[c];
      double h = options.eps;
      double numeric = 0.0, rel = 0.0;
      for (int attempt = 0;; ++attempt) {
        w = saved + h;
        const double up = loss_at();
        w = saved - h;
        const double down = loss_at();
        w = saved;
        numeric = (up - down) / (2 * h);
        rel = rel_error(analytic, numeric);
        if (rel <= options.tolerance || attempt == options.kink_retries) break;
        // One-sided slopes that disagree mean a kink lies inside [w-h, w+h].
        const double fwd = (up - l0) / h, bwd = (l0 - down) / h;
        if (rel_error(fwd, bwd) <= options.tolerance) break;
        if (attempt == 0) ++res.kinks;
        h /= 10;
      }
      ++res.checked;
      if (rel > res.max_relative_error) {
        res.max_relative_error = rel;
        res.worst_param = p.name;
        res.worst_index = c;
        res.analytic = analytic;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace tsc::nn
