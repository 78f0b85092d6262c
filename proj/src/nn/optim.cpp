#include "tsc/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace tsc::nn {

void Adam::step(ParamStore& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  if (static_cast<int>(m_.size()) != params.size()) throw std::invalid_argument("Adam: parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (int i = 0; i < params.size(); ++i) {
    Param& p = params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
      throw std::invalid_argument("Adam: gradient shape of " + p.name + " differs");
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
    const auto step = (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
    p.value.array() -= config_.lr * (step + config_.weight_decay * p.value.array());
  }
}

}  // namespace tsc::nn
