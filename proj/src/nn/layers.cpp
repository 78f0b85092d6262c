#include "tsc/nn/layers.hpp"

#include <cmath>

namespace tsc::nn {

Matrix glorot(int rows, int cols, std::mt19937_64& rng, int fan_in, int fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

GatLayerParams add_gat_layer(ParamStore& store, const std::string& prefix, int in, int out_per_head, int heads,
                             std::mt19937_64& rng) {
  GatLayerParams p;
  p.in = in;
  p.out_per_head = out_per_head;
  for (int k = 0; k < heads; ++k) {
    const std::string h = prefix + ".head" + std::to_string(k);
    p.W.push_back(store.add(h + ".W", glorot(in, out_per_head, rng, in, out_per_head)));
    p.a.push_back(store.add(h + ".a", glorot(2 * out_per_head, 1, rng, 2 * out_per_head, 1)));
  }
  return p;
}

Var gat_layer(Tape& t, ParamStore& store, const GatLayerParams& layer, Var h, std::shared_ptr<const Adjacency> adj,
              int graphs, KernelMode mode) {
  std::vector<Var> W, a;
  for (int i : layer.W) W.push_back(t.param(store[i]));
  for (int i : layer.a) a.push_back(t.param(store[i]));
  return gat(t, h, std::move(adj), graphs, W, a, mode);
}

LinearParams add_linear(ParamStore& store, const std::string& prefix, int in, int out, std::mt19937_64& rng) {
  LinearParams p;
  p.W = store.add(prefix + ".W", glorot(in, out, rng, in, out));
  p.b = store.add(prefix + ".b", Matrix::Zero(1, out));
  return p;
}

Var linear(Tape& t, ParamStore& store, const LinearParams& layer, Var x) {
  return add_bias(t, matmul(t, x, t.param(store[layer.W])), t.param(store[layer.b]));
}

}  // namespace tsc::nn
