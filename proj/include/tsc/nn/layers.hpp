#pragma once

#include <random>
#include <string>
#include <vector>

#include "tsc/nn/tape.hpp"

namespace tsc::nn {

/// K heads of (W: F x F', a: 2F' x 1); no bias.
struct GatLayerParams {
  int in = 0;
  int out_per_head = 0;
  std::vector<int> W;
  std::vector<int> a;
  int heads() const { return static_cast<int>(W.size()); }
  int out_width() const { return heads() * out_per_head; }
};

GatLayerParams add_gat_layer(ParamStore& store, const std::string& prefix, int in, int out_per_head, int heads,
                             std::mt19937_64& rng);
Var gat_layer(Tape& t, ParamStore& store, const GatLayerParams& layer, Var h,
              std::shared_ptr<const Adjacency> adj, int graphs, KernelMode mode = KernelMode::Parallel);

struct LinearParams {
  int W = -1;  // in x out
  int b = -1;  // 1 x out
};

LinearParams add_linear(ParamStore& store, const std::string& prefix, int in, int out, std::mt19937_64& rng);
Var linear(Tape& t, ParamStore& store, const LinearParams& layer, Var x);

/// Glorot-uniform matrix.
Matrix glorot(int rows, int cols, std::mt19937_64& rng, int fan_in, int fan_out);

}  // namespace tsc::nn
