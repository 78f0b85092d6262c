// Serial reference kernel against the OpenMP kernel on the lane graph of a
// 4x4 grid, stacked the way a training batch stacks it.

#include <benchmark/benchmark.h>

#include <random>

#include "tsc/network.hpp"
#include "tsc/nn/gat_kernels.hpp"

using namespace tsc;
using namespace tsc::nn;

namespace {

struct Setup {
  Adjacency adj;
  Matrix h;
  std::vector<Matrix> W, a;
  int graphs;
};

Setup make(int graphs, int heads, int fin) {
  NetworkSpec s;
  s.rows = 4;
  s.cols = 4;
  const Network net = build_network(s);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  auto rnd = [&](int r, int c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
  };
  Setup st{Adjacency::from_mask(naive_movement_mask(net).values), {}, {}, {}, graphs};
  st.h = rnd(graphs * st.adj.n, fin);
  for (int k = 0; k < heads; ++k) {
    st.W.push_back(rnd(fin, 8));
    st.a.push_back(rnd(16, 1));
  }
  return st;
}

void forward(benchmark::State& state, KernelMode mode) {
  const Setup st = make(static_cast<int>(state.range(0)), 8, static_cast<int>(state.range(1)));
  Matrix out;
  std::vector<GatHeadCache> cache;
  for (auto _ : state) {
    gat_forward(mode, st.h, st.adj, st.graphs, st.W, st.a, out, cache);
    benchmark::DoNotOptimize(out.data());
  }
}

void backward(benchmark::State& state, KernelMode mode) {
  const Setup st = make(static_cast<int>(state.range(0)), 8, static_cast<int>(state.range(1)));
  Matrix out, dh;
  std::vector<GatHeadCache> cache;
  gat_forward(mode, st.h, st.adj, st.graphs, st.W, st.a, out, cache);
  const Matrix dout = Matrix::Ones(out.rows(), out.cols());
  std::vector<Matrix> dW, da;
  for (auto _ : state) {
    gat_backward(mode, st.h, st.adj, st.graphs, st.W, st.a, cache, dout, dW, da, &dh);
    benchmark::DoNotOptimize(dh.data());
  }
}

void args(benchmark::internal::Benchmark* b) {
  for (int g : {1, 32})
    for (int fin : {5, 64}) b->Args({g, fin});
}

}  // namespace

BENCHMARK_CAPTURE(forward, serial, KernelMode::Serial)->Apply(args)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(forward, parallel, KernelMode::Parallel)->Apply(args)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(backward, serial, KernelMode::Serial)->Apply(args)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(backward, parallel, KernelMode::Parallel)->Apply(args)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
