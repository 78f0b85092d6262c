#pragma once

#include <span>
#include <vector>

#include "tsc/matrix.hpp"

namespace tsc::nn {

/// Row-compressed neighbourhoods of a binary square mask.
struct Adjacency {
  int n = 0;
  std::vector<int> row_ptr;  // n + 1
  std::vector<int> col;

  /// Throws std::invalid_argument if the mask is not square and binary, or a
  /// row has no neighbours (softmax would be undefined).
  static Adjacency from_mask(const Matrix& mask);
  std::size_t nnz() const { return col.size(); }
};

inline constexpr double kLeakySlope = 0.2;

/// Forward intermediates of one head over all graphs of a batch.
struct GatHeadCache {
  Matrix z;                  // (G*N) x F'
  std::vector<double> pre;   // per edge and graph: a_src.z_i + a_dst.z_j
  std::vector<double> alpha; // per edge and graph
};

enum class KernelMode { Serial, Parallel };

/// Multi-head masked graph attention over `graphs` stacked graphs that share
/// one adjacency: h is (graphs*N) x F, W[k] is F x F', a[k] is 2F' x 1
/// (source half first). Output is (graphs*N) x (K*F'), heads concatenated.
void gat_forward(KernelMode mode, const Matrix& h, const Adjacency& adj, int graphs, std::span<const Matrix> W,
                 std::span<const Matrix> a, Matrix& out, std::vector<GatHeadCache>& cache);

/// Gradients of the forward above. dW/da are overwritten (one per head);
/// dh is overwritten when `want_dh`.
void gat_backward(KernelMode mode, const Matrix& h, const Adjacency& adj, int graphs, std::span<const Matrix> W,
                  std::span<const Matrix> a, const std::vector<GatHeadCache>& cache, const Matrix& dout,
                  std::vector<Matrix>& dW, std::vector<Matrix>& da, Matrix* dh);

/// Dense attention coefficients of head `k` for graph `g` (masked entries 0).
Matrix attention_matrix(const Adjacency& adj, const GatHeadCache& cache, int g);

}  // namespace tsc::nn
