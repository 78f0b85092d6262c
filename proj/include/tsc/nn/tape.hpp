#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tsc/matrix.hpp"
#include "tsc/nn/gat_kernels.hpp"

namespace tsc::nn {

/// Named trainable tensor with its gradient slot.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Owns parameters by value; models refer to them by index so that copying a
/// store (e.g. into a target network) keeps every reference valid.
class ParamStore {
 public:
  int add(std::string name, Matrix init);
  Param& operator[](int i) { return params_.at(i); }
  const Param& operator[](int i) const { return params_.at(i); }
  int size() const { return static_cast<int>(params_.size()); }
  int find(const std::string& name) const;  // -1 if absent
  std::size_t num_values() const;

  void zero_grad();
  /// Bit-exact copy of values from a store with identical names and shapes.
  void copy_values_from(const ParamStore& other);

  std::vector<Param>::iterator begin() { return params_.begin(); }
  std::vector<Param>::iterator end() { return params_.end(); }
  std::vector<Param>::const_iterator begin() const { return params_.begin(); }
  std::vector<Param>::const_iterator end() const { return params_.end(); }

 private:
  std::vector<Param> params_;
};

struct Var {
  int id = -1;
};

class Tape;
using BackwardFn = std::function<void(Tape&, int self)>;

/// Reverse-mode recorder. Every op appends a node; backward() walks them in
/// reverse and accumulates into parameter gradient slots.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Var constant(Matrix value);
  /// Leaf bound to `p`. Without gradients enabled it behaves as a constant.
  Var param(Param& p);

  const Matrix& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.view ? *n.view : n.value;
  }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  /// Gradient buffer of a node; valid during backward().
  Matrix& grad(Var v);

  Var push(Matrix value, std::vector<Var> parents, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 loss and back-propagates.
  void backward(Var loss);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* view = nullptr;  // parameter leaves alias the parameter
    Matrix grad;
    std::vector<Var> parents;
    BackwardFn backward;
    Param* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

// Ops. Shapes are checked eagerly and reported with std::invalid_argument.
Var matmul(Tape& t, Var a, Var b);
/// x (rows x n) plus a 1 x n bias broadcast over rows.
Var add_bias(Tape& t, Var x, Var bias);
Var add(Tape& t, Var a, Var b);
Var leaky_relu(Tape& t, Var x, double slope = kLeakySlope);
/// Horizontal concatenation.
Var hconcat(Tape& t, std::span<const Var> parts);
Var vconcat(Tape& t, std::span<const Var> parts);
/// out(o, block b) = x.row(idx(o, b)), or zeros where idx(o, b) < 0.
Var gather_blocks(Tape& t, Var x, const Eigen::MatrixXi& idx);
/// sum_ij w_ij * x_ij, a 1x1 result.
Var weighted_sum(Tape& t, Var x, const Matrix& w);
/// Multi-head GAT over stacked graphs (see gat_forward).
Var gat(Tape& t, Var h, std::shared_ptr<const Adjacency> adj, int graphs, std::span<const Var> W,
        std::span<const Var> a, KernelMode mode = KernelMode::Parallel);

/// Branch TD loss: q is rows x 4*S. For every row o and valid branch s,
/// adds w(o) * (q(o, 4s + action(o,s)) - target(o,s))^2.
Var branch_td_loss(Tape& t, Var q, const Eigen::MatrixXi& actions, const Matrix& targets,
                   const std::vector<std::vector<char>>& valid_by_row, const Vector& row_weight);

}  // namespace tsc::nn
