#include "tsc/nn/tape.hpp"

#include <cassert>
#include <stdexcept>

namespace tsc::nn {

int ParamStore::add(std::string name, Matrix init) {
  if (find(name) >= 0) throw std::invalid_argument("duplicate parameter name " + name);
  Param p;
  p.name = std::move(name);
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return size() - 1;
}

int ParamStore::find(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (params_[i].name == name) return i;
  return -1;
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.size() != size()) throw std::invalid_argument("copy_values_from: parameter count differs");
  for (int i = 0; i < size(); ++i) {
    if (other[i].name != params_[i].name || other[i].value.rows() != params_[i].value.rows() ||
        other[i].value.cols() != params_[i].value.cols())
      throw std::invalid_argument("copy_values_from: parameter " + params_[i].name + " differs");
    params_[i].value = other[i].value;
  }
}

Var Tape::constant(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::param(Param& p) {
  Var v = push(Matrix(), {}, nullptr);
  nodes_.back().view = &p.value;
  if (grad_enabled_) {
    nodes_.back().param = &p;
    nodes_.back().requires_grad = true;
  }
  return v;
}

Matrix& Tape::grad(Var v) { return nodes_.at(v.id).grad; }

Var Tape::push(Matrix value, std::vector<Var> parents, BackwardFn backward) {
  assert(value.allFinite() && "non-finite value on tape");
  Node n;
  n.value = std::move(value);
  for (Var p : parents) n.requires_grad = n.requires_grad || nodes_.at(p.id).requires_grad;
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
  if (loss.id < 0 || loss.id >= static_cast<int>(nodes_.size()))
    throw std::logic_error("backward: loss was not recorded on this tape");
  if (backward_done_) throw std::logic_error("backward: tape already consumed");
  Node& root = nodes_[loss.id];
  if (value(loss).rows() != 1 || value(loss).cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  if (!root.requires_grad) throw std::logic_error("backward: loss does not depend on any parameter");
  for (auto& n : nodes_) {
    const Matrix& v = n.view ? *n.view : n.value;
    if (n.requires_grad) n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  root.grad(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) n.param->grad += n.grad;
  }
  backward_done_ = true;
}

namespace {

void need(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  need(A.cols() == B.rows(), "matmul: inner dimensions differ");
  Matrix out = A * B;
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, int self) {
    const Matrix& g = tp.grad(Var{self});
    if (tp.requires_grad(a)) tp.grad(a).noalias() += g * tp.value(b).transpose();
    if (tp.requires_grad(b)) tp.grad(b).noalias() += tp.value(a).transpose() * g;
  });
}

Var add_bias(Tape& t, Var x, Var bias) {
  const Matrix& X = t.value(x);
  const Matrix& b = t.value(bias);
  need(b.rows() == 1 && b.cols() == X.cols(), "add_bias: bias must be 1 x cols");
  Matrix out = X.rowwise() + b.row(0);
  return t.push(std::move(out), {x, bias}, [x, bias](Tape& tp, int self) {
    const Matrix& g = tp.grad(Var{self});
    if (tp.requires_grad(x)) tp.grad(x) += g;
    if (tp.requires_grad(bias)) tp.grad(bias) += g.colwise().sum();
  });
}

Var add(Tape& t, Var a, Var b) {
  need(t.value(a).rows() == t.value(b).rows() && t.value(a).cols() == t.value(b).cols(), "add: shapes differ");
  Matrix out = t.value(a) + t.value(b);
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, int self) {
    const Matrix& g = tp.grad(Var{self});
    if (tp.requires_grad(a)) tp.grad(a) += g;
    if (tp.requires_grad(b)) tp.grad(b) += g;
  });
}

Var leaky_relu(Tape& t, Var x, double slope) {
  const Matrix& X = t.value(x);
  Matrix out = X.unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
  return t.push(std::move(out), {x}, [x, slope](Tape& tp, int self) {
    const Matrix& g = tp.grad(Var{self});
    const Matrix& X = tp.value(x);
    tp.grad(x) += g.binaryExpr(X, [slope](double gv, double xv) { return xv > 0 ? gv : slope * gv; });
  });
}

Var hconcat(Tape& t, std::span<const Var> parts) {
  need(!parts.empty(), "hconcat: nothing to concatenate");
  const Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    need(t.value(p).rows() == rows, "hconcat: row counts differ");
    cols += t.value(p).cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    out.middleCols(c, t.value(p).cols()) = t.value(p);
    c += t.value(p).cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.push(std::move(out), ps, [ps](Tape& tp, int self) {
    const Matrix& g = tp.grad(Var{self});
    Eigen::Index c = 0;
    for (Var p : ps) {
      const Eigen::Index w = tp.value(p).cols();
      if (tp.requires_grad(p)) tp.grad(p) += g.middleCols(c, w);
      c += w;
    }
  });
}

Var vconcat(Tape& t, std::span<const Var> parts) {
  need(!parts.empty(), "vconcat: nothing to concatenate");
  const Eigen::Index cols = t.value(parts[0]).cols();
  Eigen::Index rows = 0;
  for (Var p : parts) {
    need(t.value(p).cols() == cols, "vconcat: column counts differ");
    rows += t.value(p).rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, t.value(p).rows()) = t.value(p);
    r += t.value(p).rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.push(std::move(out), ps, [ps](Tape& tp, int self) {
    const Matrix& g = tp.grad(Var{self});
    Eigen::Index r = 0;
    for (Var p : ps) {
      const Eigen::Index h = tp.value(p).rows();
      if (tp.requires_grad(p)) tp.grad(p) += g.middleRows(r, h);
      r += h;
    }
  });
}

Var gather_blocks(Tape& t, Var x, const Eigen::MatrixXi& idx) {
  const Matrix& X = t.value(x);
  const Eigen::Index w = X.cols();
  Matrix out = Matrix::Zero(idx.rows(), idx.cols() * w);
  for (Eigen::Index o = 0; o < idx.rows(); ++o)
    for (Eigen::Index b = 0; b < idx.cols(); ++b) {
      const int r = idx(o, b);
      need(r < X.rows(), "gather_blocks: row index out of range");
      if (r >= 0) out.row(o).segment(b * w, w) = X.row(r);
    }
  return t.push(std::move(out), {x}, [x, idx, w](Tape& tp, int self) {
    const Matrix& g = tp.grad(Var{self});
    Matrix& gx = tp.grad(x);
    for (Eigen::Index o = 0; o < idx.rows(); ++o)
      for (Eigen::Index b = 0; b < idx.cols(); ++b)
        if (idx(o, b) >= 0) gx.row(idx(o, b)) += g.row(o).segment(b * w, w);
  });
}

Var weighted_sum(Tape& t, Var x, const Matrix& w) {
  need(w.rows() == t.value(x).rows() && w.cols() == t.value(x).cols(), "weighted_sum: shape mismatch");
  Matrix out(1, 1);
  out(0, 0) = t.value(x).cwiseProduct(w).sum();
  return t.push(std::move(out), {x}, [x, w](Tape& tp, int self) { tp.grad(x) += tp.grad(Var{self})(0, 0) * w; });
}

Var gat(Tape& t, Var h, std::shared_ptr<const Adjacency> adj, int graphs, std::span<const Var> W,
        std::span<const Var> a, KernelMode mode) {
  need(adj != nullptr, "gat: missing adjacency");
  need(W.size() == a.size() && !W.empty(), "gat: need one (W, a) pair per head");
  std::vector<Matrix> Wv, av;
  for (Var w : W) Wv.push_back(t.value(w));
  for (Var v : a) av.push_back(t.value(v));
  auto cache = std::make_shared<std::vector<GatHeadCache>>();
  Matrix out;
  gat_forward(mode, t.value(h), *adj, graphs, Wv, av, out, *cache);
  std::vector<Var> parents{h};
  parents.insert(parents.end(), W.begin(), W.end());
  parents.insert(parents.end(), a.begin(), a.end());
  std::vector<Var> Ws(W.begin(), W.end()), as(a.begin(), a.end());
  return t.push(std::move(out), parents, [=](Tape& tp, int self) {
    std::vector<Matrix> Wv2, av2, dW, da;
    for (Var w : Ws) Wv2.push_back(tp.value(w));
    for (Var v : as) av2.push_back(tp.value(v));
    Matrix dh;
    const bool want_dh = tp.requires_grad(h);
    gat_backward(mode, tp.value(h), *adj, graphs, Wv2, av2, *cache, tp.grad(Var{self}), dW, da,
                 want_dh ? &dh : nullptr);
    if (want_dh) tp.grad(h) += dh;
    for (std::size_t k = 0; k < Ws.size(); ++k) {
      if (tp.requires_grad(Ws[k])) tp.grad(Ws[k]) += dW[k];
      if (tp.requires_grad(as[k])) tp.grad(as[k]) += da[k];
    }
  });
}

Var branch_td_loss(Tape& t, Var q, const Eigen::MatrixXi& actions, const Matrix& targets,
                   const std::vector<std::vector<char>>& valid_by_row, const Vector& row_weight) {
  const Matrix& Q = t.value(q);
  const Eigen::Index branches = actions.cols();
  need(Q.cols() == 4 * branches && actions.rows() == Q.rows() && targets.rows() == Q.rows() &&
           targets.cols() == branches && row_weight.size() == Q.rows() &&
           static_cast<Eigen::Index>(valid_by_row.size()) == Q.rows(),
       "branch_td_loss: shape mismatch");
  Matrix coef = Matrix::Zero(Q.rows(), Q.cols());  // d loss / d q
  double loss = 0.0;
  for (Eigen::Index o = 0; o < Q.rows(); ++o)
    for (Eigen::Index s = 0; s < branches; ++s) {
      if (!valid_by_row[o][s]) continue;
      const int act = actions(o, s);
      need(act >= 0 && act < 4, "branch_td_loss: action out of range");
      const double diff = Q(o, 4 * s + act) - targets(o, s);
      loss += row_weight[o] * diff * diff;
      coef(o, 4 * s + act) = 2.0 * row_weight[o] * diff;
    }
  Matrix out(1, 1);
  out(0, 0) = loss;
  return t.push(std::move(out), {q}, [q, coef](Tape& tp, int self) { tp.grad(q) += tp.grad(Var{self})(0, 0) * coef; });
}

}  // namespace tsc::nn
