#include "tsc/nn/gat_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsc::nn {

Adjacency Adjacency::from_mask(const Matrix& mask) {
  if (mask.rows() != mask.cols()) throw std::invalid_argument("attention mask must be square");
  Adjacency adj;
  adj.n = static_cast<int>(mask.rows());
  adj.row_ptr.push_back(0);
  for (int i = 0; i < adj.n; ++i) {
    for (int j = 0; j < adj.n; ++j) {
      const double m = mask(i, j);
      if (m != 0.0 && m != 1.0) throw std::invalid_argument("attention mask must be binary");
      if (m == 1.0) adj.col.push_back(j);
    }
    if (static_cast<int>(adj.col.size()) == adj.row_ptr.back())
      throw std::invalid_argument("attention mask row " + std::to_string(i) + " has no neighbours");
    adj.row_ptr.push_back(static_cast<int>(adj.col.size()));
  }
  return adj;
}

namespace {

void check_shapes(const Matrix& h, const Adjacency& adj, int graphs, std::span<const Matrix> W,
                  std::span<const Matrix> a) {
  if (W.empty() || W.size() != a.size()) throw std::invalid_argument("gat: need one (W, a) pair per head");
  if (h.rows() != static_cast<Eigen::Index>(graphs) * adj.n) throw std::invalid_argument("gat: h rows != graphs * N");
  for (std::size_t k = 0; k < W.size(); ++k) {
    if (W[k].rows() != h.cols() || W[k].cols() != W[0].cols())
      throw std::invalid_argument("gat: weight shape mismatch");
    if (a[k].rows() != 2 * W[k].cols() || a[k].cols() != 1)
      throw std::invalid_argument("gat: attention vector shape mismatch");
  }
}

// Neighbour contributions are reduced in a canonical order (by logit, then by
// the neighbour's projected features) so that relabelling the nodes yields
// bit-identical rows; terms that tie on the whole key are identical anyway.
void canonical_order(const Matrix& z, Eigen::Index base, const Adjacency& adj, int b, int e,
                     const double* act, std::vector<int>& order) {
  order.resize(e - b);
  const Eigen::Index fp = z.cols();
  auto less = [&](int p, int q) {
    if (act[p] != act[q]) return act[p] < act[q];
    const double* zp = z.row(base + adj.col[p]).data();
    const double* zq = z.row(base + adj.col[q]).data();
    for (Eigen::Index c = 0; c < fp; ++c)
      if (zp[c] != zq[c]) return zp[c] < zq[c];
    return false;
  };
  // neighbourhoods are small: insertion sort
  for (int p = b; p < e; ++p) {
    int k = p - b;
    while (k > 0 && less(p, order[k - 1])) {
      order[k] = order[k - 1];
      --k;
    }
    order[k] = p;
  }
}

void head_forward(const Matrix& h, const Adjacency& adj, int graphs, const Matrix& W, const Matrix& a,
                  Matrix& out, Eigen::Index col0, GatHeadCache& c) {
  const Eigen::Index fp = W.cols();
  const Eigen::Index fin = W.rows();
  const Eigen::Index rows = h.rows();
  const double* a_src = a.data();
  const double* a_dst = a.data() + fp;
  // row-at-a-time products keep each row's bits independent of its position
  c.z.resize(rows, fp);
  std::vector<double> s_src(rows), s_dst(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double* zr = c.z.row(r).data();
    const double* hr = h.row(r).data();
    std::fill(zr, zr + fp, 0.0);
    for (Eigen::Index k = 0; k < fin; ++k) {
      const double hk = hr[k];
      const double* wk = W.row(k).data();
      for (Eigen::Index f = 0; f < fp; ++f) zr[f] += hk * wk[f];
    }
    double ss = 0.0, sd = 0.0;
    for (Eigen::Index f = 0; f < fp; ++f) {
      ss += zr[f] * a_src[f];
      sd += zr[f] * a_dst[f];
    }
    s_src[r] = ss;
    s_dst[r] = sd;
  }
  const std::size_t e_per_graph = adj.nnz();
  c.pre.assign(e_per_graph * graphs, 0.0);
  c.alpha.assign(e_per_graph * graphs, 0.0);
  std::vector<double> act(e_per_graph);
  std::vector<int> order;
  for (int g = 0; g < graphs; ++g) {
    const Eigen::Index base = static_cast<Eigen::Index>(g) * adj.n;
    const std::size_t ebase = e_per_graph * g;
    for (int i = 0; i < adj.n; ++i) {
      const int b = adj.row_ptr[i], e = adj.row_ptr[i + 1];
      double mx = -INFINITY;
      for (int p = b; p < e; ++p) {
        const double pre = s_src[base + i] + s_dst[base + adj.col[p]];
        c.pre[ebase + p] = pre;
        act[p] = pre > 0 ? pre : kLeakySlope * pre;
        mx = std::max(mx, act[p]);
      }
      canonical_order(c.z, base, adj, b, e, act.data(), order);
      double sum = 0.0;
      for (int p : order) {
        const double ex = std::exp(act[p] - mx);
        c.alpha[ebase + p] = ex;
        sum += ex;
      }
      double* row = out.row(base + i).data() + col0;
      std::fill(row, row + fp, 0.0);
      for (int p : order) {
        const double al = c.alpha[ebase + p] / sum;
        c.alpha[ebase + p] = al;
        const double* zj = c.z.row(base + adj.col[p]).data();
        for (Eigen::Index f = 0; f < fp; ++f) row[f] += al * zj[f];
      }
    }
  }
}

void head_backward(const Matrix& h, const Adjacency& adj, int graphs, const Matrix& W, const Matrix& a,
                   const GatHeadCache& c, const Matrix& dout, Eigen::Index col0, Matrix& dW, Matrix& da,
                   Matrix* dh) {
  const Eigen::Index fp = W.cols();
  const Eigen::Index rows = h.rows();
  const auto a_src = a.topRows(fp);
  const auto a_dst = a.bottomRows(fp);
  Matrix dz = Matrix::Zero(rows, fp);
  Vector ds_src = Vector::Zero(rows);
  Vector ds_dst = Vector::Zero(rows);
  const std::size_t e_per_graph = adj.nnz();
  std::vector<double> dalpha;
  for (int g = 0; g < graphs; ++g) {
    const Eigen::Index base = static_cast<Eigen::Index>(g) * adj.n;
    const std::size_t ebase = e_per_graph * g;
    for (int i = 0; i < adj.n; ++i) {
      const int b = adj.row_ptr[i], e = adj.row_ptr[i + 1];
      const double* gi = dout.row(base + i).data() + col0;
      dalpha.assign(e - b, 0.0);
      double weighted = 0.0;
      for (int p = b; p < e; ++p) {
        const Eigen::Index j = base + adj.col[p];
        const double al = c.alpha[ebase + p];
        const double* zj = c.z.row(j).data();
        double* dzj = dz.row(j).data();
        double d = 0.0;
        for (Eigen::Index f = 0; f < fp; ++f) {
          d += gi[f] * zj[f];
          dzj[f] += al * gi[f];
        }
        dalpha[p - b] = d;
        weighted += al * d;
      }
      for (int p = b; p < e; ++p) {
        const double de = c.alpha[ebase + p] * (dalpha[p - b] - weighted);
        const double dpre = c.pre[ebase + p] > 0 ? de : kLeakySlope * de;
        ds_src[base + i] += dpre;
        ds_dst[base + adj.col[p]] += dpre;
      }
    }
  }
  dz.noalias() += ds_src * a_src.transpose();
  dz.noalias() += ds_dst * a_dst.transpose();
  da.resize(2 * fp, 1);
  da.topRows(fp).noalias() = c.z.transpose() * ds_src;
  da.bottomRows(fp).noalias() = c.z.transpose() * ds_dst;
  dW.noalias() = h.transpose() * dz;
  if (dh) dh->noalias() = dz * W.transpose();
}

}  // namespace

void gat_forward(KernelMode mode, const Matrix& h, const Adjacency& adj, int graphs, std::span<const Matrix> W,
                 std::span<const Matrix> a, Matrix& out, std::vector<GatHeadCache>& cache) {
  check_shapes(h, adj, graphs, W, a);
  const int heads = static_cast<int>(W.size());
  const Eigen::Index fp = W[0].cols();
  out.resize(h.rows(), heads * fp);
  cache.resize(heads);
  if (mode == KernelMode::Parallel) {
    // heads write disjoint column blocks and caches
#pragma omp parallel for schedule(static)
    for (int k = 0; k < heads; ++k) head_forward(h, adj, graphs, W[k], a[k], out, k * fp, cache[k]);
  } else {
    for (int k = 0; k < heads; ++k) head_forward(h, adj, graphs, W[k], a[k], out, k * fp, cache[k]);
  }
}

void gat_backward(KernelMode mode, const Matrix& h, const Adjacency& adj, int graphs, std::span<const Matrix> W,
                  std::span<const Matrix> a, const std::vector<GatHeadCache>& cache, const Matrix& dout,
                  std::vector<Matrix>& dW, std::vector<Matrix>& da, Matrix* dh) {
  check_shapes(h, adj, graphs, W, a);
  const int heads = static_cast<int>(W.size());
  const Eigen::Index fp = W[0].cols();
  if (static_cast<int>(cache.size()) != heads || dout.rows() != h.rows() || dout.cols() != heads * fp)
    throw std::invalid_argument("gat backward: cache or gradient shape mismatch");
  dW.assign(heads, Matrix());
  da.assign(heads, Matrix());
  std::vector<Matrix> dh_heads(dh ? heads : 0);
  if (mode == KernelMode::Parallel) {
#pragma omp parallel for schedule(static)
    for (int k = 0; k < heads; ++k)
      head_backward(h, adj, graphs, W[k], a[k], cache[k], dout, k * fp, dW[k], da[k], dh ? &dh_heads[k] : nullptr);
  } else {
    for (int k = 0; k < heads; ++k)
      head_backward(h, adj, graphs, W[k], a[k], cache[k], dout, k * fp, dW[k], da[k], dh ? &dh_heads[k] : nullptr);
  }
  if (dh) {
    // fixed summation order keeps both modes bit-identical
    *dh = dh_heads[0];
    for (int k = 1; k < heads; ++k) *dh += dh_heads[k];
  }
}

Matrix attention_matrix(const Adjacency& adj, const GatHeadCache& cache, int g) {
  Matrix alpha = Matrix::Zero(adj.n, adj.n);
  const std::size_t ebase = adj.nnz() * g;
  for (int i = 0; i < adj.n; ++i)
    for (int p = adj.row_ptr[i]; p < adj.row_ptr[i + 1]; ++p) alpha(i, adj.col[p]) = cache.alpha[ebase + p];
  return alpha;
}

}  // namespace tsc::nn
