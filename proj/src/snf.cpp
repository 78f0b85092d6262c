#include "tsc/snf.hpp"

#include <algorithm>
#include <stdexcept>

namespace tsc {

MaskMatrix blockage_matrix(const Network& net, std::span<const double> wave, std::span<const int> f1,
                           std::span<const int> f2) {
  MaskMatrix bm{Matrix::Zero(static_cast<Eigen::Index>(f1.size()), static_cast<Eigen::Index>(f2.size()))};
  for (std::size_t i = 0; i < f1.size(); ++i) {
    for (std::size_t j = 0; j < f2.size(); ++j) {
      if (net.find_movement(f1[i], f2[j]) < 0) continue;
      if (wave[f2[j]] < net.lane(f2[j]).capacity) bm.values(i, j) = 1.0;
    }
  }
  return bm;
}

MaskMatrix blockage_matrix(const Simulator& sim, std::span<const int> f1, std::span<const int> f2) {
  const auto& w = sim.state().wave;
  std::vector<double> wave(w.begin(), w.end());
  return blockage_matrix(sim.network(), wave, f1, f2);
}

namespace {

void check_inputs(const SnfInputs& in) {
  const auto n_in = in.x.size();
  const auto n_all = in.rp.rows();
  if (in.a.size() != n_in || in.c.size() != n_in || in.d.size() != n_in || in.rp.cols() != n_all ||
      in.m.rows() != n_in || in.m.cols() != n_all || in.bm.rows() != n_in || in.bm.cols() != n_all)
    throw std::invalid_argument("snf oracle: inconsistent dimensions");
  if ((in.x.array() < 0).any()) throw std::invalid_argument("snf oracle: negative queue");
  for (Eigen::Index r = 0; r < n_all; ++r) {
    const double s = in.rp.row(r).sum();
    if (std::abs(s - 1.0) > 1e-12 || (in.rp.row(r).array() < 0).any())
      throw std::invalid_argument("snf oracle: routing row " + std::to_string(r) + " is not stochastic");
  }
}

Eigen::VectorXi as_index(std::span<const int> ids) {
  Eigen::VectorXi v(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) v[static_cast<Eigen::Index>(i)] = ids[i];
  return v;
}

}  // namespace

SnfTerms snf_region_terms(const SnfInputs& in, std::span<const int> f_in, std::span<const int> f_in_outside) {
  check_inputs(in);
  const Eigen::VectorXi fi = as_index(f_in);
  const Eigen::VectorXi fo = as_index(f_in_outside);

  // X-hat = min(C o A, X): vehicles the signal releases from each lane.
  const Eigen::RowVectorXd x_hat = in.c.cwiseProduct(in.a).cwiseMin(in.x).transpose();
  // M-hat over unblocked movements, then redistributed by routing.
  const Matrix m_open = in.m.cwiseProduct(in.bm);
  const Matrix m_hat = m_open * in.rp;
  const Eigen::VectorXd leaves = in.bm.rowwise().sum();

  const Eigen::RowVectorXd xr = x_hat(fi);
  const Matrix m_hat_intra = m_hat(fi, fi);
  SnfTerms t;
  t.intra = (xr * m_hat_intra).transpose() - xr.transpose().cwiseProduct(leaves(fi));
  t.inter = Vector::Zero(fi.size());
  if (fo.size() > 0) {
    const Eigen::RowVectorXd xo = x_hat(fo);
    const Matrix m_hat_inter = m_hat(fo, fi);
    t.inter = (xo * m_hat_inter).transpose();
  }
  t.external = in.d(fi);
  return t;
}

Vector snf_update_oracle(const SnfInputs& in, std::span<const int> f_in, std::span<const int> f_in_outside) {
  const SnfTerms t = snf_region_terms(in, f_in, f_in_outside);
  Vector x(static_cast<Eigen::Index>(f_in.size()));
  for (std::size_t i = 0; i < f_in.size(); ++i) x[static_cast<Eigen::Index>(i)] = in.x[f_in[i]];
  return x + t.intra + t.inter + t.external;
}

Vector snf_update_oracle(const SnfInputs& in) {
  std::vector<int> all(static_cast<std::size_t>(in.x.size()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return snf_update_oracle(in, all, {});
}

std::vector<int> region_lanes(const Network& net, std::span<const int> members) {
  std::vector<int> out;
  for (int v : members)
    for (int l : net.incoming_lanes(v)) out.push_back(l);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> outside_neighbor_lanes(const Network& net, std::span<const int> members) {
  std::vector<int> outside;
  for (int v : members)
    for (int u : net.neighbors(v))
      if (std::find(members.begin(), members.end(), u) == members.end()) outside.push_back(u);
  std::sort(outside.begin(), outside.end());
  outside.erase(std::unique(outside.begin(), outside.end()), outside.end());
  return region_lanes(net, outside);
}

SnfInputs snf_inputs(const Network& net, const Routing& routing, std::span<const double> x,
                     std::span<const PhaseId> phases, std::span<const double> demand) {
  const int n_in = net.num_incoming_lanes();
  const int n_all = net.num_lanes();
  SnfInputs in;
  in.x = Eigen::Map<const Vector>(x.data(), n_in);
  in.d = Eigen::Map<const Vector>(demand.data(), n_in);
  in.a = Vector::Zero(n_in);
  in.c = Vector::Zero(n_in);
  for (int l = 0; l < n_in; ++l) {
    const auto& mvs = net.lane(l).movements;
    if (mvs.size() != 1) throw std::invalid_argument("snf_inputs: requires one movement per incoming lane");
    in.c[l] = net.movement(mvs.front()).discharge_rate;
  }
  for (int v = 0; v < net.num_internal(); ++v) {
    if (phases[v] == PhaseId::AllRed) continue;
    for (int l : net.phases(v)[static_cast<int>(phases[v])].permitted_lanes) in.a[l] = 1.0;
  }
  in.rp = routing.rp.values;
  const auto in_ids = net.all_incoming_lanes();
  std::vector<int> all_ids(n_all);
  for (int i = 0; i < n_all; ++i) all_ids[i] = i;
  in.m = movement_matrix(net, in_ids, all_ids).values;
  std::vector<double> wave(n_all, 0.0);
  for (int l = 0; l < n_in; ++l) wave[l] = x[l];
  in.bm = blockage_matrix(net, wave, in_ids, all_ids).values;
  return in;
}

FractionalFlowSim::FractionalFlowSim(const Network& net, Routing routing)
    : net_(&net), routing_(std::move(routing)), x_(net.num_incoming_lanes(), 0.0) {
  for (int l = 0; l < net.num_incoming_lanes(); ++l)
    if (net.lane(l).movements.size() != 1)
      throw std::invalid_argument("FractionalFlowSim: requires one movement per incoming lane");
}

void FractionalFlowSim::set_queues(std::vector<double> x) {
  if (x.size() != x_.size()) throw std::invalid_argument("set_queues: wrong size");
  x_ = std::move(x);
}

std::vector<double> FractionalFlowSim::green_flags(std::span<const PhaseId> phases) const {
  std::vector<double> a(x_.size(), 0.0);
  for (int v = 0; v < net_->num_internal(); ++v) {
    if (phases[v] == PhaseId::AllRed) continue;
    for (int l : net_->phases(v)[static_cast<int>(phases[v])].permitted_lanes) a[l] = 1.0;
  }
  return a;
}

void FractionalFlowSim::step(std::span<const double> green, std::span<const double> demand) {
  const int n_in = net_->num_incoming_lanes();
  std::vector<double> next = x_;
  for (int l = 0; l < n_in; ++l) {
    const Movement& mv = net_->movement(net_->lane(l).movements.front());
    const int m = mv.to_lane;
    const bool room = !net_->lane(m).is_incoming || x_[m] < net_->lane(m).capacity;
    if (!room) continue;
    const double leaving = std::min(mv.discharge_rate * green[l], x_[l]);
    next[l] -= leaving;
    for (int k : net_->approach(net_->lane(m).approach_id).lanes) {
      if (net_->lane(k).is_incoming) next[k] += leaving * routing_.rp(m, k);
    }
  }
  for (int l = 0; l < n_in; ++l) next[l] += demand[l];
  x_ = std::move(next);
}

void FractionalFlowSim::step(std::span<const PhaseId> phases, std::span<const double> demand) {
  const auto a = green_flags(phases);
  step(a, demand);
}

}  // namespace tsc
