#include "tsc/rl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace tsc {

double EpsSchedule::value(std::int64_t step) const {
  if (step >= decay_steps) return eps_min;
  if (step <= 0) return eps_max;
  const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
  return std::max(eps_min, eps_max - (eps_max - eps_min) * frac);
}

RawState observe_state(const Simulator& sim, int cells) { return {lane_cell_matrix(sim, cells), macro_state(sim)}; }

ReplayBuffer::ReplayBuffer(std::size_t capacity, int lane_rows, int lane_cols, int itsx_rows, int itsx_cols,
                           int regions, int slots)
    : capacity_(capacity),
      lane_rows_(lane_rows),
      lane_cols_(lane_cols),
      itsx_rows_(itsx_rows),
      itsx_cols_(itsx_cols),
      regions_(regions),
      slots_(slots),
      state_len_(static_cast<std::size_t>(lane_rows) * lane_cols + static_cast<std::size_t>(itsx_rows) * itsx_cols) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::store_state(std::vector<std::uint16_t>& dst, std::size_t slot, const RawState& s) {
  if (s.lane.rows() != lane_rows_ || s.lane.cols() != lane_cols_ || s.itsx.rows() != itsx_rows_ ||
      s.itsx.cols() != itsx_cols_)
    throw std::invalid_argument("ReplayBuffer: state shape mismatch");
  if (dst.size() < (slot + 1) * state_len_) dst.resize((slot + 1) * state_len_);
  std::uint16_t* out = dst.data() + slot * state_len_;
  auto put = [&out](const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        if (v < 0 || v > 65535 || v != std::floor(v))
          throw std::invalid_argument("ReplayBuffer: states must be small non-negative counts");
        *out++ = static_cast<std::uint16_t>(v);
      }
  };
  put(s.lane);
  put(s.itsx);
}

void ReplayBuffer::add(const RawState& s, const Eigen::MatrixXi& actions, const std::vector<double>& rewards,
                       const RawState& next, bool terminal) {
  if (actions.rows() != regions_ || actions.cols() != slots_ || static_cast<int>(rewards.size()) != regions_)
    throw std::invalid_argument("ReplayBuffer: actions or rewards do not cover every region");
  const std::size_t i = head_;
  store_state(states_, i, s);
  store_state(next_states_, i, next);
  const std::size_t na = static_cast<std::size_t>(regions_) * slots_;
  if (actions_.size() < (i + 1) * na) actions_.resize((i + 1) * na);
  for (int r = 0; r < regions_; ++r)
    for (int k = 0; k < slots_; ++k) {
      const int a = actions(r, k);
      if (a < 0 || a >= kNumPhases) throw std::invalid_argument("ReplayBuffer: action out of range");
      actions_[i * na + r * slots_ + k] = static_cast<std::uint8_t>(a);
    }
  if (rewards_.size() < (i + 1) * regions_) rewards_.resize((i + 1) * regions_);
  std::copy(rewards.begin(), rewards.end(), rewards_.begin() + static_cast<std::ptrdiff_t>(i * regions_));
  if (terminal_.size() < i + 1) terminal_.resize(i + 1);
  terminal_[i] = terminal ? 1 : 0;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, std::mt19937_64& rng) const {
  if (size_ == 0) throw std::logic_error("ReplayBuffer: sampling from an empty buffer");
  if (batch > size_) throw std::logic_error("ReplayBuffer: batch larger than buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> out;
  std::unordered_set<std::size_t> seen;
  while (out.size() < batch) {
    const std::size_t i = pick(rng);
    if (seen.insert(i).second) out.push_back(i);
  }
  return out;
}

void ReplayBuffer::gather_states(const std::vector<std::size_t>& idx, bool next, Matrix& lane, Matrix& itsx) const {
  const auto& src = next ? next_states_ : states_;
  const auto G = static_cast<Eigen::Index>(idx.size());
  lane.resize(G * lane_rows_, lane_cols_);
  itsx.resize(G * itsx_rows_, itsx_cols_);
  for (Eigen::Index g = 0; g < G; ++g) {
    if (idx[g] >= size_) throw std::out_of_range("ReplayBuffer: index beyond stored transitions");
    const std::uint16_t* p = src.data() + idx[g] * state_len_;
    for (int r = 0; r < lane_rows_; ++r)
      for (int c = 0; c < lane_cols_; ++c) lane(g * lane_rows_ + r, c) = *p++;
    for (int r = 0; r < itsx_rows_; ++r)
      for (int c = 0; c < itsx_cols_; ++c) itsx(g * itsx_rows_ + r, c) = *p++;
  }
}

int ReplayBuffer::action(std::size_t i, int region, int slot) const {
  return actions_[i * static_cast<std::size_t>(regions_) * slots_ + region * slots_ + slot];
}

QNetwork QNetwork::create(nn::ParamStore& store, const std::string& prefix, int in, int hidden1, int hidden2,
                          int slots, std::mt19937_64& rng) {
  QNetwork q;
  q.l1 = nn::add_linear(store, prefix + ".l1", in, hidden1, rng);
  q.l2 = nn::add_linear(store, prefix + ".l2", hidden1, hidden2, rng);
  q.head = nn::add_linear(store, prefix + ".head", hidden2, 4 * slots, rng);
  q.slots = slots;
  return q;
}

nn::Var QNetwork::forward(nn::Tape& t, nn::ParamStore& store, nn::Var obs) const {
  if (t.value(obs).cols() != store[l1.W].value.rows())
    throw std::invalid_argument("QNetwork: observation width " + std::to_string(t.value(obs).cols()) +
                                " != " + std::to_string(store[l1.W].value.rows()));
  const nn::Var h1 = nn::leaky_relu(t, nn::linear(t, store, l1, obs));
  const nn::Var h2 = nn::leaky_relu(t, nn::linear(t, store, l2, h1));
  return nn::linear(t, store, head, h2);
}

int argmax_phase(const double* q4) {
  int best = 0;
  for (int a = 1; a < kNumPhases; ++a)
    if (q4[a] > q4[best]) best = a;
  return best;
}

RegionalLearner::RegionalLearner(const Network& net, std::vector<PaddedRegion> regions, LearnerConfig config,
                                 std::uint64_t seed)
    : net_(&net),
      regions_(std::move(regions)),
      config_(config),
      layout_(observation_layout(net, regions_)),
      adam_(config.adam),
      buffer_(config.buffer_capacity, net.num_incoming_lanes(), config.ga2.cells, net.num_internal(),
              2 * net.max_incoming_lanes(), static_cast<int>(regions_.size()), layout_.slots) {
  if (regions_.empty()) throw std::invalid_argument("RegionalLearner: no regions");
  if (config_.batch < 1) throw std::invalid_argument("RegionalLearner: batch must be positive");
  std::mt19937_64 rng(seed);
  encoder_ = std::make_unique<Ga2Encoder>(net, config_.ga2, online_, rng);
  obs_width_ = layout_.width(encoder_->lane_width(), encoder_->itsx_width());
  if (config_.shared_q) {
    qnets_.push_back(QNetwork::create(online_, "q", obs_width_, config_.hidden1, config_.hidden2, layout_.slots, rng));
  } else {
    for (int r = 0; r < num_regions(); ++r)
      qnets_.push_back(QNetwork::create(online_, "q.r" + std::to_string(r), obs_width_, config_.hidden1,
                                        config_.hidden2, layout_.slots, rng));
  }
  target_ = online_;
}

nn::Var RegionalLearner::q_forward(nn::Tape& t, nn::ParamStore& store, const Matrix& lane, const Matrix& itsx,
                                   int graphs) {
  const nn::Var hl = encoder_->embed_lane_states(t, store, t.constant(lane), graphs);
  const nn::Var hi = encoder_->embed_itsx_states(t, store, t.constant(itsx), graphs);
  const int nl = encoder_->num_lanes();
  const int nv = encoder_->num_intersections();
  if (config_.shared_q) {
    const nn::Var obs = build_observations(t, hl, hi, layout_, graphs, nl, nv);
    return qnets_[0].forward(t, store, obs);
  }
  std::vector<nn::Var> parts;
  for (int r = 0; r < num_regions(); ++r)
    parts.push_back(qnets_[r].forward(t, store, build_observations(t, hl, hi, layout_, graphs, nl, nv, {r})));
  return nn::vconcat(t, parts);
}

Matrix RegionalLearner::q_values(const RawState& s) { return q_values(s, false); }

Matrix RegionalLearner::q_values(const RawState& s, bool target) {
  nn::Tape t(false);
  return t.value(q_forward(t, target ? target_ : online_, s.lane, s.itsx, 1));
}

Matrix RegionalLearner::observations(const RawState& s) {
  nn::Tape t(false);
  const nn::Var hl = encoder_->embed_lane_states(t, online_, t.constant(s.lane), 1);
  const nn::Var hi = encoder_->embed_itsx_states(t, online_, t.constant(s.itsx), 1);
  return t.value(build_observations(t, hl, hi, layout_, 1, encoder_->num_lanes(), encoder_->num_intersections()));
}

Eigen::MatrixXi RegionalLearner::select_actions(const RawState& s, double eps, std::mt19937_64& rng) {
  const int R = num_regions(), S = slots();
  Eigen::MatrixXi out = Eigen::MatrixXi::Zero(R, S);
  // fully random steps skip the forward pass; the draw sequence is the same
  const Matrix q = eps >= 1.0 ? Matrix::Zero(R, 4 * S) : q_values(s);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> any(0, kNumPhases - 1);
  for (int r = 0; r < R; ++r)
    for (int k = 0; k < S; ++k) {
      if (!layout_.slot_valid[r][k]) continue;
      if (coin(rng) < eps) {
        out(r, k) = any(rng);
      } else {
        const double q4[4] = {q(r, 4 * k), q(r, 4 * k + 1), q(r, 4 * k + 2), q(r, 4 * k + 3)};
        out(r, k) = argmax_phase(q4);
      }
    }
  return out;
}

std::vector<PhaseId> RegionalLearner::to_phases(const Eigen::MatrixXi& actions) const {
  std::vector<PhaseId> out(net_->num_internal(), PhaseId::NS);
  for (int r = 0; r < num_regions(); ++r)
    for (int k = 0; k < slots(); ++k)
      if (layout_.slot_valid[r][k]) out[layout_.itsx_rows(r, k)] = static_cast<PhaseId>(actions(r, k));
  return out;
}

void RegionalLearner::remember(const RawState& s, const Eigen::MatrixXi& actions, const std::vector<double>& rewards,
                               const RawState& next, bool terminal) {
  buffer_.add(s, actions, rewards, next, terminal);
}

std::vector<double> RegionalLearner::train_step(std::mt19937_64& rng) {
  if (buffer_.size() < static_cast<std::size_t>(config_.batch))
    throw std::logic_error("train_step: buffer holds fewer transitions than one batch");
  return train_on(buffer_.sample_indices(config_.batch, rng));
}

TdBatch RegionalLearner::prepare_batch(const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw std::logic_error("train_step: empty batch");
  const int G = static_cast<int>(idx.size());
  const int R = num_regions(), S = slots();

  TdBatch b;
  b.graphs = G;
  Matrix lane_next, itsx_next;
  buffer_.gather_states(idx, false, b.lane, b.itsx);
  buffer_.gather_states(idx, true, lane_next, itsx_next);

  Matrix q_next;
  {
    nn::Tape tt(false);
    q_next = tt.value(q_forward(tt, target_, lane_next, itsx_next, G));
  }
  b.targets = Matrix::Zero(R * G, S);
  b.actions = Eigen::MatrixXi::Zero(R * G, S);
  b.valid.resize(R * G);
  b.weight.resize(R * G);
  for (int r = 0; r < R; ++r) {
    const int n_valid = static_cast<int>(std::count(layout_.slot_valid[r].begin(), layout_.slot_valid[r].end(), 1));
    for (int g = 0; g < G; ++g) {
      const int o = r * G + g;
      b.valid[o] = layout_.slot_valid[r];
      b.weight[o] = n_valid > 0 ? 1.0 / (G * n_valid) : 0.0;
      for (int k = 0; k < S; ++k) {
        b.actions(o, k) = buffer_.action(idx[g], r, k);
        double y = buffer_.reward(idx[g], r);
        if (!buffer_.terminal(idx[g])) y += config_.gamma * q_next.block(o, 4 * k, 1, 4).maxCoeff();
        b.targets(o, k) = y;
      }
    }
  }
  return b;
}

nn::Var RegionalLearner::td_loss(nn::Tape& t, const TdBatch& b, std::vector<double>* agent_losses) {
  const int G = b.graphs;
  const int R = num_regions(), S = slots();
  const nn::Var q = q_forward(t, online_, b.lane, b.itsx, G);
  if (agent_losses) {
    const Matrix& qv = t.value(q);
    agent_losses->assign(R, 0.0);
    for (int o = 0; o < R * G; ++o)
      for (int k = 0; k < S; ++k)
        if (b.valid[o][k]) {
          const double d = qv(o, 4 * k + b.actions(o, k)) - b.targets(o, k);
          (*agent_losses)[o / G] += b.weight[o] * d * d;
        }
  }
  // one scalar: the sum of every agent's mean loss
  return nn::branch_td_loss(t, q, b.actions, b.targets, b.valid, b.weight);
}

std::vector<double> RegionalLearner::train_on(const std::vector<std::size_t>& idx) {
  std::vector<double> losses;
  online_.zero_grad();
  nn::Tape t;
  t.backward(td_loss(t, prepare_batch(idx), &losses));
  adam_.step(online_);

  if (++train_steps_ % config_.target_sync_every == 0) sync_target();
  return losses;
}

void RegionalLearner::sync_target() {
  target_.copy_values_from(online_);
  ++syncs_;
}

FixedTimeController::FixedTimeController(std::vector<std::pair<PhaseId, int>> plan, int action_interval)
    : plan_(std::move(plan)), interval_(action_interval) {
  if (plan_.empty()) throw ValidationError({"fixed-time plan is empty"});
  if (interval_ < 1) throw ValidationError({"action interval must be >= 1"});
  for (const auto& [p, d] : plan_) {
    if (p == PhaseId::AllRed) throw ValidationError({"fixed-time plan cannot hold the clearance phase"});
    if (d < 1) throw ValidationError({"fixed-time plan durations must be >= 1 s"});
    cycle_ += d;
  }
}

std::vector<PhaseId> FixedTimeController::act(const Network& net, std::int64_t decision_step) const {
  std::int64_t t = (decision_step * interval_) % cycle_;
  PhaseId p = plan_.back().first;
  for (const auto& [phase, d] : plan_) {
    if (t < d) {
      p = phase;
      break;
    }
    t -= d;
  }
  return std::vector<PhaseId>(net.num_internal(), p);
}

SotlController::SotlController(int threshold, int min_green) : threshold_(threshold), min_green_(min_green) {
  if (threshold < 1) throw ValidationError({"SOTL threshold must be >= 1"});
  if (min_green < 0) throw ValidationError({"SOTL min_green must be >= 0"});
}

std::vector<PhaseId> SotlController::act(const Simulator& sim) const {
  const Network& net = sim.network();
  const auto& st = sim.state();
  std::vector<PhaseId> out(net.num_internal());
  for (int v = 0; v < net.num_internal(); ++v) {
    const SignalState& s = st.signals[v];
    const PhaseId cur = s.all_red_remaining > 0 ? s.pending : s.current;
    out[v] = cur;
    if (s.all_red_remaining > 0 || s.green_elapsed < min_green_) continue;
    const auto& phases = net.phases(v);
    std::vector<char> green(net.num_incoming_lanes(), 0);
    for (int l : phases[static_cast<int>(cur)].permitted_lanes) green[l] = 1;
    int on_red = 0;
    for (int l : net.incoming_lanes(v))
      if (!green[l]) on_red += st.wave[l];
    if (on_red < threshold_) continue;
    int best = -1, best_demand = 0;
    for (int p = 0; p < kNumPhases; ++p) {
      if (p == static_cast<int>(cur)) continue;
      int demand = 0;
      for (int l : phases[p].permitted_lanes)
        if (!green[l]) demand += st.wave[l];
      if (demand > best_demand) {
        best = p;
        best_demand = demand;
      }
    }
    if (best >= 0) out[v] = static_cast<PhaseId>(best);
  }
  return out;
}

std::vector<PhaseId> RandomController::act(const Network& net) {
  std::uniform_int_distribution<int> any(0, kNumPhases - 1);
  std::vector<PhaseId> out(net.num_internal());
  for (auto& p : out) p = static_cast<PhaseId>(any(rng_));
  return out;
}

}  // namespace tsc
