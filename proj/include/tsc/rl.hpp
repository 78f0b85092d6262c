#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "tsc/ga2.hpp"
#include "tsc/nn/optim.hpp"
#include "tsc/simulator.hpp"

namespace tsc {

/// Linear decay from eps_max to eps_min over decay_steps decision steps.
struct EpsSchedule {
  double eps_max = 1.0;
  double eps_min = 0.001;
  std::int64_t decay_steps = 20000;

  double value(std::int64_t step) const;
};

/// Raw per-step inputs of the GA2 encoder.
struct RawState {
  Matrix lane;  // |L_in| x B cell counts
  Matrix itsx;  // |V_int| x 2*max|In_v| waits then waves
};

RawState observe_state(const Simulator& sim, int cells);

/// Centralized ring buffer of joint transitions; states are stored as 16-bit
/// counts. One entry carries every region's actions and rewards.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int lane_rows, int lane_cols, int itsx_rows, int itsx_cols, int regions,
               int slots);

  void add(const RawState& s, const Eigen::MatrixXi& actions, const std::vector<double>& rewards,
           const RawState& next, bool terminal);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  /// Uniform indices, without replacement within the batch.
  std::vector<std::size_t> sample_indices(std::size_t batch, std::mt19937_64& rng) const;

  /// Stacked (batch * rows) x cols state blocks for the given entries.
  void gather_states(const std::vector<std::size_t>& idx, bool next, Matrix& lane, Matrix& itsx) const;
  int action(std::size_t i, int region, int slot) const;
  double reward(std::size_t i, int region) const { return rewards_[i * regions_ + region]; }
  bool terminal(std::size_t i) const { return terminal_[i] != 0; }

 private:
  void store_state(std::vector<std::uint16_t>& dst, std::size_t slot, const RawState& s);

  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
  int lane_rows_, lane_cols_, itsx_rows_, itsx_cols_, regions_, slots_;
  std::size_t state_len_;
  std::vector<std::uint16_t> states_, next_states_;
  std::vector<std::uint8_t> actions_;
  std::vector<double> rewards_;
  std::vector<std::uint8_t> terminal_;
};

/// Shared trunk MLP (two hidden layers, leaky ReLU) and one linear 4-way
/// head per intersection slot, packed as a single hidden2 x 4S matrix.
struct QNetwork {
  nn::LinearParams l1, l2, head;
  int slots = 0;

  static QNetwork create(nn::ParamStore& store, const std::string& prefix, int in, int hidden1, int hidden2, int slots,
                         std::mt19937_64& rng);
  nn::Var forward(nn::Tape& t, nn::ParamStore& store, nn::Var obs) const;
};

struct LearnerConfig {
  Ga2Config ga2;
  int hidden1 = 256;
  int hidden2 = 128;
  bool shared_q = true;  // one Q-network for every region
  double gamma = 0.9;
  int batch = 32;
  std::size_t buffer_capacity = 200000;
  int target_sync_every = 200;  // train steps
  nn::AdamConfig adam;
};

/// Branch argmax with ties to the lowest phase id.
int argmax_phase(const double* q4);

/// Regional agents over one GA2 encoder, plus their target copies, optimiser
/// and the centralized buffer.
struct TdBatch {
  int graphs = 0;
  Matrix lane, itsx;  // stacked current states
  Matrix targets;     // (regions * graphs) x slots, region-major rows
  Eigen::MatrixXi actions;
  std::vector<std::vector<char>> valid;
  Vector weight;
};

class RegionalLearner {
 public:
  RegionalLearner(const Network& net, std::vector<PaddedRegion> regions, LearnerConfig config, std::uint64_t seed);

  int num_regions() const { return static_cast<int>(regions_.size()); }
  int slots() const { return layout_.slots; }
  int observation_width() const { return obs_width_; }
  const ObservationLayout& layout() const { return layout_; }
  const std::vector<PaddedRegion>& regions() const { return regions_; }
  const LearnerConfig& config() const { return config_; }

  /// Q-values per region (rows) and branch (4 columns per slot), online net.
  Matrix q_values(const RawState& s);
  Matrix q_values(const RawState& s, bool target);
  /// Observations of a single state, one row per region.
  Matrix observations(const RawState& s);

  /// Per-region per-slot phase ids, epsilon-greedy per branch. Dummy slots get 0.
  Eigen::MatrixXi select_actions(const RawState& s, double eps, std::mt19937_64& rng);
  std::vector<PhaseId> to_phases(const Eigen::MatrixXi& actions) const;

  void remember(const RawState& s, const Eigen::MatrixXi& actions, const std::vector<double>& rewards,
                const RawState& next, bool terminal);
  ReplayBuffer& buffer() { return buffer_; }

  /// One centralized batch update; returns each agent's mean squared TD error.
  std::vector<double> train_step(std::mt19937_64& rng);
  /// Same update on explicit buffer entries (tests).
  std::vector<double> train_on(const std::vector<std::size_t>& idx);
  /// States, actions and bootstrapped targets of buffer entries `idx`; the
  /// targets come from the target network.
  TdBatch prepare_batch(const std::vector<std::size_t>& idx);
  /// Records the batch loss on `t` against the online parameters.
  nn::Var td_loss(nn::Tape& t, const TdBatch& batch, std::vector<double>* agent_losses = nullptr);
  void sync_target();

  std::int64_t train_steps() const { return train_steps_; }
  std::int64_t target_syncs() const { return syncs_; }
  nn::ParamStore& online() { return online_; }
  const nn::ParamStore& target() const { return target_; }

 private:
  nn::Var q_forward(nn::Tape& t, nn::ParamStore& store, const Matrix& lane, const Matrix& itsx, int graphs);

  const Network* net_;
  std::vector<PaddedRegion> regions_;
  LearnerConfig config_;
  ObservationLayout layout_;
  nn::ParamStore online_;
  nn::ParamStore target_;
  std::unique_ptr<Ga2Encoder> encoder_;
  std::vector<QNetwork> qnets_;  // one when shared
  int obs_width_ = 0;
  nn::Adam adam_;
  ReplayBuffer buffer_;
  std::int64_t train_steps_ = 0;
  std::int64_t syncs_ = 0;
};

/// Ordered (phase, seconds) rotation, evaluated at decision boundaries.
class FixedTimeController {
 public:
  FixedTimeController(std::vector<std::pair<PhaseId, int>> plan, int action_interval);
  std::vector<PhaseId> act(const Network& net, std::int64_t decision_step) const;

 private:
  std::vector<std::pair<PhaseId, int>> plan_;
  int interval_;
  int cycle_ = 0;
};

/// Self-organising rule: keep the displayed phase until vehicles on lanes it
/// holds red reach `threshold` and the phase has been green for `min_green` s,
/// then switch to the phase serving most of them.
class SotlController {
 public:
  SotlController(int threshold, int min_green);
  std::vector<PhaseId> act(const Simulator& sim) const;

 private:
  int threshold_;
  int min_green_;
};

class RandomController {
 public:
  explicit RandomController(std::uint64_t seed) : rng_(seed) {}
  std::vector<PhaseId> act(const Network& net);

 private:
  std::mt19937_64 rng_;
};

}  // namespace tsc
