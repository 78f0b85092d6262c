#pragma once

#include <memory>
#include <random>
#include <vector>

#include "tsc/network.hpp"
#include "tsc/nn/layers.hpp"
#include "tsc/partition.hpp"

namespace tsc {

enum class MaskKind { Naive, Augmented };
MaskKind mask_kind_from_string(const std::string& name);
const char* to_string(MaskKind m);

struct Ga2Config {
  int cells = 5;  // B
  int heads = 8;  // K
  int lane_hidden1 = 8;
  int lane_hidden2 = 16;
  int itsx_hidden1 = 8;
  int itsx_hidden2 = 16;
  MaskKind mask = MaskKind::Naive;
  nn::KernelMode kernel = nn::KernelMode::Parallel;
};

/// Two stacked GATs over lanes (movement mask) and two over intersections
/// (adjacency with self loops). The stacks share no parameters.
class Ga2Encoder {
 public:
  Ga2Encoder(const Network& net, const Ga2Config& config, nn::ParamStore& store, std::mt19937_64& rng);
  /// Explicit masks; `itsx_features` is the macro row width.
  Ga2Encoder(const Matrix& lane_mask, const Matrix& itsx_mask, int itsx_features, const Ga2Config& config,
             nn::ParamStore& store, std::mt19937_64& rng);

  /// s_lane is (graphs * |L_in|) x B, one block of rows per stacked state.
  nn::Var embed_lane_states(nn::Tape& t, nn::ParamStore& store, nn::Var s_lane, int graphs) const;
  /// s_itsx is (graphs * |V_int|) x itsx_features.
  nn::Var embed_itsx_states(nn::Tape& t, nn::ParamStore& store, nn::Var s_itsx, int graphs) const;

  int num_lanes() const { return lane_adj_->n; }
  int num_intersections() const { return itsx_adj_->n; }
  int lane_width() const { return lane2_.out_width(); }
  int itsx_width() const { return itsx2_.out_width(); }
  int itsx_features() const { return itsx_features_; }
  const Ga2Config& config() const { return config_; }
  const nn::Adjacency& lane_adjacency() const { return *lane_adj_; }
  const nn::Adjacency& itsx_adjacency() const { return *itsx_adj_; }

 private:
  void init(nn::ParamStore& store, std::mt19937_64& rng);

  Ga2Config config_;
  int itsx_features_ = 0;
  std::shared_ptr<const nn::Adjacency> lane_adj_;
  std::shared_ptr<const nn::Adjacency> itsx_adj_;
  nn::GatLayerParams lane1_, lane2_, itsx1_, itsx2_;
};

/// Where each observation block comes from: per region, lane rows of every
/// slot (slot-major, lane order within the slot) then one intersection row
/// per slot; -1 marks dummy padding.
struct ObservationLayout {
  int slots = 0;
  int lanes_per_slot = 0;
  Eigen::MatrixXi lane_rows;  // regions x (slots * lanes_per_slot)
  Eigen::MatrixXi itsx_rows;  // regions x slots
  std::vector<std::vector<char>> slot_valid;

  int regions() const { return static_cast<int>(lane_rows.rows()); }
  int width(int lane_width, int itsx_width) const {
    return slots * lanes_per_slot * lane_width + slots * itsx_width;
  }
};

ObservationLayout observation_layout(const Network& net, const std::vector<PaddedRegion>& regions);

/// Observation rows for `region_ids` (all regions when empty) over `graphs`
/// stacked states, ordered region-major: row = k * graphs + g.
nn::Var build_observations(nn::Tape& t, nn::Var h_lane, nn::Var h_itsx, const ObservationLayout& layout, int graphs,
                           int lanes_per_graph, int itsx_per_graph, const std::vector<int>& region_ids = {});

/// Plain-matrix convenience for a single state: one vector per region.
std::vector<Vector> build_observations(const Matrix& h_lane, const Matrix& h_itsx, const ObservationLayout& layout);

}  // namespace tsc
