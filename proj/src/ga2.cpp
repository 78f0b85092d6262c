#include "tsc/ga2.hpp"

#include <stdexcept>

namespace tsc {

MaskKind mask_kind_from_string(const std::string& name) {
  if (name == "naive") return MaskKind::Naive;
  if (name == "aug" || name == "augmented") return MaskKind::Augmented;
  throw ValidationError({"unknown mask '" + name + "' (expected naive|aug)"});
}

const char* to_string(MaskKind m) { return m == MaskKind::Naive ? "naive" : "aug"; }

Ga2Encoder::Ga2Encoder(const Network& net, const Ga2Config& config, nn::ParamStore& store, std::mt19937_64& rng)
    : Ga2Encoder(config.mask == MaskKind::Naive ? naive_movement_mask(net).values
                                                : augmented_movement_mask(net).values,
                 intersection_adjacency(net).values, 2 * net.max_incoming_lanes(), config, store, rng) {}

Ga2Encoder::Ga2Encoder(const Matrix& lane_mask, const Matrix& itsx_mask, int itsx_features, const Ga2Config& config,
                       nn::ParamStore& store, std::mt19937_64& rng)
    : config_(config), itsx_features_(itsx_features) {
  if (config.cells < 1 || config.heads < 1) throw ValidationError({"GA2 needs cells >= 1 and heads >= 1"});
  lane_adj_ = std::make_shared<const nn::Adjacency>(nn::Adjacency::from_mask(lane_mask));
  itsx_adj_ = std::make_shared<const nn::Adjacency>(nn::Adjacency::from_mask(itsx_mask));
  init(store, rng);
}

void Ga2Encoder::init(nn::ParamStore& store, std::mt19937_64& rng) {
  const int K = config_.heads;
  lane1_ = nn::add_gat_layer(store, "ga2.lane1", config_.cells, config_.lane_hidden1, K, rng);
  lane2_ = nn::add_gat_layer(store, "ga2.lane2", lane1_.out_width(), config_.lane_hidden2, K, rng);
  itsx1_ = nn::add_gat_layer(store, "ga2.itsx1", itsx_features_, config_.itsx_hidden1, K, rng);
  itsx2_ = nn::add_gat_layer(store, "ga2.itsx2", itsx1_.out_width(), config_.itsx_hidden2, K, rng);
}

nn::Var Ga2Encoder::embed_lane_states(nn::Tape& t, nn::ParamStore& store, nn::Var s_lane, int graphs) const {
  const Matrix& s = t.value(s_lane);
  if (s.rows() != static_cast<Eigen::Index>(graphs) * num_lanes() || s.cols() != config_.cells)
    throw std::invalid_argument("embed_lane_states: expected (graphs*|L_in|) x B input");
  const nn::Var h1 = nn::gat_layer(t, store, lane1_, s_lane, lane_adj_, graphs, config_.kernel);
  return nn::gat_layer(t, store, lane2_, h1, lane_adj_, graphs, config_.kernel);
}

nn::Var Ga2Encoder::embed_itsx_states(nn::Tape& t, nn::ParamStore& store, nn::Var s_itsx, int graphs) const {
  const Matrix& s = t.value(s_itsx);
  if (s.rows() != static_cast<Eigen::Index>(graphs) * num_intersections() || s.cols() != itsx_features_)
    throw std::invalid_argument("embed_itsx_states: expected (graphs*|V|) x 2*max|In_v| input");
  const nn::Var h1 = nn::gat_layer(t, store, itsx1_, s_itsx, itsx_adj_, graphs, config_.kernel);
  return nn::gat_layer(t, store, itsx2_, h1, itsx_adj_, graphs, config_.kernel);
}

ObservationLayout observation_layout(const Network& net, const std::vector<PaddedRegion>& regions) {
  ObservationLayout out;
  if (regions.empty()) return out;
  out.slots = static_cast<int>(regions[0].slots.size());
  out.lanes_per_slot = static_cast<int>(regions[0].lane_slots[0].size());
  const int R = static_cast<int>(regions.size());
  out.lane_rows.resize(R, out.slots * out.lanes_per_slot);
  out.itsx_rows.resize(R, out.slots);
  for (int r = 0; r < R; ++r) {
    const auto& p = regions[r];
    if (static_cast<int>(p.slots.size()) != out.slots)
      throw std::invalid_argument("observation_layout: regions padded to different sizes");
    std::vector<char> valid;
    for (int s = 0; s < out.slots; ++s) {
      const int v = p.slots[s];
      if (v >= net.num_internal()) throw std::invalid_argument("observation_layout: unknown intersection");
      out.itsx_rows(r, s) = v;
      valid.push_back(v >= 0);
      for (int k = 0; k < out.lanes_per_slot; ++k) out.lane_rows(r, s * out.lanes_per_slot + k) = p.lane_slots[s][k];
    }
    out.slot_valid.push_back(std::move(valid));
  }
  return out;
}

nn::Var build_observations(nn::Tape& t, nn::Var h_lane, nn::Var h_itsx, const ObservationLayout& layout, int graphs,
                           int lanes_per_graph, int itsx_per_graph, const std::vector<int>& region_ids) {
  std::vector<int> ids = region_ids;
  if (ids.empty())
    for (int r = 0; r < layout.regions(); ++r) ids.push_back(r);
  if (t.value(h_lane).rows() != static_cast<Eigen::Index>(graphs) * lanes_per_graph ||
      t.value(h_itsx).rows() != static_cast<Eigen::Index>(graphs) * itsx_per_graph)
    throw std::invalid_argument("build_observations: embedding rows do not match graphs");
  const int rows = static_cast<int>(ids.size()) * graphs;
  Eigen::MatrixXi li(rows, layout.lane_rows.cols());
  Eigen::MatrixXi ii(rows, layout.itsx_rows.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const int r = ids[k];
    if (r < 0 || r >= layout.regions()) throw std::invalid_argument("build_observations: unknown region");
    for (int g = 0; g < graphs; ++g) {
      const int o = static_cast<int>(k) * graphs + g;
      for (Eigen::Index b = 0; b < li.cols(); ++b) {
        const int l = layout.lane_rows(r, b);
        li(o, b) = l < 0 ? -1 : g * lanes_per_graph + l;
      }
      for (Eigen::Index b = 0; b < ii.cols(); ++b) {
        const int v = layout.itsx_rows(r, b);
        ii(o, b) = v < 0 ? -1 : g * itsx_per_graph + v;
      }
    }
  }
  const nn::Var parts[] = {nn::gather_blocks(t, h_lane, li), nn::gather_blocks(t, h_itsx, ii)};
  return nn::hconcat(t, parts);
}

std::vector<Vector> build_observations(const Matrix& h_lane, const Matrix& h_itsx, const ObservationLayout& layout) {
  nn::Tape t(false);
  const nn::Var obs = build_observations(t, t.constant(h_lane), t.constant(h_itsx), layout, 1,
                                         static_cast<int>(h_lane.rows()), static_cast<int>(h_itsx.rows()));
  std::vector<Vector> out;
  for (int r = 0; r < layout.regions(); ++r) out.push_back(t.value(obs).row(r).transpose());
  return out;
}

}  // namespace tsc
