#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xregion/linalg.hpp"
#include "xregion/spatial_grid.hpp"
#include "xregion/trip_ingest.hpp"

namespace xregion {

/// Layout of the per-node feature vector:
/// [h demand lags | 7 day-of-week one-hot | sin, cos time of day | rel lat, rel lon | external].
struct FeatureSpec {
  int history = 6;
  bool include_day_onehot = true;
  bool include_slot_encoding = true;
  bool include_relative_coords = true;
  int external_dims = 0;

  int feature_dim() const;
  void validate() const;
  nlohmann::json to_json() const;
  static FeatureSpec from_json(const nlohmann::json& j);
  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

/// Symmetric raw edge weights keyed by (u, v); both orientations are stored.
using EdgeWeights = std::map<std::pair<CellId, CellId>, double>;

/// Half-open UTC interval of pickup times that contribute to edge weights.
struct TimeRange {
  UnixSeconds begin;
  UnixSeconds end;
};

/// weight(u, v) = 1 + trips u->v + trips v->u for every adjacent pair.
EdgeWeights build_adjacency(const HexGrid& grid, const RegionDataset& region,
                            std::optional<TimeRange> window = std::nullopt);

/// D^-1/2 (A + I) D^-1/2. Throws a contract violation for asymmetric or negative weights.
SparseMatrix normalize_adjacency(const EdgeWeights& weights, std::size_t num_nodes);

/// Region-level structure shared by every snapshot of that region.
struct GraphTopology {
  std::size_t num_nodes = 0;
  EdgeWeights edge_weights_raw;
  SparseMatrix adjacency_norm;
  Matrix adjacency_binary;  // 0/1 with self-loops, reconstruction target
};

std::shared_ptr<const GraphTopology> make_topology(EdgeWeights weights, std::size_t num_nodes);
std::shared_ptr<const GraphTopology> build_topology(const HexGrid& grid, const RegionDataset& region,
                                                    std::optional<TimeRange> window = std::nullopt);

struct RegionGraph {
  std::string region_id;
  int region_index = -1;  // position in the training vocabulary, -1 when unseen
  Matrix node_features;   // V x d
  std::shared_ptr<const GraphTopology> topology;
  Vector targets;         // raw counts y_{t+1}
  std::int64_t slot = 0;  // prediction time t

  std::size_t num_nodes() const { return static_cast<std::size_t>(node_features.rows()); }
  const SparseMatrix& adjacency_norm() const { return topology->adjacency_norm; }
};

/// Maximum count over slots [begin, end), floored at 1 so lags stay finite.
double lag_scale(const DemandTensor& demand, std::int64_t slot_begin, std::int64_t slot_end);

Matrix node_features(const DemandTensor& demand, std::int64_t t, const FeatureSpec& spec, double lag_scale,
                     const Matrix* external = nullptr);

RegionGraph build_snapshot(const DemandTensor& demand, std::shared_ptr<const GraphTopology> topology, std::int64_t t,
                           const FeatureSpec& spec, double lag_scale, const Matrix* external = nullptr);

RegionGraph build_snapshot(const DemandTensor& demand, const RegionDataset& region, std::int64_t t,
                           const FeatureSpec& spec);

/// Valid prediction times are t in [h-1, K-2].
std::pair<std::int64_t, std::int64_t> snapshot_range(std::int64_t num_slots, const FeatureSpec& spec);

std::vector<RegionGraph> build_snapshots(const DemandTensor& demand, std::shared_ptr<const GraphTopology> topology,
                                         const FeatureSpec& spec, double lag_scale, int stride = 1);

/// Packed binary dataset of snapshots (features, targets, topology per region).
void write_snapshots(const std::string& path, const std::vector<RegionGraph>& graphs, const FeatureSpec& spec);
std::vector<RegionGraph> read_snapshots(const std::string& path, FeatureSpec* spec = nullptr);

}  // namespace xregion
