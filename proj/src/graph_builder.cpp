#include "xregion/graph_builder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "xregion/binary_io.hpp"
#include "xregion/error.hpp"

namespace xregion {
namespace {

constexpr char kSnapshotMagic[8] = {'X', 'R', 'S', 'N', 'A', 'P', '0', '1'};
constexpr std::uint32_t kSnapshotVersion = 1;

std::optional<CellId> try_locate(const HexGrid& grid, GeoPoint p) {
  try {
    return grid.locate(p);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::OutOfRange) throw;
    return std::nullopt;
  }
}

}  // namespace

int FeatureSpec::feature_dim() const {
  return history + (include_day_onehot ? 7 : 0) + (include_slot_encoding ? 2 : 0) +
         (include_relative_coords ? 2 : 0) + external_dims;
}

void FeatureSpec::validate() const {
  require(history >= 1, ErrorKind::Config, "history length h must be >= 1");
  require(external_dims >= 0, ErrorKind::Config, "external_dims must be >= 0");
}

nlohmann::json FeatureSpec::to_json() const {
  return {{"history", history},
          {"include_day_onehot", include_day_onehot},
          {"include_slot_encoding", include_slot_encoding},
          {"include_relative_coords", include_relative_coords},
          {"external_dims", external_dims}};
}

FeatureSpec FeatureSpec::from_json(const nlohmann::json& j) {
  FeatureSpec s;
  s.history = j.at("history").get<int>();
  s.include_day_onehot = j.at("include_day_onehot").get<bool>();
  s.include_slot_encoding = j.at("include_slot_encoding").get<bool>();
  s.include_relative_coords = j.at("include_relative_coords").get<bool>();
  s.external_dims = j.at("external_dims").get<int>();
  s.validate();
  return s;
}

EdgeWeights build_adjacency(const HexGrid& grid, const RegionDataset& region, std::optional<TimeRange> window) {
  std::map<std::pair<CellId, CellId>, double> volume;
  for (const auto& trip : region.trips) {
    if (!trip.has_dropoff_location()) continue;
    if (window && (trip.pickup_time < window->begin || trip.pickup_time >= window->end)) continue;
    auto u = try_locate(grid, trip.pickup());
    auto v = try_locate(grid, trip.dropoff());
    if (!u || !v || *u == *v || !grid.are_adjacent(*u, *v)) continue;
    volume[{std::min(*u, *v), std::max(*u, *v)}] += 1.0;
  }
  EdgeWeights weights;
  for (CellId u = 0; u < grid.size(); ++u) {
    for (CellId v : grid.neighbors(u)) {
      auto it = volume.find({std::min(u, v), std::max(u, v)});
      weights[{u, v}] = 1.0 + (it == volume.end() ? 0.0 : it->second);
    }
  }
  return weights;
}

SparseMatrix normalize_adjacency(const EdgeWeights& weights, std::size_t num_nodes) {
  std::vector<double> degree(num_nodes, 1.0);
  std::vector<double> self(num_nodes, 1.0);
  for (const auto& [key, w] : weights) {
    const auto [u, v] = key;
    require(u < num_nodes && v < num_nodes, ErrorKind::Contract, "edge endpoint out of range");
    require(std::isfinite(w) && w >= 0.0, ErrorKind::Contract, "edge weights must be finite and non-negative");
    auto rev = weights.find({v, u});
    require(rev != weights.end() && rev->second == w, ErrorKind::Contract, "adjacency weights are not symmetric");
    degree[u] += w;
    if (u == v) self[u] += w;
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(weights.size() + num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), self[i] / degree[i]);
  }
  for (const auto& [key, w] : weights) {
    const auto [u, v] = key;
    if (u == v || w == 0.0) continue;
    triplets.emplace_back(static_cast<int>(u), static_cast<int>(v), w / std::sqrt(degree[u] * degree[v]));
  }
  SparseMatrix a(static_cast<Eigen::Index>(num_nodes), static_cast<Eigen::Index>(num_nodes));
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();
  return a;
}

std::shared_ptr<const GraphTopology> make_topology(EdgeWeights weights, std::size_t num_nodes) {
  auto topo = std::make_shared<GraphTopology>();
  topo->num_nodes = num_nodes;
  topo->adjacency_norm = normalize_adjacency(weights, num_nodes);
  const auto n = static_cast<Eigen::Index>(num_nodes);
  topo->adjacency_binary = Matrix::Identity(n, n);
  for (const auto& [key, w] : weights) {
    if (w > 0.0) topo->adjacency_binary(key.first, key.second) = 1.0;
  }
  topo->edge_weights_raw = std::move(weights);
  return topo;
}

std::shared_ptr<const GraphTopology> build_topology(const HexGrid& grid, const RegionDataset& region,
                                                    std::optional<TimeRange> window) {
  return make_topology(build_adjacency(grid, region, window), grid.size());
}

double lag_scale(const DemandTensor& demand, std::int64_t slot_begin, std::int64_t slot_end) {
  slot_begin = std::max<std::int64_t>(slot_begin, 0);
  slot_end = std::min(slot_end, demand.num_slots());
  std::int32_t best = 0;
  for (CellId c = 0; c < demand.num_cells(); ++c) {
    for (std::int64_t k = slot_begin; k < slot_end; ++k) best = std::max(best, demand.at(c, k));
  }
  return std::max(1.0, static_cast<double>(best));
}

Matrix node_features(const DemandTensor& demand, std::int64_t t, const FeatureSpec& spec, double scale,
                     const Matrix* external) {
  spec.validate();
  require(t >= spec.history - 1, ErrorKind::InsufficientHistory,
          "slot " + std::to_string(t) + " has fewer than h=" + std::to_string(spec.history) + " preceding slots");
  require(t < demand.num_slots(), ErrorKind::OutOfRange, "slot beyond the demand tensor");
  require(scale > 0.0, ErrorKind::Contract, "lag scale must be positive");
  const auto v = static_cast<Eigen::Index>(demand.num_cells());
  if (spec.external_dims > 0) {
    require(external != nullptr && external->rows() == v && external->cols() == spec.external_dims,
            ErrorKind::Contract, "external feature matrix must be V x external_dims");
  }
  Matrix x = Matrix::Zero(v, spec.feature_dim());
  const UnixSeconds start = demand.slot_start(t);
  const int dow = day_of_week(start, demand.utc_offset_minutes());
  const double angle = 2.0 * std::numbers::pi * minutes_into_day(start, demand.utc_offset_minutes()) / 1440.0;
  for (Eigen::Index i = 0; i < v; ++i) {
    const auto cell = static_cast<CellId>(i);
    int col = 0;
    for (int lag = 0; lag < spec.history; ++lag) {
      x(i, col++) = demand.at(cell, t - spec.history + 1 + lag) / scale;
    }
    if (spec.include_day_onehot) {
      x(i, col + dow) = 1.0;
      col += 7;
    }
    if (spec.include_slot_encoding) {
      x(i, col++) = std::sin(angle);
      x(i, col++) = std::cos(angle);
    }
    if (spec.include_relative_coords) {
      auto [rl, rn] = demand.grid().relative_coords(demand.grid().cell(cell).centroid);
      x(i, col++) = rl;
      x(i, col++) = rn;
    }
    for (int e = 0; e < spec.external_dims; ++e) x(i, col++) = (*external)(i, e);
  }
  require(x.allFinite(), ErrorKind::Numerical, "non-finite node features");
  return x;
}

RegionGraph build_snapshot(const DemandTensor& demand, std::shared_ptr<const GraphTopology> topology, std::int64_t t,
                           const FeatureSpec& spec, double scale, const Matrix* external) {
  require(topology != nullptr && topology->num_nodes == demand.num_cells(), ErrorKind::Contract,
          "topology does not match the demand tensor");
  require(t + 1 < demand.num_slots(), ErrorKind::InsufficientHistory,
          "slot " + std::to_string(t) + " has no next-slot target");
  RegionGraph g;
  g.region_id = demand.region_id();
  g.node_features = node_features(demand, t, spec, scale, external);
  g.topology = std::move(topology);
  g.targets.resize(static_cast<Eigen::Index>(demand.num_cells()));
  for (CellId c = 0; c < demand.num_cells(); ++c) g.targets(c) = demand.at(c, t + 1);
  g.slot = t;
  return g;
}

RegionGraph build_snapshot(const DemandTensor& demand, const RegionDataset& region, std::int64_t t,
                           const FeatureSpec& spec) {
  const TimeRange window{demand.epoch(), demand.slot_start(demand.num_slots())};
  auto topo = build_topology(demand.grid(), region, window);
  return build_snapshot(demand, std::move(topo), t, spec, lag_scale(demand, 0, demand.num_slots()));
}

std::pair<std::int64_t, std::int64_t> snapshot_range(std::int64_t num_slots, const FeatureSpec& spec) {
  return {spec.history - 1, num_slots - 2};
}

std::vector<RegionGraph> build_snapshots(const DemandTensor& demand, std::shared_ptr<const GraphTopology> topology,
                                         const FeatureSpec& spec, double scale, int stride) {
  require(stride >= 1, ErrorKind::Config, "snapshot stride must be >= 1");
  auto [lo, hi] = snapshot_range(demand.num_slots(), spec);
  std::vector<RegionGraph> out;
  for (std::int64_t t = lo; t <= hi; t += stride) out.push_back(build_snapshot(demand, topology, t, spec, scale));
  return out;
}

void write_snapshots(const std::string& path, const std::vector<RegionGraph>& graphs, const FeatureSpec& spec) {
  std::vector<const GraphTopology*> topologies;
  std::unordered_map<const GraphTopology*, std::uint64_t> topo_index;
  for (const auto& g : graphs) {
    require(g.topology != nullptr, ErrorKind::Contract, "snapshot without topology");
    require(g.node_features.cols() == spec.feature_dim(), ErrorKind::Contract, "snapshot width differs from spec");
    if (topo_index.emplace(g.topology.get(), topologies.size()).second) topologies.push_back(g.topology.get());
  }
  BinaryWriter w;
  w.raw(kSnapshotMagic, sizeof kSnapshotMagic);
  w.u32(kSnapshotVersion);
  w.str(nlohmann::json{{"feature_spec", spec.to_json()}}.dump());
  w.u64(topologies.size());
  for (const auto* t : topologies) {
    w.u64(t->num_nodes);
    w.u64(t->edge_weights_raw.size());
    for (const auto& [key, weight] : t->edge_weights_raw) {
      w.u32(key.first);
      w.u32(key.second);
      w.f64(weight);
    }
  }
  w.u64(graphs.size());
  for (const auto& g : graphs) {
    w.str(g.region_id);
    w.u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(g.region_index)));
    w.u64(topo_index.at(g.topology.get()));
    w.u64(static_cast<std::uint64_t>(g.slot));
    w.matrix(g.node_features);
    w.matrix(g.targets);
  }
  w.save(path);
}

std::vector<RegionGraph> read_snapshots(const std::string& path, FeatureSpec* spec_out) {
  BinaryReader r = BinaryReader::load(path);
  char magic[8];
  r.raw(magic, sizeof magic);
  require(std::equal(magic, magic + 8, kSnapshotMagic), ErrorKind::DataQuality, "not a snapshot file: " + path);
  require(r.u32() == kSnapshotVersion, ErrorKind::Version, "unsupported snapshot file version: " + path);
  FeatureSpec spec;
  try {
    spec = FeatureSpec::from_json(nlohmann::json::parse(r.str()).at("feature_spec"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::DataQuality, std::string("corrupt snapshot header: ") + e.what());
  }
  std::vector<std::shared_ptr<const GraphTopology>> topologies(r.u64());
  for (auto& topo : topologies) {
    const std::size_t v = r.u64();
    const std::uint64_t n = r.u64();
    EdgeWeights weights;
    for (std::uint64_t e = 0; e < n; ++e) {
      const CellId a = r.u32(), b = r.u32();
      weights[{a, b}] = r.f64();
    }
    topo = make_topology(std::move(weights), v);
  }
  std::vector<RegionGraph> graphs(r.u64());
  for (auto& g : graphs) {
    g.region_id = r.str();
    g.region_index = static_cast<int>(static_cast<std::int64_t>(r.u64()));
    const std::uint64_t ti = r.u64();
    require(ti < topologies.size(), ErrorKind::DataQuality, "corrupt snapshot topology index: " + path);
    g.topology = topologies[ti];
    g.slot = static_cast<std::int64_t>(r.u64());
    g.node_features = r.matrix();
    g.targets = r.matrix();
    require(g.node_features.cols() == spec.feature_dim() &&
                static_cast<std::size_t>(g.node_features.rows()) == g.topology->num_nodes &&
                g.targets.rows() == g.node_features.rows(),
            ErrorKind::DataQuality, "corrupt snapshot shapes: " + path);
  }
  if (spec_out) *spec_out = spec;
  return graphs;
}

}  // namespace xregion
