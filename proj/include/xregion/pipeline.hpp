#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xregion/config.hpp"
#include "xregion/evaluation.hpp"
#include "xregion/graph_builder.hpp"
#include "xregion/spatial_grid.hpp"
#include "xregion/training.hpp"

namespace xregion {

/// Everything derived from one region's trips: grid, demand, topology and snapshots.
struct PreparedRegion {
  std::string region_id;
  RegionDataset dataset;
  std::shared_ptr<const HexGrid> grid;
  std::shared_ptr<const DemandTensor> demand;
  std::shared_ptr<const GraphTopology> topology;
  double lag_scale = 1.0;
  CountReport counts;
  std::vector<RegionGraph> snapshots;
};

struct PrepareOptions {
  std::optional<UnixSeconds> epoch;       // default: local midnight of the first pickup
  std::optional<std::int64_t> num_slots;  // default: through the slot of the last pickup
  int stride = 1;
};

/// Grid over the region polygon, demand over the whole window, edge weights
/// and lag scale from that same window, then every valid snapshot.
PreparedRegion prepare_region(RegionDataset dataset, double edge_km, int interval_min, const FeatureSpec& spec,
                              const PrepareOptions& options = {});

/// Region datasets named by the config: generated when synthetic, otherwise
/// ingested from the listed files and clipped to their polygons.
std::vector<RegionDataset> load_region_datasets(const RunConfig& config, std::vector<IngestReport>* reports = nullptr);

/// Prepares every region of the config in config order.
std::vector<PreparedRegion> prepare_regions(const RunConfig& config);

struct AcceptanceCheck {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double bound = 0.0;
  nlohmann::json to_json() const;
};

struct HoldOutRun {
  SplitPlan plan;
  TrainResult training;
  MetricsReport report;
  double probe_agnostic = 0.0;
  double probe_specific = 0.0;
  std::vector<AcceptanceCheck> checks;
};

struct E2EResult {
  std::vector<HoldOutRun> runs;
  bool all_passed() const;
};

/// Stage names and what each will do, without executing anything.
std::vector<std::string> e2e_plan(const RunConfig& config);

/// synth or ingest, grid, snapshots, leave-one-region-out training, evaluation
/// with baselines, report. Writes into config.output_dir unless out_dir is given.
/// Stage failures are rethrown with the stage name and the original error kind.
E2EResult run_e2e(const RunConfig& config, std::ostream* log = nullptr, std::optional<std::string> out_dir = {});

}  // namespace xregion
