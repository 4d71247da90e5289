#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "xregion/spatial_grid.hpp"
#include "xregion/trip_ingest.hpp"

namespace xregion {

/// Gaussian bump in relative (lat, lon) coordinates of the region bounding box.
struct Hotspot {
  double rel_lat = 0.5;
  double rel_lon = 0.5;
  double amplitude = 1.0;
  double width = 0.15;
};

struct RegionStyle {
  std::string region_id;
  GeoPoint center;
  std::vector<Hotspot> hotspots;
  double intensity_scale = 1.0;
  int phase_shift_slots = 0;
};

struct SynthConfig {
  int n_regions = 4;
  int grid_diameter_cells = 8;
  double edge_km = 1.4;
  int days = 14;
  int interval_min = 30;
  double base_intensity = 2.0;
  double background_level = 0.2;  // spatial kernel floor outside hotspots
  std::vector<double> shared_daily_profile;
  std::vector<RegionStyle> styles;
  std::uint64_t seed = 7;
  UnixSeconds start = 1451865600;  // 2016-01-04T00:00:00Z, a Monday

  static SynthConfig defaults();
  int slots_per_day() const { return 1440 / interval_min; }
  std::int64_t num_slots() const { return std::int64_t{days} * slots_per_day(); }
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are configuration errors.
  static SynthConfig from_json(const nlohmann::json& j);
};

/// Disc-shaped region polygon, grid_diameter_cells hexagon widths across, around the style centre.
Polygon synthetic_polygon(const SynthConfig& config, int region_index);

/// Generating rates for one region; cells whose centroid lies outside the
/// region polygon have rate zero.
class RateModel {
 public:
  RateModel(const SynthConfig& config, int region_index);

  const HexGrid& grid() const { return *grid_; }
  std::shared_ptr<const HexGrid> grid_ptr() const { return grid_; }
  const Polygon& polygon() const { return polygon_; }
  double rate(CellId cell, std::int64_t slot) const;
  double spatial_kernel(CellId cell) const { return kernel_.at(cell); }
  bool active(CellId cell) const { return kernel_.at(cell) > 0.0; }

 private:
  const SynthConfig* config_;
  int region_index_;
  Polygon polygon_;
  std::shared_ptr<const HexGrid> grid_;
  std::vector<double> kernel_;
};

struct SyntheticRegion {
  RegionDataset dataset;
  std::shared_ptr<const HexGrid> grid;
  UnixSeconds epoch = 0;
  std::int64_t num_slots = 0;
  std::vector<std::int32_t> draws;  // [cell * num_slots + slot], the Poisson counts
};

/// Poisson counts per (cell, slot) materialized as trips: pickups jittered
/// around the cell centroid, dropoffs in a random active neighbour.
SyntheticRegion generate_region(const SynthConfig& config, int region_index);

/// Exact generating rate for (cell, slot).
double oracle_expected_demand(const SynthConfig& config, int region_index, CellId cell, std::int64_t slot);

/// Writes trips.csv, region.geojson and lambda.csv (cell_id,slot_of_day,lambda)
/// per region under out_dir/<region_id>/, plus synth_config.json.
void write_synthetic(const SynthConfig& config, const std::string& out_dir);

}  // namespace xregion
