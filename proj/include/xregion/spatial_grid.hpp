#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xregion/geo.hpp"
#include "xregion/timeutil.hpp"
#include "xregion/trip_ingest.hpp"

namespace xregion {

using CellId = std::uint32_t;

/// Axial coordinates of a pointy-top hexagon.
struct Axial {
  int q = 0;
  int r = 0;
  friend auto operator<=>(const Axial&, const Axial&) = default;
};

struct Cell {
  CellId id = 0;
  Axial axial;
  Vec2 center_km;    // in the grid's local projection
  GeoPoint centroid;
};

/// Pointy-top hexagonal tessellation on a local azimuthal-equidistant projection
/// centred on the bounding-box centre of the covered polygon. Cells are every
/// hexagon whose interior overlaps the polygon, numbered in (r, q) order.
class HexGrid {
 public:
  static HexGrid build(const Polygon& bbox, double edge_km);

  GeoPoint origin() const { return projection_.origin(); }
  double edge_km() const { return edge_km_; }
  const Polygon& bbox() const { return bbox_; }
  const std::vector<Cell>& cells() const { return cells_; }
  std::size_t size() const { return cells_.size(); }
  const Cell& cell(CellId id) const { return cells_.at(id); }
  const LocalProjection& projection() const { return projection_; }

  std::optional<CellId> find(Axial a) const;
  /// Axial neighbours present in the grid, ascending by id.
  std::vector<CellId> neighbors(CellId id) const;
  bool is_interior(CellId id) const { return neighbors(id).size() == 6; }
  bool are_adjacent(CellId a, CellId b) const;

  PlanarPolygon hexagon_km(CellId id) const;
  Vec2 axial_center_km(Axial a) const;
  static Axial axial_neighbor(Axial a, int direction);

  /// True when the projected point lies in the closed hexagon of the cell.
  bool hexagon_contains(CellId id, Vec2 p_km) const;

  /// Cell containing the point; shared-edge ties go to the smallest id.
  CellId locate(GeoPoint p) const;

  /// Relative position of a point inside the polygon bounding box, clamped to [0, 1].
  std::pair<double, double> relative_coords(GeoPoint p) const;

  nlohmann::json to_json() const;
  static HexGrid from_json(const nlohmann::json& j);

 private:
  HexGrid(Polygon bbox, double edge_km);
  void add_cells(std::vector<Axial> axials);

  Polygon bbox_;
  double edge_km_;
  LocalProjection projection_;
  std::vector<Cell> cells_;
  std::map<Axial, CellId> index_;
};

/// Slot ordinal k = floor((ts - epoch) / interval).
std::int64_t bin_time(UnixSeconds ts, int interval_min, UnixSeconds epoch);

/// Local midnight of the day of the earliest pickup, as UTC.
UnixSeconds default_epoch(const RegionDataset& region);

struct CountReport {
  std::size_t counted = 0;
  std::size_t out_of_window = 0;
  std::size_t outside_grid = 0;
};

/// Pickup counts per (cell, slot).
class DemandTensor {
 public:
  DemandTensor(std::string region_id, std::shared_ptr<const HexGrid> grid, int interval_min, UnixSeconds epoch,
               std::int64_t num_slots, int utc_offset_minutes = 0);

  const std::string& region_id() const { return region_id_; }
  const HexGrid& grid() const { return *grid_; }
  std::shared_ptr<const HexGrid> grid_ptr() const { return grid_; }
  int interval_min() const { return interval_min_; }
  UnixSeconds epoch() const { return epoch_; }
  std::int64_t num_slots() const { return num_slots_; }
  std::size_t num_cells() const { return grid_->size(); }
  int utc_offset_minutes() const { return utc_offset_minutes_; }
  UnixSeconds slot_start(std::int64_t k) const { return epoch_ + k * interval_min_ * 60; }

  std::int32_t at(CellId cell, std::int64_t slot) const { return values_[index(cell, slot)]; }
  std::int32_t& at(CellId cell, std::int64_t slot) { return values_[index(cell, slot)]; }
  std::int64_t total() const;
  std::int32_t max_value() const;
  const std::vector<std::int32_t>& values() const { return values_; }

  friend bool operator==(const DemandTensor& a, const DemandTensor& b);

 private:
  std::size_t index(CellId cell, std::int64_t slot) const;

  std::string region_id_;
  std::shared_ptr<const HexGrid> grid_;
  int interval_min_;
  UnixSeconds epoch_;
  std::int64_t num_slots_;
  int utc_offset_minutes_;
  std::vector<std::int32_t> values_;
};

DemandTensor count_demand(const RegionDataset& region, std::shared_ptr<const HexGrid> grid, int interval_min,
                          UnixSeconds epoch, std::int64_t num_slots, CountReport* report = nullptr);

/// Writes grid.json (grid descriptor + tensor metadata) and demand.csv
/// (cell_id,slot,count for non-zero entries) into dir.
void write_demand(const DemandTensor& demand, const std::string& dir);
DemandTensor read_demand(const std::string& dir);

}  // namespace xregion
