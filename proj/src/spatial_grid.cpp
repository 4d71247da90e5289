#include "xregion/spatial_grid.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <tuple>

#include "xregion/error.hpp"

namespace xregion {
namespace {

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kContainTolKm = 1e-9;

constexpr Axial kDirections[6] = {{1, 0}, {1, -1}, {0, -1}, {-1, 0}, {-1, 1}, {0, 1}};

GeoPoint bbox_center(const Polygon& poly) {
  BoundingBox bb = bounding_box(poly);
  return {0.5 * (bb.min_lat + bb.max_lat), 0.5 * (bb.min_lon + bb.max_lon)};
}

Axial cube_round(double qf, double rf) {
  double sf = -qf - rf;
  double q = std::round(qf), r = std::round(rf), s = std::round(sf);
  double dq = std::abs(q - qf), dr = std::abs(r - rf), ds = std::abs(s - sf);
  if (dq > dr && dq > ds) q = -r - s;
  else if (dr > ds) r = -q - s;
  return {static_cast<int>(q), static_cast<int>(r)};
}

}  // namespace

HexGrid::HexGrid(Polygon bbox, double edge_km)
    : bbox_(std::move(bbox)), edge_km_(edge_km), projection_(bbox_center(bbox_)) {}

HexGrid HexGrid::build(const Polygon& bbox, double edge_km) {
  require(std::isfinite(edge_km) && edge_km > 0.0, ErrorKind::Config, "edge_km must be positive");
  HexGrid grid(validated_polygon(bbox), edge_km);

  PlanarPolygon poly_km;
  double xmin = std::numeric_limits<double>::max(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& p : grid.bbox_) {
    Vec2 v = grid.projection_.forward(p);
    poly_km.push_back(v);
    xmin = std::min(xmin, v.x), xmax = std::max(xmax, v.x);
    ymin = std::min(ymin, v.y), ymax = std::max(ymax, v.y);
  }
  const double s = edge_km;
  const double hex_area = 1.5 * kSqrt3 * s * s;
  const int r_lo = static_cast<int>(std::floor(ymin / (1.5 * s))) - 2;
  const int r_hi = static_cast<int>(std::ceil(ymax / (1.5 * s))) + 2;
  std::vector<Axial> axials;
  for (int r = r_lo; r <= r_hi; ++r) {
    const int q_lo = static_cast<int>(std::floor(xmin / (kSqrt3 * s) - 0.5 * r)) - 2;
    const int q_hi = static_cast<int>(std::ceil(xmax / (kSqrt3 * s) - 0.5 * r)) + 2;
    for (int q = q_lo; q <= q_hi; ++q) {
      const Axial a{q, r};
      PlanarPolygon hex;
      const Vec2 c = grid.axial_center_km(a);
      for (int k = 0; k < 6; ++k) {
        const double ang = (30.0 + 60.0 * k) * 3.14159265358979323846 / 180.0;
        hex.push_back({c.x + s * std::cos(ang), c.y + s * std::sin(ang)});
      }
      if (intersection_area_with_convex(poly_km, hex) > 1e-9 * hex_area) axials.push_back(a);
    }
  }
  grid.add_cells(std::move(axials));
  return grid;
}

void HexGrid::add_cells(std::vector<Axial> axials) {
  std::sort(axials.begin(), axials.end(), [](Axial a, Axial b) { return std::tie(a.r, a.q) < std::tie(b.r, b.q); });
  cells_.clear();
  index_.clear();
  for (const Axial& a : axials) {
    require(!index_.count(a), ErrorKind::Contract, "duplicate axial coordinate in grid");
    Cell c;
    c.id = static_cast<CellId>(cells_.size());
    c.axial = a;
    c.center_km = axial_center_km(a);
    c.centroid = projection_.inverse(c.center_km);
    index_.emplace(a, c.id);
    cells_.push_back(c);
  }
}

Vec2 HexGrid::axial_center_km(Axial a) const {
  return {edge_km_ * kSqrt3 * (a.q + 0.5 * a.r), edge_km_ * 1.5 * a.r};
}

Axial HexGrid::axial_neighbor(Axial a, int direction) {
  const Axial d = kDirections[direction];
  return {a.q + d.q, a.r + d.r};
}

std::optional<CellId> HexGrid::find(Axial a) const {
  auto it = index_.find(a);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<CellId> HexGrid::neighbors(CellId id) const {
  std::vector<CellId> out;
  for (int d = 0; d < 6; ++d) {
    if (auto n = find(axial_neighbor(cells_.at(id).axial, d))) out.push_back(*n);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool HexGrid::are_adjacent(CellId a, CellId b) const {
  const Axial x = cells_.at(a).axial, y = cells_.at(b).axial;
  const int dq = x.q - y.q, dr = x.r - y.r;
  return (std::abs(dq) + std::abs(dr) + std::abs(dq + dr)) == 2;
}

PlanarPolygon HexGrid::hexagon_km(CellId id) const {
  PlanarPolygon hex;
  const Vec2 c = cells_.at(id).center_km;
  for (int k = 0; k < 6; ++k) {
    const double ang = (30.0 + 60.0 * k) * 3.14159265358979323846 / 180.0;
    hex.push_back({c.x + edge_km_ * std::cos(ang), c.y + edge_km_ * std::sin(ang)});
  }
  return hex;
}

bool HexGrid::hexagon_contains(CellId id, Vec2 p) const {
  const Vec2 c = cells_.at(id).center_km;
  const double dx = p.x - c.x, dy = p.y - c.y;
  const double apothem = 0.5 * kSqrt3 * edge_km_ + kContainTolKm;
  return std::abs(dx) <= apothem && std::abs(0.5 * dx + 0.5 * kSqrt3 * dy) <= apothem &&
         std::abs(-0.5 * dx + 0.5 * kSqrt3 * dy) <= apothem;
}

CellId HexGrid::locate(GeoPoint p) const {
  const Vec2 v = projection_.forward(p);
  const double qf = (kSqrt3 / 3.0 * v.x - v.y / 3.0) / edge_km_;
  const double rf = (2.0 / 3.0 * v.y) / edge_km_;
  const Axial base = cube_round(qf, rf);
  std::optional<CellId> best;
  auto consider = [&](Axial a) {
    if (auto id = find(a); id && hexagon_contains(*id, v) && (!best || *id < *best)) best = id;
  };
  consider(base);
  for (int d = 0; d < 6; ++d) consider(axial_neighbor(base, d));
  if (!best) {
    std::ostringstream msg;
    msg.precision(10);
    msg << "point (" << p.lat << ", " << p.lon << ") is outside the grid";
    fail(ErrorKind::OutOfRange, msg.str());
  }
  return *best;
}

std::pair<double, double> HexGrid::relative_coords(GeoPoint p) const {
  BoundingBox bb = bounding_box(bbox_);
  double u = (p.lat - bb.min_lat) / (bb.max_lat - bb.min_lat);
  double v = (p.lon - bb.min_lon) / (bb.max_lon - bb.min_lon);
  return {std::clamp(u, 0.0, 1.0), std::clamp(v, 0.0, 1.0)};
}

nlohmann::json HexGrid::to_json() const {
  nlohmann::json poly = nlohmann::json::array();
  for (const auto& p : bbox_) poly.push_back({p.lat, p.lon});
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : cells_) {
    cells.push_back({{"id", c.id}, {"q", c.axial.q}, {"r", c.axial.r}, {"lat", c.centroid.lat}, {"lon", c.centroid.lon}});
  }
  return {{"origin", {origin().lat, origin().lon}}, {"edge_km", edge_km_}, {"bbox", poly}, {"cells", cells}};
}

HexGrid HexGrid::from_json(const nlohmann::json& j) {
  try {
    Polygon poly;
    for (const auto& p : j.at("bbox")) poly.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    HexGrid grid(validated_polygon(poly), j.at("edge_km").get<double>());
    const auto& origin = j.at("origin");
    require(origin.at(0).get<double>() == grid.origin().lat && origin.at(1).get<double>() == grid.origin().lon,
            ErrorKind::DataQuality, "grid descriptor origin does not match its bbox");
    std::vector<Axial> axials;
    for (const auto& c : j.at("cells")) axials.push_back({c.at("q").get<int>(), c.at("r").get<int>()});
    grid.add_cells(std::move(axials));
    return grid;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::DataQuality, std::string("malformed grid descriptor: ") + e.what());
  }
}

std::int64_t bin_time(UnixSeconds ts, int interval_min, UnixSeconds epoch) {
  require(interval_min > 0, ErrorKind::Config, "interval_min must be positive");
  require(ts >= epoch, ErrorKind::OutOfRange, "timestamp precedes the slot epoch");
  return (ts - epoch) / (std::int64_t{interval_min} * 60);
}

UnixSeconds default_epoch(const RegionDataset& region) {
  require(!region.trips.empty(), ErrorKind::DataQuality, "region " + region.region_id + " has no trips");
  UnixSeconds first = region.trips.front().pickup_time;
  for (const auto& t : region.trips) first = std::min(first, t.pickup_time);
  return local_midnight(first, region.utc_offset_minutes);
}

DemandTensor::DemandTensor(std::string region_id, std::shared_ptr<const HexGrid> grid, int interval_min,
                           UnixSeconds epoch, std::int64_t num_slots, int utc_offset_minutes)
    : region_id_(std::move(region_id)),
      grid_(std::move(grid)),
      interval_min_(interval_min),
      epoch_(epoch),
      num_slots_(num_slots),
      utc_offset_minutes_(utc_offset_minutes) {
  require(grid_ != nullptr, ErrorKind::Contract, "demand tensor needs a grid");
  require(interval_min_ > 0 && num_slots_ >= 0, ErrorKind::Config, "invalid slot layout");
  values_.assign(grid_->size() * static_cast<std::size_t>(num_slots_), 0);
}

std::size_t DemandTensor::index(CellId cell, std::int64_t slot) const {
  require(cell < grid_->size() && slot >= 0 && slot < num_slots_, ErrorKind::OutOfRange, "demand index out of range");
  return static_cast<std::size_t>(cell) * static_cast<std::size_t>(num_slots_) + static_cast<std::size_t>(slot);
}

std::int64_t DemandTensor::total() const {
  std::int64_t sum = 0;
  for (auto v : values_) sum += v;
  return sum;
}

std::int32_t DemandTensor::max_value() const {
  return values_.empty() ? 0 : *std::max_element(values_.begin(), values_.end());
}

bool operator==(const DemandTensor& a, const DemandTensor& b) {
  return a.region_id_ == b.region_id_ && a.interval_min_ == b.interval_min_ && a.epoch_ == b.epoch_ &&
         a.num_slots_ == b.num_slots_ && a.utc_offset_minutes_ == b.utc_offset_minutes_ && a.values_ == b.values_ &&
         a.grid_->to_json() == b.grid_->to_json();
}

DemandTensor count_demand(const RegionDataset& region, std::shared_ptr<const HexGrid> grid, int interval_min,
                          UnixSeconds epoch, std::int64_t num_slots, CountReport* report) {
  DemandTensor demand(region.region_id, grid, interval_min, epoch, num_slots, region.utc_offset_minutes);
  CountReport local;
  const UnixSeconds end = epoch + num_slots * interval_min * 60;
  for (const auto& trip : region.trips) {
    if (trip.pickup_time < epoch || trip.pickup_time >= end) {
      ++local.out_of_window;
      continue;
    }
    CellId cell;
    try {
      cell = grid->locate(trip.pickup());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::OutOfRange) throw;
      ++local.outside_grid;
      continue;
    }
    ++demand.at(cell, bin_time(trip.pickup_time, interval_min, epoch));
    ++local.counted;
  }
  if (report) *report = local;
  return demand;
}

void write_demand(const DemandTensor& demand, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  nlohmann::json meta = {{"grid", demand.grid().to_json()},
                         {"region_id", demand.region_id()},
                         {"interval_min", demand.interval_min()},
                         {"epoch", demand.epoch()},
                         {"num_slots", demand.num_slots()},
                         {"utc_offset_minutes", demand.utc_offset_minutes()}};
  {
    std::ofstream out(fs::path(dir) / "grid.json");
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + dir + "/grid.json");
    out << meta.dump(1) << '\n';
  }
  std::ofstream out(fs::path(dir) / "demand.csv");
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + dir + "/demand.csv");
  out << "cell_id,slot,count\n";
  for (CellId c = 0; c < demand.num_cells(); ++c) {
    for (std::int64_t k = 0; k < demand.num_slots(); ++k) {
      if (auto v = demand.at(c, k)) out << c << ',' << k << ',' << v << '\n';
    }
  }
  require(static_cast<bool>(out), ErrorKind::Io, "write failed: " + dir + "/demand.csv");
}

DemandTensor read_demand(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream meta_in(fs::path(dir) / "grid.json");
  require(static_cast<bool>(meta_in), ErrorKind::Io, "cannot read " + dir + "/grid.json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::DataQuality, std::string("malformed grid.json: ") + e.what());
  }
  auto grid = std::make_shared<const HexGrid>(HexGrid::from_json(meta.at("grid")));
  DemandTensor demand(meta.at("region_id").get<std::string>(), grid, meta.at("interval_min").get<int>(),
                      meta.at("epoch").get<UnixSeconds>(), meta.at("num_slots").get<std::int64_t>(),
                      meta.value("utc_offset_minutes", 0));
  std::ifstream in(fs::path(dir) / "demand.csv");
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + dir + "/demand.csv");
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    require(f.size() == 3, ErrorKind::DataQuality, "malformed demand row: " + line);
    try {
      demand.at(static_cast<CellId>(std::stoul(f[0])), std::stoll(f[1])) = std::stoi(f[2]);
    } catch (const std::logic_error&) {
      fail(ErrorKind::DataQuality, "malformed demand row: " + line);
    }
  }
  return demand;
}

}  // namespace xregion
