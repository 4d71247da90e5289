#include "xregion/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "xregion/error.hpp"
#include "xregion/model.hpp"

namespace xregion {
namespace {

constexpr double kKmPerDegreeLat = 111.19492664455873;

std::vector<double> default_profile(int slots_per_day) {
  // Morning and evening commute peaks over a night-time trough, normalized to mean 1.
  std::vector<double> p(static_cast<std::size_t>(slots_per_day));
  double sum = 0.0;
  for (int k = 0; k < slots_per_day; ++k) {
    const double hour = 24.0 * (k + 0.5) / slots_per_day;
    const double v = 0.25 + 1.2 * std::exp(-std::pow(hour - 8.5, 2) / (2 * 1.5 * 1.5)) +
                     0.6 * std::exp(-std::pow(hour - 13.0, 2) / (2 * 2.0 * 2.0)) +
                     1.0 * std::exp(-std::pow(hour - 18.5, 2) / (2 * 2.0 * 2.0));
    p[static_cast<std::size_t>(k)] = v;
    sum += v;
  }
  for (double& v : p) v *= slots_per_day / sum;
  return p;
}

nlohmann::json hotspot_json(const Hotspot& h) {
  return {{"rel_lat", h.rel_lat}, {"rel_lon", h.rel_lon}, {"amplitude", h.amplitude}, {"width", h.width}};
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::Config, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    require(ok, ErrorKind::Config, "unknown key '" + key + "' in " + where);
  }
}

}  // namespace

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  c.shared_daily_profile = default_profile(c.slots_per_day());
  c.styles = {
      {"synth_a", {40.75, -73.98}, {{0.30, 0.30, 1.6, 0.15}, {0.70, 0.65, 1.0, 0.20}}, 1.00, 0},
      {"synth_b", {41.88, -87.63}, {{0.60, 0.40, 1.8, 0.12}}, 1.20, 2},
      {"synth_c", {37.77, -122.42}, {{0.50, 0.72, 1.2, 0.18}, {0.22, 0.50, 0.9, 0.10}}, 0.90, 4},
      {"synth_d", {47.61, -122.33}, {{0.40, 0.60, 1.5, 0.15}}, 1.10, 6},
  };
  return c;
}

void SynthConfig::validate() const {
  require(n_regions >= 1 && static_cast<std::size_t>(n_regions) <= styles.size(), ErrorKind::Config,
          "synthetic config needs one style per region");
  require(grid_diameter_cells >= 1 && edge_km > 0 && days >= 1, ErrorKind::Config, "invalid synthetic geometry");
  require(interval_min > 0 && 1440 % interval_min == 0, ErrorKind::Config, "interval_min must divide a day");
  require(static_cast<int>(shared_daily_profile.size()) == slots_per_day(), ErrorKind::Config,
          "shared_daily_profile length must equal slots per day");
  require(base_intensity >= 0 && background_level >= 0, ErrorKind::Config, "intensities must be >= 0");
  for (double v : shared_daily_profile) require(v >= 0, ErrorKind::Config, "profile multipliers must be >= 0");
  std::set<std::string> ids;
  for (int i = 0; i < n_regions; ++i) {
    const auto& s = styles[static_cast<std::size_t>(i)];
    require(s.intensity_scale >= 0, ErrorKind::Config, "intensity_scale must be >= 0");
    require(ids.insert(s.region_id).second, ErrorKind::Config, "duplicate synthetic region id " + s.region_id);
    for (const auto& h : s.hotspots) {
      require(h.amplitude >= 0 && h.width > 0, ErrorKind::Config, "hotspot amplitude >= 0 and width > 0 required");
    }
  }
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json styles_j = nlohmann::json::array();
  for (const auto& s : styles) {
    nlohmann::json hs = nlohmann::json::array();
    for (const auto& h : s.hotspots) hs.push_back(hotspot_json(h));
    styles_j.push_back({{"region_id", s.region_id},
                        {"center", {s.center.lat, s.center.lon}},
                        {"hotspots", hs},
                        {"intensity_scale", s.intensity_scale},
                        {"phase_shift_slots", s.phase_shift_slots}});
  }
  return {{"n_regions", n_regions},
          {"grid_diameter_cells", grid_diameter_cells},
          {"edge_km", edge_km},
          {"days", days},
          {"interval_min", interval_min},
          {"base_intensity", base_intensity},
          {"background_level", background_level},
          {"shared_daily_profile", shared_daily_profile},
          {"region_styles", styles_j},
          {"seed", seed},
          {"start", format_iso8601_utc(start)}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  check_keys(j,
             {"n_regions", "grid_diameter_cells", "edge_km", "days", "interval_min", "base_intensity",
              "background_level", "shared_daily_profile", "region_styles", "seed", "start"},
             "synthetic");
  SynthConfig c = defaults();
  try {
    c.n_regions = j.value("n_regions", c.n_regions);
    c.grid_diameter_cells = j.value("grid_diameter_cells", c.grid_diameter_cells);
    c.edge_km = j.value("edge_km", c.edge_km);
    c.days = j.value("days", c.days);
    c.base_intensity = j.value("base_intensity", c.base_intensity);
    c.background_level = j.value("background_level", c.background_level);
    c.seed = j.value("seed", c.seed);
    if (j.contains("interval_min")) {
      c.interval_min = j["interval_min"].get<int>();
      require(c.interval_min > 0 && 1440 % c.interval_min == 0, ErrorKind::Config, "interval_min must divide a day");
      c.shared_daily_profile = default_profile(c.slots_per_day());
    }
    if (j.contains("shared_daily_profile")) c.shared_daily_profile = j["shared_daily_profile"].get<std::vector<double>>();
    if (j.contains("start")) {
      auto t = parse_iso8601_utc(j["start"].get<std::string>());
      require(t.has_value(), ErrorKind::Config, "synthetic.start must be an ISO-8601 UTC timestamp");
      c.start = *t;
    }
    if (j.contains("region_styles")) {
      c.styles.clear();
      for (const auto& s : j["region_styles"]) {
        check_keys(s, {"region_id", "center", "hotspots", "intensity_scale", "phase_shift_slots"}, "region_styles[]");
        RegionStyle st;
        st.region_id = s.at("region_id").get<std::string>();
        st.center = {s.at("center").at(0).get<double>(), s.at("center").at(1).get<double>()};
        st.intensity_scale = s.value("intensity_scale", 1.0);
        st.phase_shift_slots = s.value("phase_shift_slots", 0);
        for (const auto& h : s.value("hotspots", nlohmann::json::array())) {
          check_keys(h, {"rel_lat", "rel_lon", "amplitude", "width"}, "hotspots[]");
          st.hotspots.push_back({h.value("rel_lat", 0.5), h.value("rel_lon", 0.5), h.value("amplitude", 1.0),
                                 h.value("width", 0.15)});
        }
        c.styles.push_back(std::move(st));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("invalid synthetic config: ") + e.what());
  }
  c.validate();
  return c;
}

Polygon synthetic_polygon(const SynthConfig& config, int region_index) {
  // Disc of grid_diameter_cells hexagon widths, as a 48-gon.
  const GeoPoint c = config.styles.at(static_cast<std::size_t>(region_index)).center;
  const double radius_km = 0.5 * config.grid_diameter_cells * std::sqrt(3.0) * config.edge_km;
  const double coslat = std::cos(c.lat * std::numbers::pi / 180.0);
  Polygon poly;
  constexpr int kVertices = 48;
  for (int i = 0; i < kVertices; ++i) {
    const double a = 2.0 * std::numbers::pi * i / kVertices;
    poly.push_back({c.lat + radius_km * std::sin(a) / kKmPerDegreeLat,
                    c.lon + radius_km * std::cos(a) / (kKmPerDegreeLat * coslat)});
  }
  return poly;
}

RateModel::RateModel(const SynthConfig& config, int region_index)
    : config_(&config), region_index_(region_index), polygon_(synthetic_polygon(config, region_index)) {
  config.validate();
  require(region_index >= 0 && region_index < config.n_regions, ErrorKind::Config, "region index out of range");
  grid_ = std::make_shared<const HexGrid>(HexGrid::build(polygon_, config.edge_km));
  const auto& style = config.styles[static_cast<std::size_t>(region_index)];
  kernel_.resize(grid_->size());
  for (const auto& cell : grid_->cells()) {
    if (!point_in_polygon(polygon_, cell.centroid)) {
      kernel_[cell.id] = 0.0;
      continue;
    }
    auto [u, v] = grid_->relative_coords(cell.centroid);
    double k = config.background_level;
    for (const auto& h : style.hotspots) {
      const double d2 = (u - h.rel_lat) * (u - h.rel_lat) + (v - h.rel_lon) * (v - h.rel_lon);
      k += h.amplitude * std::exp(-d2 / (2.0 * h.width * h.width));
    }
    kernel_[cell.id] = k;
  }
}

double RateModel::rate(CellId cell, std::int64_t slot) const {
  const auto& style = config_->styles[static_cast<std::size_t>(region_index_)];
  const std::int64_t spd = config_->slots_per_day();
  const std::int64_t idx = ((slot + style.phase_shift_slots) % spd + spd) % spd;
  return config_->base_intensity * config_->shared_daily_profile[static_cast<std::size_t>(idx)] * kernel_.at(cell) *
         style.intensity_scale;
}

double oracle_expected_demand(const SynthConfig& config, int region_index, CellId cell, std::int64_t slot) {
  return RateModel(config, region_index).rate(cell, slot);
}

SyntheticRegion generate_region(const SynthConfig& config, int region_index) {
  const RateModel model(config, region_index);
  const HexGrid& grid = model.grid();
  const auto& style = config.styles[static_cast<std::size_t>(region_index)];

  SyntheticRegion out;
  out.grid = model.grid_ptr();
  out.epoch = config.start;
  out.num_slots = config.num_slots();
  out.draws.assign(grid.size() * static_cast<std::size_t>(out.num_slots), 0);
  out.dataset.region_id = style.region_id;
  out.dataset.polygon = model.polygon();
  out.dataset.utc_offset_minutes = 0;

  std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(region_index)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double jitter_km = 0.3 * config.edge_km;
  const std::int64_t slot_secs = std::int64_t{config.interval_min} * 60;

  auto jittered = [&](CellId id) {
    const Vec2 c = grid.cell(id).center_km;
    for (int attempt = 0; attempt < 16; ++attempt) {
      const double r = jitter_km * std::sqrt(unit(rng));
      const double theta = 2.0 * std::numbers::pi * unit(rng);
      const GeoPoint p = grid.projection().inverse({c.x + r * std::cos(theta), c.y + r * std::sin(theta)});
      if (point_in_polygon(out.dataset.polygon, p)) return p;
    }
    return grid.cell(id).centroid;
  };

  std::vector<std::vector<CellId>> active_neighbors(grid.size());
  for (CellId id = 0; id < grid.size(); ++id) {
    for (CellId n : grid.neighbors(id)) {
      if (model.active(n)) active_neighbors[id].push_back(n);
    }
  }

  for (std::int64_t k = 0; k < out.num_slots; ++k) {
    for (CellId id = 0; id < grid.size(); ++id) {
      const double lambda = model.rate(id, k);
      if (lambda <= 0.0) continue;
      std::poisson_distribution<int> poisson(lambda);
      const int n = poisson(rng);
      out.draws[id * static_cast<std::size_t>(out.num_slots) + static_cast<std::size_t>(k)] = n;
      for (int t = 0; t < n; ++t) {
        TripRecord trip;
        trip.pickup_time = out.epoch + k * slot_secs + static_cast<std::int64_t>(unit(rng) * slot_secs);
        const GeoPoint p = jittered(id);
        trip.pickup_lat = p.lat;
        trip.pickup_lon = p.lon;
        const auto& nbrs = active_neighbors[id];
        const CellId dest = nbrs.empty() ? id : nbrs[static_cast<std::size_t>(unit(rng) * nbrs.size()) % nbrs.size()];
        const GeoPoint d = jittered(dest);
        trip.dropoff_lat = d.lat;
        trip.dropoff_lon = d.lon;
        trip.dropoff_time = trip.pickup_time + 300 + static_cast<std::int64_t>(unit(rng) * 1200);
        out.dataset.trips.push_back(trip);
      }
    }
  }
  return out;
}

void write_synthetic(const SynthConfig& config, const std::string& out_dir) {
  namespace fs = std::filesystem;
  config.validate();
  fs::create_directories(out_dir);
  {
    std::ofstream cfg(fs::path(out_dir) / "synth_config.json");
    require(static_cast<bool>(cfg), ErrorKind::Io, "cannot write into " + out_dir);
    cfg << config.to_json().dump(2) << '\n';
  }
  for (int r = 0; r < config.n_regions; ++r) {
    const SyntheticRegion region = generate_region(config, r);
    const fs::path dir = fs::path(out_dir) / region.dataset.region_id;
    fs::create_directories(dir);
    write_canonical_csv_file((dir / "trips.csv").string(), region.dataset.trips);
    write_geojson_polygon(region.dataset.polygon, (dir / "region.geojson").string());
    const RateModel model(config, r);
    std::ofstream lam(dir / "lambda.csv");
    require(static_cast<bool>(lam), ErrorKind::Io, "cannot write " + (dir / "lambda.csv").string());
    lam << "cell_id,slot_of_day,lambda\n";
    lam.precision(17);
    for (CellId c = 0; c < model.grid().size(); ++c) {
      for (int k = 0; k < config.slots_per_day(); ++k) lam << c << ',' << k << ',' << model.rate(c, k) << '\n';
    }
  }
}

}  // namespace xregion
