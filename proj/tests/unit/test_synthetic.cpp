#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "xregion/error.hpp"
#include "xregion/spatial_grid.hpp"
#include "xregion/synthetic.hpp"

using namespace xregion;

namespace {

// Rate recomputed from the configuration alone.
double rate_by_hand(const SynthConfig& c, int region, const HexGrid& grid, const Polygon& poly, CellId cell,
                    std::int64_t slot) {
  const auto& style = c.styles[static_cast<std::size_t>(region)];
  const GeoPoint p = grid.cell(cell).centroid;
  if (!point_in_polygon(poly, p)) return 0.0;
  const BoundingBox bb = bounding_box(poly);
  const double u = (p.lat - bb.min_lat) / (bb.max_lat - bb.min_lat);
  const double v = (p.lon - bb.min_lon) / (bb.max_lon - bb.min_lon);
  double kernel = c.background_level;
  for (const auto& h : style.hotspots) {
    const double d2 = (u - h.rel_lat) * (u - h.rel_lat) + (v - h.rel_lon) * (v - h.rel_lon);
    kernel += h.amplitude * std::exp(-d2 / (2 * h.width * h.width));
  }
  const std::int64_t spd = 1440 / c.interval_min;
  const auto phase = static_cast<std::size_t>((slot + style.phase_shift_slots) % spd);
  return c.base_intensity * style.intensity_scale * c.shared_daily_profile[phase] * kernel;
}

SynthConfig short_config() {
  SynthConfig c = SynthConfig::defaults();
  c.days = 2;
  return c;
}

}  // namespace

TEST_CASE("default synthetic configuration") {
  const SynthConfig c = SynthConfig::defaults();
  CHECK_NOTHROW(c.validate());
  CHECK(c.slots_per_day() == 48);
  double mean = 0;
  for (double v : c.shared_daily_profile) mean += v;
  CHECK(mean / 48 == doctest::Approx(1.0));
  CHECK(SynthConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS_AS(SynthConfig::from_json({{"n_region", 4}}), Error);
}

TEST_CASE("rates agree with an independent evaluation of the configuration") {
  const SynthConfig c = short_config();
  for (int region = 0; region < c.n_regions; ++region) {
    const RateModel model(c, region);
    std::size_t active = 0;
    for (const auto& cell : model.grid().cells()) {
      active += model.active(cell.id);
      for (std::int64_t slot : {0, 7, 17, 36, 47, 60}) {
        const double expect = rate_by_hand(c, region, model.grid(), model.polygon(), cell.id, slot);
        CHECK(model.rate(cell.id, slot) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(oracle_expected_demand(c, region, cell.id, slot) == model.rate(cell.id, slot));
      }
    }
    CHECK(active > 40);
    CHECK(model.grid().size() >= active);
  }
}

TEST_CASE("Poisson draws have the generating mean") {
  const SynthConfig c = short_config();
  const SyntheticRegion r = generate_region(c, 0);
  const RateModel model(c, 0);
  CHECK(r.num_slots == c.num_slots());
  double observed = 0, expected = 0;
  for (const auto& cell : model.grid().cells()) {
    for (std::int64_t k = 0; k < r.num_slots; ++k) {
      const std::int32_t n = r.draws[cell.id * static_cast<std::size_t>(r.num_slots) + static_cast<std::size_t>(k)];
      observed += n;
      expected += model.rate(cell.id, k);
      if (!model.active(cell.id)) CHECK(n == 0);
    }
  }
  // Sum of independent Poissons: variance equals the mean.
  CHECK(std::abs(observed - expected) / std::sqrt(expected) < 4.0);
  CHECK(r.dataset.trips.size() == static_cast<std::size_t>(observed));

  SUBCASE("trips land in the cell and slot of their draw") {
    const DemandTensor demand = count_demand(r.dataset, r.grid, c.interval_min, r.epoch, r.num_slots);
    for (const auto& cell : r.grid->cells()) {
      for (std::int64_t k = 0; k < r.num_slots; ++k) {
        CHECK(demand.at(cell.id, k) == r.draws[cell.id * static_cast<std::size_t>(r.num_slots) + static_cast<std::size_t>(k)]);
      }
    }
  }
  SUBCASE("dropoffs are in neighbouring cells after the pickup") {
    for (const auto& t : r.dataset.trips) {
      REQUIRE(t.has_dropoff_location());
      CHECK(*t.dropoff_time > t.pickup_time);
      const CellId u = r.grid->locate(t.pickup()), v = r.grid->locate(t.dropoff());
      CHECK(r.grid->are_adjacent(u, v));
    }
  }
  SUBCASE("seeded") {
    const SyntheticRegion again = generate_region(c, 0);
    CHECK(again.draws == r.draws);
    CHECK(again.dataset.trips == r.dataset.trips);
  }
}

TEST_CASE("written synthetic datasets") {
  SynthConfig c = short_config();
  c.days = 1;
  const auto dir = testutil::temp_dir("synth");
  write_synthetic(c, dir.string());
  CHECK(std::filesystem::exists(dir / "synth_config.json"));
  for (const auto& s : c.styles) {
    CHECK(std::filesystem::exists(dir / s.region_id / "trips.csv"));
    CHECK(std::filesystem::exists(dir / s.region_id / "region.geojson"));
    std::ifstream lambda(dir / s.region_id / "lambda.csv");
    std::string header;
    std::getline(lambda, header);
    CHECK(header == "cell_id,slot_of_day,lambda");
  }
}
