#include <doctest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "xregion/error.hpp"
#include "xregion/trip_ingest.hpp"

using namespace xregion;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::Contract;
}

}  // namespace

TEST_CASE("CSV field splitting honours quotes") {
  CHECK(split_csv_line("a,b,c") == std::vector<std::string>{"a", "b", "c"});
  CHECK(split_csv_line("\"x,y\",2") == std::vector<std::string>{"x,y", "2"});
  CHECK(split_csv_line("\"say \"\"hi\"\"\",") == std::vector<std::string>{"say \"hi\"", ""});
  CHECK(split_csv_line("a;b", ';') == std::vector<std::string>{"a", "b"});
}

TEST_CASE("NYC yellow rows become UTC trip records") {
  std::istringstream in(
      "VendorID,tpep_pickup_datetime,tpep_dropoff_datetime,passenger_count,trip_distance,pickup_longitude,"
      "pickup_latitude,RatecodeID,store_and_fwd_flag,dropoff_longitude,dropoff_latitude\n"
      "2,2016-01-01 00:00:00,2016-01-01 00:10:00,1,1.1,-73.99,40.73,1,N,-73.98,40.75\n"
      "2,not a time,2016-01-01 00:10:00,1,1.1,-73.99,40.73,1,N,-73.98,40.75\n"
      "1,2016-01-01 01:00:00,2016-01-01 01:20:00,1,3.0,-73.95,40.78,1,N,0,0\n");
  IngestReport report;
  const auto trips = parse_trip_records(in, Dialect::NycYellow, report);
  CHECK(report.rows == 3);
  CHECK(report.malformed == 1);
  CHECK(report.parsed == 2);
  REQUIRE(trips.size() == 2);
  // 2016-01-01 00:00 EST is 05:00 UTC.
  CHECK(trips[0].pickup_time == *parse_iso8601_utc("2016-01-01T05:00:00Z"));
  CHECK(trips[0].pickup_lat == doctest::Approx(40.73));
  CHECK(*trips[0].dropoff_time == *parse_iso8601_utc("2016-01-01T05:10:00Z"));
  for (const auto& t : trips) CHECK(is_valid(t));
}

TEST_CASE("too many malformed rows is a data-quality error") {
  std::istringstream in(
      "tpep_pickup_datetime,pickup_longitude,pickup_latitude\n"
      "x,y,z\n"
      "x,y,z\n"
      "2016-01-01 00:00:00,-73.99,40.73\n");
  IngestReport report;
  CHECK(kind_of([&] { parse_trip_records(in, Dialect::NycYellow, report); }) == ErrorKind::DataQuality);
}

TEST_CASE("missing pickup columns and unknown dialects") {
  std::istringstream in("a,b,c\n1,2,3\n");
  IngestReport report;
  CHECK(kind_of([&] { parse_trip_records(in, Dialect::Chicago, report); }) == ErrorKind::DataQuality);
  CHECK(kind_of([] { parse_dialect("boston"); }) == ErrorKind::Config);
  for (auto d : {Dialect::NycYellow, Dialect::Chicago, Dialect::SfCabspotting, Dialect::CanonicalCsv}) {
    CHECK(parse_dialect(dialect_name(d)) == d);
  }
}

TEST_CASE("Chicago portal timestamps") {
  std::istringstream in(
      "Trip ID,Trip Start Timestamp,Trip End Timestamp,Pickup Centroid Latitude,Pickup Centroid Longitude,"
      "Dropoff Centroid Latitude,Dropoff Centroid Longitude\n"
      "abc,01/01/2016 01:15:00 PM,01/01/2016 01:30:00 PM,41.88,-87.63,41.89,-87.62\n");
  IngestReport report;
  const auto trips = parse_trip_records(in, Dialect::Chicago, report);
  REQUIRE(trips.size() == 1);
  CHECK(trips[0].pickup_time == *parse_iso8601_utc("2016-01-01T19:15:00Z"));
}

TEST_CASE("Cabspotting traces decode occupancy transitions") {
  // Newest first, as in the published files.
  std::istringstream in(
      "37.7800 -122.4100 0 1213084800\n"
      "37.7790 -122.4090 1 1213084740\n"
      "37.7780 -122.4080 1 1213084680\n"
      "37.7770 -122.4070 0 1213084620\n"
      "garbage line\n");
  std::size_t rows = 0, malformed = 0;
  const auto trips = decode_cabspotting_trace(in, rows, malformed);
  CHECK(rows == 5);
  CHECK(malformed == 1);
  REQUIRE(trips.size() == 1);
  CHECK(trips[0].pickup_time == 1213084680);
  CHECK(trips[0].pickup_lat == doctest::Approx(37.778));
  CHECK(*trips[0].dropoff_time == 1213084800);
}

TEST_CASE("canonical CSV round trip") {
  std::vector<TripRecord> trips = {
      {1451865600, 40.7, -73.9, 40.71, -73.91, 1451866200},
      {1451865700, 40.72, -73.95, std::nullopt, std::nullopt, std::nullopt},
  };
  const auto dir = testutil::temp_dir("canonical");
  const std::string path = (dir / "trips.csv").string();
  write_canonical_csv_file(path, trips);
  IngestReport report;
  const auto back = parse_trip_file(path, Dialect::CanonicalCsv, report);
  CHECK(back == trips);
  CHECK(report.malformed == 0);
}

TEST_CASE("clipping conserves trip counts") {
  const Polygon box = testutil::box_km({40.75, -73.98}, 4, 4);
  std::vector<TripRecord> trips;
  for (int i = 0; i < 100; ++i) {
    trips.push_back({1451865600 + i, 40.75 + (i - 50) * 0.001, -73.98, std::nullopt, std::nullopt, std::nullopt});
  }
  const auto clipped = clip_to_region(trips, box, "box");
  CHECK(clipped.dropped + clipped.dataset.trips.size() == trips.size());
  CHECK(clipped.dropped > 0);
  for (const auto& t : clipped.dataset.trips) CHECK(point_in_polygon(box, t.pickup()));
}

TEST_CASE("dataset registry rejects duplicate ids") {
  DatasetRegistry reg;
  reg.add({"a", {}, {}, 0});
  CHECK(kind_of([&] { reg.add({"a", {}, {}, 0}); }) == ErrorKind::Config);
  CHECK(kind_of([&] { reg.at("b"); }) == ErrorKind::Config);
  CHECK(reg.region_ids() == std::vector<std::string>{"a"});
}

TEST_CASE("invalid coordinates and reversed times") {
  CHECK_FALSE(is_valid({0, 91.0, 0.0, std::nullopt, std::nullopt, std::nullopt}));
  CHECK_FALSE(is_valid({100, 40.0, -73.0, 40.0, -73.0, 50}));
  CHECK(is_valid({100, 40.0, -73.0, 40.0, -73.0, 100}));
}
