#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "xregion/geo.hpp"
#include "xregion/timeutil.hpp"

namespace xregion {

/// One validated taxi pickup, with an optional dropoff.
struct TripRecord {
  UnixSeconds pickup_time = 0;
  double pickup_lat = 0.0;
  double pickup_lon = 0.0;
  std::optional<double> dropoff_lat;
  std::optional<double> dropoff_lon;
  std::optional<UnixSeconds> dropoff_time;

  GeoPoint pickup() const { return {pickup_lat, pickup_lon}; }
  bool has_dropoff_location() const { return dropoff_lat.has_value() && dropoff_lon.has_value(); }
  GeoPoint dropoff() const { return {*dropoff_lat, *dropoff_lon}; }

  friend bool operator==(const TripRecord&, const TripRecord&) = default;
};

/// True when the record satisfies the coordinate and time-order invariants.
bool is_valid(const TripRecord& trip);

enum class Dialect { NycYellow, Chicago, SfCabspotting, CanonicalCsv };

Dialect parse_dialect(std::string_view name);
std::string_view dialect_name(Dialect d);

/// Source timezone as a fixed UTC offset. NYC and Chicago exports carry local
/// wall-clock times; Cabspotting and canonical CSV are already UTC.
int default_utc_offset_minutes(Dialect d);

struct IngestReport {
  std::string dialect;
  std::size_t rows = 0;       // data rows seen (header excluded)
  std::size_t parsed = 0;     // TripRecords produced
  std::size_t malformed = 0;  // rows rejected
  std::size_t retained = 0;   // after clipping
  std::size_t clipped = 0;    // dropped by clipping

  nlohmann::json to_json() const;
};

struct ParseOptions {
  std::optional<int> utc_offset_minutes;  // defaults per dialect
  double max_malformed_fraction = 0.5;
};

/// Parses a whole stream. Malformed rows are counted and skipped; more than
/// max_malformed_fraction malformed rows raises a data-quality error.
std::vector<TripRecord> parse_trip_records(std::istream& in, Dialect dialect, IngestReport& report,
                                           const ParseOptions& options = {});

/// File or directory (all regular files, sorted by name) variant.
std::vector<TripRecord> parse_trip_file(const std::string& path, Dialect dialect, IngestReport& report,
                                        const ParseOptions& options = {});

/// Decodes one Cabspotting cab trace: pickups are 0 -> 1 occupancy transitions in
/// chronological order, dropoffs the following 1 -> 0 transition.
std::vector<TripRecord> decode_cabspotting_trace(std::istream& in, std::size_t& rows, std::size_t& malformed);

void write_canonical_csv(std::ostream& out, const std::vector<TripRecord>& trips);
std::string canonical_csv_row(const TripRecord& trip);
void write_canonical_csv_file(const std::string& path, const std::vector<TripRecord>& trips);

/// RFC 4180 style field splitting with quote handling.
std::vector<std::string> split_csv_line(std::string_view line, char delim = ',');

struct RegionDataset {
  std::string region_id;
  Polygon polygon;
  std::vector<TripRecord> trips;
  int utc_offset_minutes = 0;
};

struct ClipResult {
  RegionDataset dataset;
  std::size_t dropped = 0;
};

/// Keeps trips whose pickup lies inside or on the polygon boundary.
ClipResult clip_to_region(std::vector<TripRecord> trips, Polygon polygon, std::string region_id,
                          int utc_offset_minutes = 0);

/// Region datasets keyed by unique region id.
class DatasetRegistry {
 public:
  void add(RegionDataset dataset);
  const RegionDataset& at(const std::string& region_id) const;
  bool contains(const std::string& region_id) const { return datasets_.count(region_id) != 0; }
  std::vector<std::string> region_ids() const;
  std::size_t size() const { return datasets_.size(); }

 private:
  std::map<std::string, RegionDataset> datasets_;
};

}  // namespace xregion
