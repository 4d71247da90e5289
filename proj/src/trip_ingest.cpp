#include "xregion/trip_ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "xregion/error.hpp"

namespace xregion {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool lat_ok(double v) { return v >= -90.0 && v <= 90.0; }
bool lon_ok(double v) { return v >= -180.0 && v <= 180.0; }

std::string normalize_header(std::string_view name) {
  std::string out;
  for (char c : trim(name)) {
    if (c == '"') continue;
    out.push_back(c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

int find_column(const std::vector<std::string>& header, std::initializer_list<std::string_view> names) {
  for (std::string_view want : names) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == want) return static_cast<int>(i);
    }
  }
  return -1;
}

struct ColumnMap {
  int pickup_time = -1, pickup_lat = -1, pickup_lon = -1;
  int dropoff_time = -1, dropoff_lat = -1, dropoff_lon = -1;
};

using TimeParser = std::function<std::optional<UnixSeconds>(std::string_view)>;

struct TabularDialect {
  ColumnMap columns;
  TimeParser parse_time;
  bool zero_means_missing = false;  // NYC exports encode unknown coordinates as 0
};

std::optional<TripRecord> parse_tabular_row(const std::vector<std::string>& fields, const TabularDialect& d) {
  auto field = [&](int idx) -> std::string_view {
    return idx >= 0 && static_cast<std::size_t>(idx) < fields.size() ? std::string_view(fields[idx]) : std::string_view{};
  };
  const ColumnMap& c = d.columns;
  auto pt = d.parse_time(field(c.pickup_time));
  auto plat = parse_double(field(c.pickup_lat));
  auto plon = parse_double(field(c.pickup_lon));
  if (!pt || !plat || !plon) return std::nullopt;
  if (d.zero_means_missing && *plat == 0.0 && *plon == 0.0) return std::nullopt;
  TripRecord trip;
  trip.pickup_time = *pt;
  trip.pickup_lat = *plat;
  trip.pickup_lon = *plon;

  std::string_view dlat_s = trim(field(c.dropoff_lat)), dlon_s = trim(field(c.dropoff_lon));
  if (!dlat_s.empty() || !dlon_s.empty()) {
    auto dlat = parse_double(dlat_s), dlon = parse_double(dlon_s);
    if (!dlat || !dlon) return std::nullopt;
    if (!(d.zero_means_missing && *dlat == 0.0 && *dlon == 0.0)) {
      trip.dropoff_lat = *dlat;
      trip.dropoff_lon = *dlon;
    }
  }
  std::string_view dt_s = trim(field(c.dropoff_time));
  if (!dt_s.empty()) {
    auto dt = d.parse_time(dt_s);
    if (!dt) return std::nullopt;
    trip.dropoff_time = *dt;
  }
  if (!is_valid(trip)) return std::nullopt;
  return trip;
}

TabularDialect make_tabular(Dialect dialect, const std::vector<std::string>& header, int offset) {
  TabularDialect d;
  ColumnMap& c = d.columns;
  switch (dialect) {
    case Dialect::NycYellow:
      c.pickup_time = find_column(header, {"tpep_pickup_datetime", "pickup_datetime", "trip_pickup_datetime",
                                           "lpep_pickup_datetime"});
      c.dropoff_time = find_column(header, {"tpep_dropoff_datetime", "dropoff_datetime", "trip_dropoff_datetime",
                                            "lpep_dropoff_datetime"});
      c.pickup_lat = find_column(header, {"pickup_latitude", "start_lat"});
      c.pickup_lon = find_column(header, {"pickup_longitude", "start_lon"});
      c.dropoff_lat = find_column(header, {"dropoff_latitude", "end_lat"});
      c.dropoff_lon = find_column(header, {"dropoff_longitude", "end_lon"});
      d.zero_means_missing = true;
      d.parse_time = [offset](std::string_view s) { return parse_local_datetime(s, offset); };
      break;
    case Dialect::Chicago:
      c.pickup_time = find_column(header, {"trip_start_timestamp"});
      c.dropoff_time = find_column(header, {"trip_end_timestamp"});
      c.pickup_lat = find_column(header, {"pickup_centroid_latitude"});
      c.pickup_lon = find_column(header, {"pickup_centroid_longitude"});
      c.dropoff_lat = find_column(header, {"dropoff_centroid_latitude"});
      c.dropoff_lon = find_column(header, {"dropoff_centroid_longitude"});
      d.parse_time = [offset](std::string_view s) -> std::optional<UnixSeconds> {
        s = trim(s);
        if (auto t = parse_us_datetime_ampm(s, offset)) return t;
        // Socrata API exports use "2016-01-01T00:00:00.000".
        if (s.size() >= 19) return parse_local_datetime(s.substr(0, 19), offset);
        return std::nullopt;
      };
      break;
    case Dialect::CanonicalCsv:
      c = ColumnMap{0, 1, 2, 5, 3, 4};
      d.parse_time = [](std::string_view s) { return parse_iso8601_utc(s); };
      break;
    case Dialect::SfCabspotting:
      break;
  }
  if (c.pickup_time < 0 || c.pickup_lat < 0 || c.pickup_lon < 0) {
    fail(ErrorKind::DataQuality,
         std::string("header lacks pickup time/latitude/longitude columns for dialect ") +
             std::string(dialect_name(dialect)));
  }
  return d;
}

void check_quality(const IngestReport& report, const ParseOptions& options) {
  if (report.rows > 0 &&
      static_cast<double>(report.malformed) > options.max_malformed_fraction * static_cast<double>(report.rows)) {
    std::ostringstream msg;
    msg << "too many malformed rows: " << report.malformed << " of " << report.rows << " (" << report.parsed
        << " parsed)";
    fail(ErrorKind::DataQuality, msg.str());
  }
}

std::vector<TripRecord> parse_tabular(std::istream& in, Dialect dialect, IngestReport& report, int offset) {
  std::vector<TripRecord> trips;
  std::string line;
  TabularDialect d;
  bool have_layout = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (!have_layout) {
      have_layout = true;
      if (dialect == Dialect::CanonicalCsv) {
        d = make_tabular(dialect, {}, offset);
        // Header is optional for canonical CSV.
        if (!fields.empty() && !parse_iso8601_utc(fields[0])) continue;
      } else {
        std::vector<std::string> header;
        for (const auto& f : fields) header.push_back(normalize_header(f));
        d = make_tabular(dialect, header, offset);
        continue;
      }
    }
    ++report.rows;
    if (dialect == Dialect::CanonicalCsv && fields.size() != 6) {
      ++report.malformed;
      continue;
    }
    if (auto trip = parse_tabular_row(fields, d)) {
      trips.push_back(*trip);
      ++report.parsed;
    } else {
      ++report.malformed;
    }
  }
  return trips;
}

}  // namespace

bool is_valid(const TripRecord& trip) {
  if (!lat_ok(trip.pickup_lat) || !lon_ok(trip.pickup_lon)) return false;
  if (trip.dropoff_lat.has_value() != trip.dropoff_lon.has_value()) return false;
  if (trip.has_dropoff_location() && (!lat_ok(*trip.dropoff_lat) || !lon_ok(*trip.dropoff_lon))) return false;
  if (trip.dropoff_time && *trip.dropoff_time < trip.pickup_time) return false;
  return true;
}

Dialect parse_dialect(std::string_view name) {
  if (name == "nyc_yellow") return Dialect::NycYellow;
  if (name == "chicago") return Dialect::Chicago;
  if (name == "sf_cabspotting") return Dialect::SfCabspotting;
  if (name == "canonical_csv") return Dialect::CanonicalCsv;
  fail(ErrorKind::Config, "unknown dialect: " + std::string(name));
}

std::string_view dialect_name(Dialect d) {
  switch (d) {
    case Dialect::NycYellow: return "nyc_yellow";
    case Dialect::Chicago: return "chicago";
    case Dialect::SfCabspotting: return "sf_cabspotting";
    case Dialect::CanonicalCsv: return "canonical_csv";
  }
  return "unknown";
}

int default_utc_offset_minutes(Dialect d) {
  switch (d) {
    case Dialect::NycYellow: return -5 * 60;
    case Dialect::Chicago: return -6 * 60;
    default: return 0;
  }
}

nlohmann::json IngestReport::to_json() const {
  return {{"dialect", dialect}, {"rows", rows},         {"parsed", parsed},
          {"malformed", malformed}, {"retained", retained}, {"clipped", clipped}};
}

std::vector<std::string> split_csv_line(std::string_view line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::vector<TripRecord> decode_cabspotting_trace(std::istream& in, std::size_t& rows, std::size_t& malformed) {
  struct Fix {
    double lat, lon;
    int occupied;
    UnixSeconds t;
  };
  std::vector<Fix> fixes;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++rows;
    std::istringstream ss(line);
    std::string a, b, c, d, extra;
    if (!(ss >> a >> b >> c >> d) || (ss >> extra)) {
      ++malformed;
      continue;
    }
    auto lat = parse_double(a), lon = parse_double(b);
    long long occ = -1, t = 0;
    auto r1 = std::from_chars(c.data(), c.data() + c.size(), occ);
    auto r2 = std::from_chars(d.data(), d.data() + d.size(), t);
    if (!lat || !lon || !lat_ok(*lat) || !lon_ok(*lon) || r1.ec != std::errc{} || r1.ptr != c.data() + c.size() ||
        r2.ec != std::errc{} || r2.ptr != d.data() + d.size() || (occ != 0 && occ != 1)) {
      ++malformed;
      continue;
    }
    fixes.push_back({*lat, *lon, static_cast<int>(occ), static_cast<UnixSeconds>(t)});
  }
  // Traces are stored newest first.
  std::stable_sort(fixes.begin(), fixes.end(), [](const Fix& x, const Fix& y) { return x.t < y.t; });

  std::vector<TripRecord> trips;
  std::optional<TripRecord> open;
  for (std::size_t i = 0; i < fixes.size(); ++i) {
    const Fix& f = fixes[i];
    const int prev = i == 0 ? -1 : fixes[i - 1].occupied;
    if (f.occupied == 1 && prev == 0) {
      open = TripRecord{f.t, f.lat, f.lon, std::nullopt, std::nullopt, std::nullopt};
    } else if (f.occupied == 0 && prev == 1 && open) {
      open->dropoff_lat = f.lat;
      open->dropoff_lon = f.lon;
      open->dropoff_time = f.t;
      trips.push_back(*open);
      open.reset();
    }
  }
  if (open) trips.push_back(*open);
  return trips;
}

std::vector<TripRecord> parse_trip_records(std::istream& in, Dialect dialect, IngestReport& report,
                                           const ParseOptions& options) {
  report.dialect = std::string(dialect_name(dialect));
  const int offset = options.utc_offset_minutes.value_or(default_utc_offset_minutes(dialect));
  std::vector<TripRecord> trips;
  if (dialect == Dialect::SfCabspotting) {
    trips = decode_cabspotting_trace(in, report.rows, report.malformed);
    report.parsed += trips.size();
  } else {
    trips = parse_tabular(in, dialect, report, offset);
  }
  check_quality(report, options);
  return trips;
}

std::vector<TripRecord> parse_trip_file(const std::string& path, Dialect dialect, IngestReport& report,
                                        const ParseOptions& options) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<TripRecord> all;
    for (const auto& f : files) {
      std::ifstream in(f);
      require(static_cast<bool>(in), ErrorKind::Io, "cannot read trip file: " + f.string());
      auto part = parse_trip_records(in, dialect, report, options);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read trip file: " + path);
  return parse_trip_records(in, dialect, report, options);
}

std::string canonical_csv_row(const TripRecord& trip) {
  std::string row = format_iso8601_utc(trip.pickup_time);
  row += ',' + format_double(trip.pickup_lat) + ',' + format_double(trip.pickup_lon) + ',';
  if (trip.has_dropoff_location()) row += format_double(*trip.dropoff_lat) + ',' + format_double(*trip.dropoff_lon);
  else row += ',';
  row += ',';
  if (trip.dropoff_time) row += format_iso8601_utc(*trip.dropoff_time);
  return row;
}

void write_canonical_csv(std::ostream& out, const std::vector<TripRecord>& trips) {
  out << "pickup_time,pickup_lat,pickup_lon,dropoff_lat,dropoff_lon,dropoff_time\n";
  for (const auto& t : trips) out << canonical_csv_row(t) << '\n';
}

void write_canonical_csv_file(const std::string& path, const std::vector<TripRecord>& trips) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
  write_canonical_csv(out, trips);
  require(static_cast<bool>(out), ErrorKind::Io, "write failed: " + path);
}

ClipResult clip_to_region(std::vector<TripRecord> trips, Polygon polygon, std::string region_id,
                          int utc_offset_minutes) {
  polygon = validated_polygon(std::move(polygon));
  ClipResult result;
  result.dataset.region_id = std::move(region_id);
  result.dataset.utc_offset_minutes = utc_offset_minutes;
  for (auto& t : trips) {
    if (point_in_polygon(polygon, t.pickup())) result.dataset.trips.push_back(t);
    else ++result.dropped;
  }
  result.dataset.polygon = std::move(polygon);
  return result;
}

void DatasetRegistry::add(RegionDataset dataset) {
  require(!datasets_.count(dataset.region_id), ErrorKind::Config, "duplicate region id: " + dataset.region_id);
  std::string id = dataset.region_id;
  datasets_.emplace(std::move(id), std::move(dataset));
}

const RegionDataset& DatasetRegistry::at(const std::string& region_id) const {
  auto it = datasets_.find(region_id);
  require(it != datasets_.end(), ErrorKind::Config, "unknown region id: " + region_id);
  return it->second;
}

std::vector<std::string> DatasetRegistry::region_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : datasets_) ids.push_back(id);
  return ids;
}

}  // namespace xregion
