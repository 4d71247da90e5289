#include "xregion/geo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "xregion/error.hpp"

namespace xregion {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double cross(Vec2 o, Vec2 a, Vec2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

Vec2 as_vec(GeoPoint p) { return {p.lon, p.lat}; }

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  double scale = std::max({std::abs(a.x), std::abs(a.y), std::abs(b.x), std::abs(b.y), 1.0});
  if (std::abs(cross(a, b, p)) > 1e-12 * scale * scale) return false;
  return p.x >= std::min(a.x, b.x) - 1e-12 * scale && p.x <= std::max(a.x, b.x) + 1e-12 * scale &&
         p.y >= std::min(a.y, b.y) - 1e-12 * scale && p.y <= std::max(a.y, b.y) + 1e-12 * scale;
}

int orientation(Vec2 a, Vec2 b, Vec2 c) {
  double v = cross(a, b, c);
  return (v > 0) - (v < 0);
}

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  int o1 = orientation(p1, p2, q1), o2 = orientation(p1, p2, q2);
  int o3 = orientation(q1, q2, p1), o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  return (o1 == 0 && on_segment(p1, p2, q1)) || (o2 == 0 && on_segment(p1, p2, q2)) ||
         (o3 == 0 && on_segment(q1, q2, p1)) || (o4 == 0 && on_segment(q1, q2, p2));
}

}  // namespace

double signed_area(const PlanarPolygon& poly) {
  double acc = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

double signed_area(const Polygon& poly) {
  PlanarPolygon planar;
  planar.reserve(poly.size());
  for (const auto& p : poly) planar.push_back(as_vec(p));
  return signed_area(planar);
}

Polygon validated_polygon(Polygon poly) {
  if (poly.size() >= 2 && poly.front() == poly.back()) poly.pop_back();
  require(poly.size() >= 3, ErrorKind::Config, "polygon needs at least 3 distinct vertices");
  for (const auto& p : poly) {
    require(std::isfinite(p.lat) && std::isfinite(p.lon) && std::abs(p.lat) <= 90.0 && std::abs(p.lon) <= 180.0,
            ErrorKind::Config, "polygon vertex outside WGS84 range");
  }
  BoundingBox bb = bounding_box(poly);
  double extent = std::max(bb.max_lat - bb.min_lat, bb.max_lon - bb.min_lon);
  require(extent > 0.0 && std::abs(signed_area(poly)) > 1e-12 * extent * extent, ErrorKind::Config,
          "degenerate polygon (zero area)");
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      // Adjacent edges share a vertex by construction.
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(as_vec(poly[i]), as_vec(poly[(i + 1) % n]), as_vec(poly[j]), as_vec(poly[(j + 1) % n]))) {
        fail(ErrorKind::Config, "polygon is self-intersecting");
      }
    }
  }
  return poly;
}

bool point_in_polygon(const Polygon& poly, GeoPoint p) {
  const Vec2 q = as_vec(p);
  bool inside = false;
  for (std::size_t i = 0, n = poly.size(), j = n - 1; i < n; j = i++) {
    Vec2 a = as_vec(poly[i]), b = as_vec(poly[j]);
    if (on_segment(a, b, q)) return true;
    if ((a.y > q.y) != (b.y > q.y)) {
      double x_cross = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (q.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

BoundingBox bounding_box(const Polygon& poly) {
  BoundingBox bb{90.0, 180.0, -90.0, -180.0};
  for (const auto& p : poly) {
    bb.min_lat = std::min(bb.min_lat, p.lat);
    bb.max_lat = std::max(bb.max_lat, p.lat);
    bb.min_lon = std::min(bb.min_lon, p.lon);
    bb.max_lon = std::max(bb.max_lon, p.lon);
  }
  return bb;
}

LocalProjection::LocalProjection(GeoPoint origin)
    : origin_(origin), sin_lat0_(std::sin(origin.lat * kDeg)), cos_lat0_(std::cos(origin.lat * kDeg)) {}

Vec2 LocalProjection::forward(GeoPoint p) const {
  const double lat = p.lat * kDeg;
  const double dlon = (p.lon - origin_.lon) * kDeg;
  const double sin_lat = std::sin(lat), cos_lat = std::cos(lat);
  const double cos_c = std::clamp(sin_lat0_ * sin_lat + cos_lat0_ * cos_lat * std::cos(dlon), -1.0, 1.0);
  const double c = std::acos(cos_c);
  const double k = c < 1e-12 ? 1.0 : c / std::sin(c);
  return {kEarthRadiusKm * k * cos_lat * std::sin(dlon),
          kEarthRadiusKm * k * (cos_lat0_ * sin_lat - sin_lat0_ * cos_lat * std::cos(dlon))};
}

GeoPoint LocalProjection::inverse(Vec2 v) const {
  const double rho = std::hypot(v.x, v.y);
  if (rho < 1e-12) return origin_;
  const double c = rho / kEarthRadiusKm;
  const double sin_c = std::sin(c), cos_c = std::cos(c);
  const double lat = std::asin(std::clamp(cos_c * sin_lat0_ + v.y * sin_c * cos_lat0_ / rho, -1.0, 1.0));
  const double lon = origin_.lon * kDeg + std::atan2(v.x * sin_c, rho * cos_lat0_ * cos_c - v.y * sin_lat0_ * sin_c);
  return {lat / kDeg, lon / kDeg};
}

double intersection_area_with_convex(const PlanarPolygon& subject, const PlanarPolygon& convex_ccw) {
  PlanarPolygon output = subject;
  for (std::size_t e = 0, m = convex_ccw.size(); e < m && !output.empty(); ++e) {
    const Vec2 a = convex_ccw[e], b = convex_ccw[(e + 1) % m];
    PlanarPolygon input;
    input.swap(output);
    for (std::size_t i = 0, n = input.size(); i < n; ++i) {
      const Vec2 cur = input[i], prev = input[(i + n - 1) % n];
      const double dc = cross(a, b, cur), dp = cross(a, b, prev);
      const bool cur_in = dc >= 0.0, prev_in = dp >= 0.0;
      if (cur_in != prev_in) {
        const double t = dp / (dp - dc);
        output.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
      }
      if (cur_in) output.push_back(cur);
    }
  }
  return output.size() < 3 ? 0.0 : std::abs(signed_area(output));
}

Polygon read_geojson_polygon(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read polygon file: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, "invalid GeoJSON in " + path + ": " + e.what());
  }
  const nlohmann::json* geom = &doc;
  if (doc.value("type", "") == "FeatureCollection") {
    require(doc.contains("features") && !doc["features"].empty(), ErrorKind::Config, "empty FeatureCollection");
    geom = &doc["features"][0]["geometry"];
  } else if (doc.value("type", "") == "Feature") {
    geom = &doc["geometry"];
  }
  require(geom->value("type", "") == "Polygon", ErrorKind::Config, "GeoJSON geometry must be a Polygon");
  Polygon poly;
  try {
    for (const auto& c : (*geom)["coordinates"].at(0)) poly.push_back({c.at(1).get<double>(), c.at(0).get<double>()});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("malformed polygon coordinates: ") + e.what());
  }
  return validated_polygon(std::move(poly));
}

void write_geojson_polygon(const Polygon& poly, const std::string& path) {
  nlohmann::json ring = nlohmann::json::array();
  for (const auto& p : poly) ring.push_back({p.lon, p.lat});
  if (!poly.empty()) ring.push_back({poly.front().lon, poly.front().lat});
  nlohmann::json doc = {{"type", "Polygon"}, {"coordinates", {ring}}};
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write polygon file: " + path);
  out << doc.dump(2) << '\n';
}

}  // namespace xregion
