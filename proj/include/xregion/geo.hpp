#pragma once

#include <string>
#include <vector>

namespace xregion {

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Planar coordinates in kilometres (x east, y north).
struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

using Polygon = std::vector<GeoPoint>;
using PlanarPolygon = std::vector<Vec2>;

/// Signed shoelace area in squared degrees (lon as x, lat as y).
double signed_area(const Polygon& poly);
double signed_area(const PlanarPolygon& poly);

/// Throws a configuration error for polygons with fewer than 3 vertices, zero area,
/// or self-intersections. A closing vertex equal to the first is dropped.
Polygon validated_polygon(Polygon poly);

/// Boundary points count as inside.
bool point_in_polygon(const Polygon& poly, GeoPoint p);

struct BoundingBox {
  double min_lat, min_lon, max_lat, max_lon;
};
BoundingBox bounding_box(const Polygon& poly);

/// Azimuthal equidistant projection on a sphere around an anchor point.
class LocalProjection {
 public:
  static constexpr double kEarthRadiusKm = 6371.0088;

  explicit LocalProjection(GeoPoint origin);

  Vec2 forward(GeoPoint p) const;
  GeoPoint inverse(Vec2 v) const;
  GeoPoint origin() const { return origin_; }

 private:
  GeoPoint origin_;
  double sin_lat0_, cos_lat0_;
};

/// Area of the intersection of an arbitrary simple polygon with a convex polygon
/// (counter-clockwise), by Sutherland-Hodgman clipping.
double intersection_area_with_convex(const PlanarPolygon& subject, const PlanarPolygon& convex_ccw);

/// Reads the outer ring of the first Polygon in a GeoJSON document (Polygon,
/// Feature or FeatureCollection). Coordinates are [lon, lat].
Polygon read_geojson_polygon(const std::string& path);
void write_geojson_polygon(const Polygon& poly, const std::string& path);

}  // namespace xregion
