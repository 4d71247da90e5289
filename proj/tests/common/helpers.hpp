#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "xregion/geo.hpp"
#include "xregion/graph_builder.hpp"
#include "xregion/model.hpp"

namespace testutil {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("xregion_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Axis-aligned lat/lon rectangle of roughly width_km x height_km around a centre.
inline xregion::Polygon box_km(xregion::GeoPoint c, double width_km, double height_km) {
  const double dlat = 0.5 * height_km / 111.19492664455873;
  const double dlon = 0.5 * width_km / (111.19492664455873 * std::cos(c.lat * M_PI / 180.0));
  return {{c.lat - dlat, c.lon - dlon}, {c.lat - dlat, c.lon + dlon}, {c.lat + dlat, c.lon + dlon},
          {c.lat + dlat, c.lon - dlon}};
}

/// Ring graph of n nodes with random features and targets.
inline xregion::RegionGraph random_graph(int n, int d, int region_index, std::mt19937_64& rng) {
  xregion::EdgeWeights w;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const auto a = static_cast<xregion::CellId>(i), b = static_cast<xregion::CellId>((i + 1) % n);
    const double weight = 1.0 + std::floor(5.0 * u(rng));
    w[{a, b}] = weight;
    w[{b, a}] = weight;
  }
  xregion::RegionGraph g;
  g.region_id = "r" + std::to_string(region_index);
  g.region_index = region_index;
  g.topology = xregion::make_topology(w, static_cast<std::size_t>(n));
  g.node_features = xregion::Matrix::NullaryExpr(n, d, [&] { return u(rng) * 2.0 - 0.5; });
  g.targets = xregion::Vector::NullaryExpr(n, [&] { return std::floor(6.0 * u(rng)); });
  return g;
}

}  // namespace testutil
