#pragma once

// Independent reference computations shared by the unit suite and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "xregion/model.hpp"
#include "xregion/spatial_grid.hpp"

namespace testutil {

// KL(N(mu, s^2) || N(0, 1)) by composite Simpson integration of q log(q/p).
inline double kl_by_integration(double mu, double logvar) {
  const double s = std::exp(0.5 * logvar);
  const double lo = mu - 14 * s, hi = mu + 14 * s;
  const int n = 40000;
  const double h = (hi - lo) / n;
  auto f = [&](double x) {
    const double zq = (x - mu) / s;
    const double log_q = -0.5 * zq * zq - std::log(s) - 0.5 * std::log(2 * M_PI);
    const double log_p = -0.5 * x * x - 0.5 * std::log(2 * M_PI);
    return std::exp(log_q) * (log_q - log_p);
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 ? 4 : 2);
  return acc * h / 3;
}

inline xregion::ModelConfig small_model_config(int input_dim) {
  xregion::ModelConfig c;
  c.input_dim = input_dim;
  c.hidden1 = 6;
  c.hidden2 = 5;
  c.latent_dim = 3;
  c.head_hidden = 4;
  c.num_regions = 2;
  c.lambda_elbo = 0.7;
  c.lambda_ts = 1.3;
  c.lambda_ie = 0.9;
  return c;
}

// Largest elementwise |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double max_relative_error(const xregion::Matrix& analytic, const xregion::Matrix& numeric, double floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i], n = numeric.data()[i];
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
  }
  return worst;
}

struct TensorGradientCheck {
  std::string tensor;
  bool head = false;
  double relative_error = 0.0;  // analytic vs central differences
  bool analytic_zero = false;
};

// Analytic gradient of total_loss against central differences (step 1e-5) on a
// seeded 5-node instance; the region index alternates with the instance.
inline std::vector<TensorGradientCheck> gradient_check(xregion::Phase phase, std::uint64_t instance) {
  using namespace xregion;
  std::mt19937_64 rng(instance);
  const RegionGraph g = random_graph(5, 4, static_cast<int>(instance % 2), rng);
  ModelParams params = ModelParams::init(small_model_config(4), instance);
  // Non-zero biases so their gradients are exercised away from symmetric points.
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for_each_tensor(params, [&](const std::string&, Matrix& m) {
    if (m.rows() == 1) m = m.unaryExpr([&](double) { return u(rng); });
  });
  const std::uint64_t seed = 77 + instance;
  ModelParams grad = params.zeros_like();
  total_loss(g, params, phase, seed, &grad);

  const double step = 1e-5;
  std::vector<Matrix*> p_tensors, g_tensors;
  std::vector<std::string> names;
  for_each_tensor(params, [&](const std::string& name, Matrix& m) {
    p_tensors.push_back(&m);
    names.push_back(name);
  });
  for_each_tensor(grad, [&](const std::string&, Matrix& m) { g_tensors.push_back(&m); });

  std::vector<TensorGradientCheck> out;
  for (std::size_t k = 0; k < p_tensors.size(); ++k) {
    Matrix numeric(p_tensors[k]->rows(), p_tensors[k]->cols());
    for (Eigen::Index i = 0; i < p_tensors[k]->size(); ++i) {
      double& x = p_tensors[k]->data()[i];
      const double saved = x;
      x = saved + step;
      const double up = total_loss(g, params, phase, seed).total;
      x = saved - step;
      const double down = total_loss(g, params, phase, seed).total;
      x = saved;
      numeric.data()[i] = (up - down) / (2 * step);
    }
    TensorGradientCheck c;
    c.tensor = names[k];
    c.head = names[k].rfind("heads.", 0) == 0;
    c.relative_error = max_relative_error(*g_tensors[k], numeric, 1e-6);
    c.analytic_zero = g_tensors[k]->isZero(0.0);
    out.push_back(c);
  }
  return out;
}

// Point-in-convex test on a projected CCW hexagon with a tolerance for shared edges.
inline bool in_hexagon(const xregion::PlanarPolygon& hex, xregion::Vec2 p) {
  for (std::size_t i = 0; i < hex.size(); ++i) {
    const xregion::Vec2 a = hex[i], b = hex[(i + 1) % hex.size()];
    if ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) < -1e-12) return false;
  }
  return true;
}

struct BruteForceCounts {
  std::vector<std::int32_t> cells_by_slot;  // cell * slots + slot
  std::size_t counted = 0;
  std::size_t out_of_window = 0;
  std::size_t outside_grid = 0;
};

// Scans every hexagon for every trip; the first containing hexagon in id order wins.
inline BruteForceCounts brute_force_counts(const xregion::HexGrid& grid, const std::vector<xregion::TripRecord>& trips,
                                           int interval_min, xregion::UnixSeconds epoch, std::int64_t slots) {
  BruteForceCounts out;
  out.cells_by_slot.assign(grid.size() * static_cast<std::size_t>(slots), 0);
  for (const auto& t : trips) {
    const std::int64_t dt = t.pickup_time - epoch;
    const std::int64_t slot = dt >= 0 ? dt / (interval_min * 60) : -1;
    const xregion::Vec2 p = grid.projection().forward(t.pickup());
    std::optional<xregion::CellId> hit;
    for (const auto& cell : grid.cells()) {
      if (in_hexagon(grid.hexagon_km(cell.id), p)) {
        hit = cell.id;
        break;
      }
    }
    if (slot < 0 || slot >= slots) {
      ++out.out_of_window;
    } else if (!hit) {
      ++out.outside_grid;
    } else {
      ++out.counted;
      ++out.cells_by_slot[*hit * static_cast<std::size_t>(slots) + static_cast<std::size_t>(slot)];
    }
  }
  return out;
}

// Uniform trips over the box padded by `pad` degrees, with times up to an hour
// either side of the slot window.
inline std::vector<xregion::TripRecord> random_trips(const xregion::Polygon& box, int n, xregion::UnixSeconds epoch,
                                                     std::int64_t window_seconds, std::uint64_t seed,
                                                     double pad = 0.02) {
  std::mt19937_64 rng(seed);
  const xregion::BoundingBox bb = xregion::bounding_box(box);
  std::uniform_real_distribution<double> lat(bb.min_lat - pad, bb.max_lat + pad), lon(bb.min_lon - pad, bb.max_lon + pad);
  std::uniform_int_distribution<std::int64_t> when(-3600, window_seconds + 3600);
  std::vector<xregion::TripRecord> trips;
  for (int i = 0; i < n; ++i) {
    xregion::TripRecord t;
    t.pickup_lat = lat(rng);
    t.pickup_lon = lon(rng);
    t.pickup_time = epoch + when(rng);
    trips.push_back(t);
  }
  return trips;
}

inline bool strictly_inside_box(const xregion::Polygon& box, xregion::GeoPoint p) {
  const xregion::BoundingBox bb = xregion::bounding_box(box);
  return p.lat > bb.min_lat && p.lat < bb.max_lat && p.lon > bb.min_lon && p.lon < bb.max_lon;
}

}  // namespace testutil
