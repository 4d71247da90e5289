#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "xregion/graph_builder.hpp"
#include "xregion/model.hpp"

namespace xregion {

/// Absolute errors strictly below this count as correct.
constexpr double kOneOffThreshold = 2.0;

/// Fraction of entries with |yhat - y| < threshold on raw predictions.
double accuracy_one_off(const Vector& yhat, const Vector& y, double threshold = kOneOffThreshold);
double mean_absolute_error(const Vector& yhat, const Vector& y);

struct MethodMetrics {
  double accuracy = 0.0;
  double mae = 0.0;
  std::size_t samples = 0;    // snapshot x node predictions
  std::size_t snapshots = 0;

  nlohmann::json to_json() const;
  static MethodMetrics from_json(const nlohmann::json& j);
  friend bool operator==(const MethodMetrics&, const MethodMetrics&) = default;
};

struct MetricsReport {
  std::string held_out_region;
  MethodMetrics proposed;
  std::map<std::string, MethodMetrics> baselines;
  std::map<std::string, std::size_t> train_samples;  // per training region
  std::vector<std::string> warnings;
  std::string config_fingerprint;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Stable 64-bit FNV-1a digest of the compact JSON dump, as 16 hex digits.
std::string config_fingerprint(const nlohmann::json& config);

using Predictor = std::function<Vector(const RegionGraph&)>;

/// Metrics of a predictor pooled over every node of every snapshot.
MethodMetrics score_predictions(const Predictor& predict, const std::vector<RegionGraph>& graphs,
                                double threshold = kOneOffThreshold);

/// Deterministic demand forecast from the region-agnostic latent only.
Vector predict_unseen(const ModelParams& params, const RegionGraph& graph);

/// Proposed-model metrics on the held-out snapshots. Regions found in the
/// training vocabulary are reported as overlap warnings.
MetricsReport evaluate_unseen(const ModelParams& params, const std::vector<std::string>& vocabulary,
                              const std::vector<RegionGraph>& test_graphs, double threshold = kOneOffThreshold);

/// Writes metrics_report.json and accuracy_chart.svg (one bar group per
/// held-out region, one bar per method) into out_dir.
void render_report(const std::vector<MetricsReport>& reports, const std::string& out_dir);
std::vector<MetricsReport> read_report(const std::string& path);

}  // namespace xregion
