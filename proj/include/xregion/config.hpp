#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xregion/graph_builder.hpp"
#include "xregion/synthetic.hpp"
#include "xregion/training.hpp"

namespace xregion {

/// One real dataset: trips of a dialect clipped to a region polygon.
struct DatasetSpec {
  std::string region_id;
  std::string dialect;
  std::string path;          // file or directory, resolved against the config file
  std::string polygon;       // GeoJSON file, resolved against the config file
  std::optional<int> utc_offset_minutes;
};

/// Checks applied by the end-to-end run; an unset bound is not checked.
struct AcceptanceThresholds {
  std::optional<double> min_margin_over_gcn_direct = 0.05;
  bool proposed_at_least_other_baselines = true;
  std::optional<double> min_probe_specific = 0.80;
  std::optional<double> max_probe_agnostic_over_chance = 0.15;
  std::optional<double> min_bce_reduction = 0.50;
};

struct RunConfig {
  ExperimentConfig experiment;
  FeatureSpec features;  // history mirrors experiment.h
  std::optional<SynthConfig> synthetic;
  std::vector<DatasetSpec> datasets;
  std::vector<std::string> baselines = {"gcn_direct", "node_embedding_mlp", "graph_ae"};
  double accuracy_threshold = 2.0;
  AcceptanceThresholds acceptance;
  std::string output_dir = "out";
  std::string base_dir = ".";  // directory of the config file

  /// Exactly one of `synthetic` and `datasets` must be present.
  static RunConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;

  /// Default configuration: the synthetic four-region benchmark.
  static RunConfig synthetic_default();
  std::string resolve(const std::string& path) const;
};

}  // namespace xregion
