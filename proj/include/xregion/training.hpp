#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xregion/graph_builder.hpp"
#include "xregion/model.hpp"

namespace xregion {

struct ExperimentConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  int max_epochs = 50;
  int latent_dim = 32;
  int hidden1 = 64;
  int hidden2 = 64;
  int head_hidden = 64;
  double edge_km = 1.4;
  int interval_min = 30;
  int history = 6;
  double lambda_elbo = 1.0;
  double lambda_ts = 1.0;
  double lambda_ie = 1.0;
  std::uint64_t seed = 0;
  std::string held_out_region;
  int snapshot_stride = 1;
  std::optional<int> patience;  // epochs without main-loss improvement before stopping
  int probe_every = 0;          // 0 disables scheduled probes

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are configuration errors.
  static ExperimentConfig from_json(const nlohmann::json& j);
  ModelConfig model_config(int input_dim, int num_regions) const;
};

struct SplitPlan {
  std::vector<std::string> train_regions;  // sorted; also the classifier vocabulary
  std::string test_region;
  std::map<std::string, std::size_t> samples_per_region;
  std::size_t total_samples = 0;
};

/// One plan per region with that region held out. Fewer than 3 regions is a
/// configuration error since the region classifier needs two training classes.
std::vector<SplitPlan> make_loco_splits(const std::vector<std::string>& regions);

/// Fills sample counts of a plan from the available training snapshots.
void count_samples(SplitPlan& plan, const std::map<std::string, std::vector<RegionGraph>>& datasets);

struct EpochRecord {
  int epoch = 0;
  LossBreakdown main;
  LossBreakdown adversarial;
  std::optional<double> probe_agnostic;
  std::optional<double> probe_specific;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;  // epochs[0] is the evaluation before any update
  /// Two lines per epoch (main and adversarial phase).
  std::string to_jsonl() const;
  void write_jsonl(const std::string& path) const;
};

struct TrainOptions {
  /// Called after every optimizer step with the parameters before and after it.
  std::function<void(std::int64_t step, Phase phase, const ModelParams& before, const ModelParams& after)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
  std::int64_t max_steps = -1;          // stop after this many batches, -1 = no limit
  std::string failure_checkpoint_path;  // last good parameters are saved here on numerical failure
};

struct TrainResult {
  ModelParams params;
  TrainingHistory history;
  std::vector<std::string> vocabulary;
  FeatureSpec feature_spec;
  std::int64_t steps = 0;
};

/// Alternating optimization over shuffled mini-batches mixing all training
/// regions. The vocabulary is the sorted set of dataset keys.
TrainResult train(const ExperimentConfig& config, const FeatureSpec& spec,
                  const std::map<std::string, std::vector<RegionGraph>>& datasets, const TrainOptions& options = {});

enum class LatentKind { Agnostic, Specific };

/// Per-graph mean over nodes of the deterministic latent (rows follow graphs).
Matrix pooled_latents(const ModelParams& params, const std::vector<const RegionGraph*>& graphs, LatentKind kind);

/// Held-out accuracy of a linear softmax probe trained on a seeded 80/20 split.
double linear_probe_accuracy(const Matrix& features, const std::vector<int>& labels, int num_classes,
                             std::uint64_t seed);

/// Labels come from region_index; at least two distinct regions are required.
double probe_region_leakage(const ModelParams& params, const std::vector<const RegionGraph*>& graphs, LatentKind kind,
                            std::uint64_t seed = 0);

}  // namespace xregion
