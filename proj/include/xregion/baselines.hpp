#pragma once

#include <map>
#include <string>
#include <vector>

#include "xregion/evaluation.hpp"
#include "xregion/graph_builder.hpp"
#include "xregion/training.hpp"

namespace xregion {

enum class BaselineKind { GcnDirect, NodeEmbeddingMlp, GraphAe };

/// Accepts gcn_direct, node_embedding_mlp and graph_ae; anything else is a configuration error.
BaselineKind parse_baseline(const std::string& name);
std::string baseline_name(BaselineKind kind);
std::vector<std::string> all_baseline_names();

struct BaselineRun {
  MethodMetrics metrics;
  std::map<std::string, std::size_t> train_samples;
  double final_train_loss = 0.0;
};

/// Trains the named baseline on the training regions with the experiment's
/// optimizer settings and scores it on the held-out snapshots.
///   gcn_direct          3-layer GCN + regressor head, MAE only
///   node_embedding_mlp  per-region random-walk skip-gram embeddings, MLP on [embedding | features]
///   graph_ae            one VGAE (reconstruction + KL), then an MLP regressor on the frozen mean latent
BaselineRun run_baseline(const std::string& name, const std::map<std::string, std::vector<RegionGraph>>& train_sets,
                         const std::vector<RegionGraph>& test_graphs, const ExperimentConfig& config);

struct SkipGramOptions {
  int dim = 16;
  int walks_per_node = 10;
  int walk_length = 20;
  int window = 3;
  int negatives = 5;
  int epochs = 2;
  double learning_rate = 0.025;
};

/// Node embeddings from edge-weighted random walks and skip-gram with negative sampling.
Matrix skipgram_embeddings(const GraphTopology& topology, std::uint64_t seed, const SkipGramOptions& options = {});

}  // namespace xregion
