#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "xregion/graph_builder.hpp"
#include "xregion/model.hpp"

namespace xregion {

constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  FeatureSpec feature_spec;
  std::vector<std::string> vocabulary;  // classifier output order
  std::uint64_t seed = 0;
  nlohmann::json experiment = nlohmann::json::object();
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

/// Throws DataQuality on corrupt or truncated files, Version on a version
/// mismatch and Vocabulary when `expected_vocabulary` is given and differs.
Checkpoint load_checkpoint(const std::string& path, const std::vector<std::string>* expected_vocabulary = nullptr);

}  // namespace xregion
