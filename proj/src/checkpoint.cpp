#include "xregion/checkpoint.hpp"

#include <algorithm>

#include "xregion/binary_io.hpp"
#include "xregion/error.hpp"

namespace xregion {
namespace {

constexpr char kMagic[8] = {'X', 'R', 'C', 'K', 'P', 'T', '0', '1'};

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return "[" + s + "]";
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  require(static_cast<int>(ckpt.vocabulary.size()) == ckpt.params.config.num_regions, ErrorKind::Contract,
          "checkpoint vocabulary size differs from the classifier width");
  BinaryWriter w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  const nlohmann::json header = {{"model_config", ckpt.params.config.to_json()},
                                 {"feature_spec", ckpt.feature_spec.to_json()},
                                 {"vocabulary", ckpt.vocabulary},
                                 {"seed", ckpt.seed},
                                 {"experiment", ckpt.experiment}};
  w.str(header.dump());
  std::uint64_t count = 0;
  for_each_tensor(ckpt.params, [&](const std::string&, const Matrix&) { ++count; });
  w.u64(count);
  for_each_tensor(ckpt.params, [&](const std::string& name, const Matrix& m) {
    w.str(name);
    w.matrix(m);
  });
  w.save(path);
}

Checkpoint load_checkpoint(const std::string& path, const std::vector<std::string>* expected_vocabulary) {
  BinaryReader r = BinaryReader::load(path);
  char magic[8];
  r.raw(magic, sizeof magic);
  require(std::equal(magic, magic + 8, kMagic), ErrorKind::DataQuality, "not a checkpoint file: " + path);
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorKind::Version,
          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kCheckpointVersion) + "): " + path);
  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(r.str());
    ckpt.params.config = ModelConfig::from_json(header.at("model_config"));
    ckpt.feature_spec = FeatureSpec::from_json(header.at("feature_spec"));
    ckpt.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.experiment = header.at("experiment");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::DataQuality, "corrupt checkpoint header in " + path + ": " + e.what());
  }
  require(static_cast<int>(ckpt.vocabulary.size()) == ckpt.params.config.num_regions, ErrorKind::DataQuality,
          "checkpoint vocabulary size differs from the classifier width: " + path);
  require(ckpt.params.config.input_dim == ckpt.feature_spec.feature_dim(), ErrorKind::DataQuality,
          "checkpoint input width differs from its feature spec: " + path);
  if (expected_vocabulary && *expected_vocabulary != ckpt.vocabulary) {
    fail(ErrorKind::Vocabulary, "checkpoint vocabulary " + join(ckpt.vocabulary) + " does not match expected " +
                                    join(*expected_vocabulary));
  }

  // Shapes are validated against a freshly initialized parameter set.
  ckpt.params = ModelParams::init(ckpt.params.config, 0);
  std::uint64_t count = 0;
  for_each_tensor(ckpt.params, [&](const std::string&, const Matrix&) { ++count; });
  require(r.u64() == count, ErrorKind::DataQuality, "checkpoint tensor count mismatch: " + path);
  for_each_tensor(ckpt.params, [&](const std::string& name, Matrix& m) {
    const std::string stored = r.str();
    require(stored == name, ErrorKind::DataQuality, "checkpoint tensor order mismatch at " + name + ": " + path);
    Matrix loaded = r.matrix();
    require(loaded.rows() == m.rows() && loaded.cols() == m.cols(), ErrorKind::DataQuality,
            "checkpoint tensor " + name + " has the wrong shape: " + path);
    m = std::move(loaded);
  });
  require(r.remaining() == 0, ErrorKind::DataQuality, "trailing bytes in checkpoint: " + path);
  return ckpt;
}

}  // namespace xregion
