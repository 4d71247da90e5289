#include "xregion/config.hpp"

#include <filesystem>
#include <fstream>

#include "xregion/baselines.hpp"
#include "xregion/error.hpp"
#include "xregion/trip_ingest.hpp"

namespace xregion {
namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::Config, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    require(ok, ErrorKind::Config, "unknown key '" + key + "' in " + where);
  }
}

std::optional<double> optional_number(const nlohmann::json& j, const char* key, std::optional<double> fallback) {
  if (!j.contains(key)) return fallback;
  if (j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

FeatureSpec features_from_json(const nlohmann::json& j, int history) {
  check_keys(j, {"include_day_onehot", "include_slot_encoding", "include_relative_coords", "external_dims"}, "features");
  FeatureSpec s;
  s.history = history;
  s.include_day_onehot = j.value("include_day_onehot", s.include_day_onehot);
  s.include_slot_encoding = j.value("include_slot_encoding", s.include_slot_encoding);
  s.include_relative_coords = j.value("include_relative_coords", s.include_relative_coords);
  s.external_dims = j.value("external_dims", s.external_dims);
  require(s.external_dims == 0, ErrorKind::Config, "external features are not wired into the pipeline; use 0");
  s.validate();
  return s;
}

}  // namespace

RunConfig RunConfig::synthetic_default() {
  RunConfig c;
  c.synthetic = SynthConfig::defaults();
  c.experiment.held_out_region = c.synthetic->styles.back().region_id;
  return c;
}

std::string RunConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  if (p.is_absolute()) return p.string();
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
  check_keys(j, {"experiment", "features", "synthetic", "datasets", "baselines", "accuracy_threshold", "acceptance",
                 "output_dir"},
             "run config");
  RunConfig c;
  c.base_dir = base_dir;
  try {
    c.experiment = ExperimentConfig::from_json(j.value("experiment", nlohmann::json::object()));
    c.features = features_from_json(j.value("features", nlohmann::json::object()), c.experiment.history);
    if (j.contains("synthetic")) c.synthetic = SynthConfig::from_json(j["synthetic"]);
    if (j.contains("datasets")) {
      require(j["datasets"].is_array(), ErrorKind::Config, "datasets must be an array");
      for (const auto& d : j["datasets"]) {
        check_keys(d, {"region_id", "dialect", "path", "polygon", "utc_offset_minutes"}, "datasets[]");
        for (const char* key : {"region_id", "dialect", "path", "polygon"}) {
          require(d.contains(key), ErrorKind::Config, std::string("datasets[] is missing required key '") + key + "'");
        }
        DatasetSpec s;
        s.region_id = d["region_id"].get<std::string>();
        s.dialect = d["dialect"].get<std::string>();
        s.path = d["path"].get<std::string>();
        s.polygon = d["polygon"].get<std::string>();
        if (d.contains("utc_offset_minutes")) s.utc_offset_minutes = d["utc_offset_minutes"].get<int>();
        c.datasets.push_back(std::move(s));
      }
    }
    if (j.contains("baselines")) c.baselines = j["baselines"].get<std::vector<std::string>>();
    c.accuracy_threshold = j.value("accuracy_threshold", c.accuracy_threshold);
    if (j.contains("acceptance")) {
      const auto& a = j["acceptance"];
      check_keys(a, {"min_margin_over_gcn_direct", "proposed_at_least_other_baselines", "min_probe_specific",
                     "max_probe_agnostic_over_chance", "min_bce_reduction"},
                 "acceptance");
      auto& t = c.acceptance;
      t.min_margin_over_gcn_direct = optional_number(a, "min_margin_over_gcn_direct", t.min_margin_over_gcn_direct);
      t.proposed_at_least_other_baselines = a.value("proposed_at_least_other_baselines", true);
      t.min_probe_specific = optional_number(a, "min_probe_specific", t.min_probe_specific);
      t.max_probe_agnostic_over_chance =
          optional_number(a, "max_probe_agnostic_over_chance", t.max_probe_agnostic_over_chance);
      t.min_bce_reduction = optional_number(a, "min_bce_reduction", t.min_bce_reduction);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("invalid run config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Config, "cannot read config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, "config file " + path + " is not valid JSON: " + e.what());
  }
  auto base = std::filesystem::absolute(path).parent_path().string();
  return from_json(j, base);
}

void RunConfig::validate() const {
  experiment.validate();
  features.validate();
  require(features.history == experiment.history, ErrorKind::Config, "features.history must equal experiment.h");
  require(synthetic.has_value() != !datasets.empty(), ErrorKind::Config,
          "exactly one of 'synthetic' and 'datasets' must be given");
  for (const auto& b : baselines) parse_baseline(b);
  require(accuracy_threshold > 0, ErrorKind::Config, "accuracy_threshold must be > 0");
  for (const auto& d : datasets) {
    parse_dialect(d.dialect);
    require(!d.region_id.empty(), ErrorKind::Config, "datasets[].region_id must not be empty");
  }
  if (synthetic) {
    require(synthetic->interval_min == experiment.interval_min, ErrorKind::Config,
            "synthetic.interval_min must equal experiment.interval_min");
    require(synthetic->edge_km == experiment.edge_km, ErrorKind::Config,
            "synthetic.edge_km must equal experiment.edge_km");
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["experiment"] = experiment.to_json();
  j["features"] = {{"include_day_onehot", features.include_day_onehot},
                   {"include_slot_encoding", features.include_slot_encoding},
                   {"include_relative_coords", features.include_relative_coords},
                   {"external_dims", features.external_dims}};
  if (synthetic) j["synthetic"] = synthetic->to_json();
  if (!datasets.empty()) {
    j["datasets"] = nlohmann::json::array();
    for (const auto& d : datasets) {
      nlohmann::json e = {{"region_id", d.region_id}, {"dialect", d.dialect}, {"path", d.path}, {"polygon", d.polygon}};
      if (d.utc_offset_minutes) e["utc_offset_minutes"] = *d.utc_offset_minutes;
      j["datasets"].push_back(e);
    }
  }
  j["baselines"] = baselines;
  j["accuracy_threshold"] = accuracy_threshold;
  j["acceptance"] = {{"min_margin_over_gcn_direct", optional_json(acceptance.min_margin_over_gcn_direct)},
                     {"proposed_at_least_other_baselines", acceptance.proposed_at_least_other_baselines},
                     {"min_probe_specific", optional_json(acceptance.min_probe_specific)},
                     {"max_probe_agnostic_over_chance", optional_json(acceptance.max_probe_agnostic_over_chance)},
                     {"min_bce_reduction", optional_json(acceptance.min_bce_reduction)}};
  j["output_dir"] = output_dir;
  return j;
}

}  // namespace xregion
