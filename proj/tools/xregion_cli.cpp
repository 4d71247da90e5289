// Command-line entry point: ingest, grid, synth, train, evaluate, predict, e2e.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xregion/baselines.hpp"
#include "xregion/checkpoint.hpp"
#include "xregion/config.hpp"
#include "xregion/error.hpp"
#include "xregion/evaluation.hpp"
#include "xregion/pipeline.hpp"
#include "xregion/synthetic.hpp"
#include "xregion/training.hpp"

namespace fs = std::filesystem;
using namespace xregion;

namespace {

constexpr int kThresholdsNotMet = 4;

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = false) {
  cmd->add_option("--seed", c.seed, "Random seed, overrides the config");
  cmd->add_option("--config", c.config, "Run configuration (JSON)");
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig::synthetic_default() : RunConfig::load(c.config);
  if (c.seed) cfg.experiment.seed = *c.seed;
  return cfg;
}

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Polygon polygon_for(const std::string& path) { return read_geojson_polygon(path); }

// ---------------------------------------------------------------------------

struct IngestArgs {
  Common common;
  std::string dialect, input, polygon, region_id = "region";
  std::optional<int> utc_offset;
};

int cmd_ingest(const IngestArgs& a) {
  const Dialect dialect = parse_dialect(a.dialect);
  ParseOptions opts;
  opts.utc_offset_minutes = a.utc_offset;
  IngestReport report;
  auto trips = parse_trip_file(a.input, dialect, report, opts);
  report.retained = trips.size();
  if (!a.polygon.empty()) {
    const int offset = a.utc_offset.value_or(default_utc_offset_minutes(dialect));
    auto clipped = clip_to_region(std::move(trips), polygon_for(a.polygon), a.region_id, offset);
    report.retained = clipped.dataset.trips.size();
    report.clipped = clipped.dropped;
    trips = std::move(clipped.dataset.trips);
  }
  write_canonical_csv_file(a.common.out, trips);
  std::cout << report.to_json().dump(2) << '\n';
  return 0;
}

struct GridArgs {
  Common common;
  std::string trips, polygon, region_id = "region", epoch;
  double edge_km = 1.4;
  int interval_min = 30;
  int utc_offset = 0;
};

int cmd_grid(const GridArgs& a) {
  IngestReport report;
  RegionDataset ds;
  ds.region_id = a.region_id;
  ds.polygon = polygon_for(a.polygon);
  ds.utc_offset_minutes = a.utc_offset;
  ds.trips = parse_trip_file(a.trips, Dialect::CanonicalCsv, report);
  require(!ds.trips.empty(), ErrorKind::DataQuality, "no trips in " + a.trips);
  auto grid = std::make_shared<const HexGrid>(HexGrid::build(ds.polygon, a.edge_km));
  UnixSeconds epoch = default_epoch(ds);
  if (!a.epoch.empty()) {
    auto t = parse_iso8601_utc(a.epoch);
    require(t.has_value(), ErrorKind::Config, "--epoch must be an ISO-8601 UTC timestamp");
    epoch = *t;
  }
  UnixSeconds last = epoch;
  for (const auto& t : ds.trips) last = std::max(last, t.pickup_time);
  CountReport counts;
  const auto demand = count_demand(ds, grid, a.interval_min, epoch, bin_time(last, a.interval_min, epoch) + 1, &counts);
  write_demand(demand, a.common.out);
  std::cout << nlohmann::json{{"cells", grid->size()},
                              {"slots", demand.num_slots()},
                              {"counted", counts.counted},
                              {"out_of_window", counts.out_of_window},
                              {"outside_grid", counts.outside_grid}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_synth(const Common& c) {
  RunConfig cfg = load_config(c);
  require(cfg.synthetic.has_value(), ErrorKind::Config, "config has no 'synthetic' section");
  SynthConfig sc = *cfg.synthetic;
  if (c.seed) sc.seed = *c.seed;
  write_synthetic(sc, c.out);
  std::cout << "wrote " << sc.n_regions << " regions to " << c.out << '\n';
  return 0;
}

struct TrainArgs {
  Common common;
  std::string hold_out;
  std::optional<int> epochs;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_config(a.common);
  cfg.experiment.held_out_region = a.hold_out;
  if (a.epochs) cfg.experiment.max_epochs = *a.epochs;
  cfg.validate();
  auto regions = prepare_regions(cfg);
  std::map<std::string, std::vector<RegionGraph>> train_sets;
  bool found = false;
  for (auto& r : regions) {
    if (r.region_id == a.hold_out) {
      found = true;
    } else {
      train_sets[r.region_id] = std::move(r.snapshots);
    }
  }
  require(found, ErrorKind::Config, "--hold-out '" + a.hold_out + "' is not a configured region");
  TrainOptions opts;
  opts.failure_checkpoint_path = a.common.out + ".failed";
  opts.on_epoch = [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " main " << e.main.total << " adversarial " << e.adversarial.total << '\n';
  };
  auto result = train(cfg.experiment, cfg.features, train_sets, opts);
  save_checkpoint({result.params, cfg.features, result.vocabulary, cfg.experiment.seed, cfg.experiment.to_json()},
                  a.common.out);
  result.history.write_jsonl(a.common.out + ".history.jsonl");
  std::cout << "checkpoint " << a.common.out << " (" << result.steps << " steps)\n";
  return 0;
}

struct EvaluateArgs {
  Common common;
  std::string ckpt, region, baselines;
};

int cmd_evaluate(const EvaluateArgs& a) {
  RunConfig cfg = load_config(a.common);
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  require(ckpt.feature_spec == cfg.features, ErrorKind::Contract, "config features differ from the checkpoint's");
  ExperimentConfig exp = ExperimentConfig::from_json(ckpt.experiment);
  if (a.common.seed) exp.seed = *a.common.seed;
  auto regions = prepare_regions(cfg);

  std::vector<RegionGraph> test;
  std::map<std::string, std::vector<RegionGraph>> train_sets;
  for (auto& r : regions) {
    if (r.region_id == a.region) test = r.snapshots;
    if (std::find(ckpt.vocabulary.begin(), ckpt.vocabulary.end(), r.region_id) != ckpt.vocabulary.end()) {
      train_sets[r.region_id] = std::move(r.snapshots);
    }
  }
  require(!test.empty(), ErrorKind::Config, "--region '" + a.region + "' is not a configured region");
  MetricsReport report = evaluate_unseen(ckpt.params, ckpt.vocabulary, test, cfg.accuracy_threshold);
  report.seed = exp.seed;
  report.config_fingerprint = config_fingerprint(ckpt.experiment);
  for (const auto& [r, g] : train_sets) report.train_samples[r] = g.size();

  std::vector<std::string> names;
  std::stringstream ss(a.baselines);
  for (std::string name; std::getline(ss, name, ',');) {
    if (!name.empty()) names.push_back(name);
  }
  for (const auto& name : names) parse_baseline(name);
  if (!names.empty()) {
    require(train_sets.size() == ckpt.vocabulary.size(), ErrorKind::Vocabulary,
            "baselines need every checkpoint training region in the config");
  }
  for (const auto& name : names) report.baselines[name] = run_baseline(name, train_sets, test, exp).metrics;

  const std::string out = a.common.out.empty() ? cfg.resolve(cfg.output_dir) : a.common.out;
  render_report({report}, out);
  std::cout << report.to_json().dump(2) << '\n';
  return 0;
}

struct PredictArgs {
  Common common;
  std::string ckpt, trips, polygon, region_id = "target", epoch;
  std::optional<std::int64_t> slot;
  std::optional<std::int64_t> num_slots;
};

int cmd_predict(const PredictArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const ExperimentConfig exp = ExperimentConfig::from_json(ckpt.experiment);
  IngestReport report;
  RegionDataset ds;
  ds.region_id = a.region_id;
  ds.polygon = polygon_for(a.polygon);
  ds.trips = parse_trip_file(a.trips, Dialect::CanonicalCsv, report);
  require(!ds.trips.empty(), ErrorKind::InsufficientHistory, "no trips in " + a.trips);

  auto grid = std::make_shared<const HexGrid>(HexGrid::build(ds.polygon, exp.edge_km));
  UnixSeconds epoch = default_epoch(ds);
  if (!a.epoch.empty()) {
    auto t = parse_iso8601_utc(a.epoch);
    require(t.has_value(), ErrorKind::Config, "--epoch must be an ISO-8601 UTC timestamp");
    epoch = *t;
  }
  std::int64_t num_slots = 0;
  if (a.num_slots) {
    num_slots = *a.num_slots;
  } else {
    UnixSeconds last = epoch;
    for (const auto& t : ds.trips) last = std::max(last, t.pickup_time);
    num_slots = bin_time(last, exp.interval_min, epoch) + 1;
  }
  const DemandTensor demand = count_demand(ds, grid, exp.interval_min, epoch, num_slots);
  const std::int64_t t = a.slot.value_or(num_slots - 1);
  require(t >= 0 && t < num_slots, ErrorKind::OutOfRange, "--slot outside the history window");
  require(t + 1 >= ckpt.feature_spec.history, ErrorKind::InsufficientHistory,
          "history covers " + std::to_string(t + 1) + " slots, the model needs " +
              std::to_string(ckpt.feature_spec.history));

  RegionGraph g;
  g.region_id = a.region_id;
  g.topology = build_topology(*grid, ds, TimeRange{epoch, demand.slot_start(num_slots)});
  g.node_features = node_features(demand, t, ckpt.feature_spec, lag_scale(demand, 0, num_slots));
  g.slot = t;
  const Vector yhat = predict_unseen(ckpt.params, g);

  std::ofstream out(a.common.out);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + a.common.out);
  out << "cell_id,lat,lon,predicted_demand\n";
  for (const auto& cell : grid->cells()) {
    out << cell.id << ',' << shortest(cell.centroid.lat) << ',' << shortest(cell.centroid.lon) << ','
        << shortest(yhat(cell.id)) << '\n';
  }
  std::cout << "predicted slot " << t + 1 << " for " << grid->size() << " cells\n";
  return 0;
}

struct E2EArgs {
  Common common;
  bool dry_run = false;
  bool quiet = false;
  std::optional<int> epochs;
};

int cmd_e2e(const E2EArgs& a) {
  RunConfig cfg = load_config(a.common);
  if (a.epochs) cfg.experiment.max_epochs = *a.epochs;
  cfg.validate();
  if (a.dry_run) {
    int i = 1;
    for (const auto& line : e2e_plan(cfg)) std::cout << i++ << ". " << line << '\n';
    return 0;
  }
  std::optional<std::string> out;
  if (!a.common.out.empty()) out = a.common.out;
  const E2EResult result = run_e2e(cfg, a.quiet ? nullptr : &std::cerr, out);
  for (const auto& run : result.runs) {
    for (const auto& c : run.checks) {
      std::cout << (c.passed ? "PASS " : "FAIL ") << run.plan.test_region << ": " << c.name << " = " << c.value
                << " (bound " << c.bound << ")\n";
    }
  }
  return result.all_passed() ? 0 : kThresholdsNotMet;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-region taxi demand prediction with disentangled graph representations"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Parse a public trip export into canonical CSV");
  add_common(c_ingest, ingest.common, true);
  c_ingest->add_option("--dialect", ingest.dialect, "nyc_yellow, chicago, sf_cabspotting or canonical_csv")->required();
  c_ingest->add_option("--input", ingest.input, "File or directory")->required();
  c_ingest->add_option("--polygon", ingest.polygon, "Clip to this GeoJSON polygon");
  c_ingest->add_option("--region-id", ingest.region_id, "Region label when clipping");
  c_ingest->add_option("--utc-offset", ingest.utc_offset, "Source UTC offset in minutes");

  GridArgs grid;
  auto* c_grid = app.add_subcommand("grid", "Count demand per hexagon and time slot");
  add_common(c_grid, grid.common, true);
  c_grid->add_option("--trips", grid.trips, "Canonical CSV")->required();
  c_grid->add_option("--polygon", grid.polygon, "Region GeoJSON polygon")->required();
  c_grid->add_option("--region-id", grid.region_id, "Region label");
  c_grid->add_option("--edge-km", grid.edge_km, "Hexagon edge length in km");
  c_grid->add_option("--interval-min", grid.interval_min, "Slot length in minutes");
  c_grid->add_option("--epoch", grid.epoch, "First slot start (ISO-8601 UTC)");
  c_grid->add_option("--utc-offset", grid.utc_offset, "Region UTC offset in minutes");

  Common synth;
  auto* c_synth = app.add_subcommand("synth", "Generate synthetic regions");
  add_common(c_synth, synth, true);

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train with one region held out");
  add_common(c_train, tr.common, true);
  c_train->get_option("--config")->required();
  c_train->add_option("--hold-out", tr.hold_out, "Region excluded from training")->required();
  c_train->add_option("--epochs", tr.epochs, "Override experiment.max_epochs");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on an unseen region");
  add_common(c_eval, ev.common);
  c_eval->get_option("--config")->required();
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  c_eval->add_option("--region", ev.region, "Held-out region")->required();
  c_eval->add_option("--baselines", ev.baselines, "Comma-separated baseline names");

  PredictArgs pr;
  auto* c_pred = app.add_subcommand("predict", "Forecast next-slot demand for a region");
  add_common(c_pred, pr.common, true);
  c_pred->add_option("--ckpt", pr.ckpt, "Checkpoint")->required();
  c_pred->add_option("--trips", pr.trips, "Canonical CSV history of the region")->required();
  c_pred->add_option("--polygon", pr.polygon, "Region GeoJSON polygon")->required();
  c_pred->add_option("--region-id", pr.region_id, "Region label");
  c_pred->add_option("--slot", pr.slot, "Predict for slot + 1 (default: last slot of the history)");
  c_pred->add_option("--epoch", pr.epoch, "First slot start (ISO-8601 UTC)");
  c_pred->add_option("--num-slots", pr.num_slots, "History length in slots");

  E2EArgs e2e;
  auto* c_e2e = app.add_subcommand("e2e", "Run the whole experiment from one config");
  add_common(c_e2e, e2e.common);
  c_e2e->add_flag("--dry-run", e2e.dry_run, "Print the stage plan and exit");
  c_e2e->add_flag("--quiet", e2e.quiet, "No progress log");
  c_e2e->add_option("--epochs", e2e.epochs, "Override experiment.max_epochs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest);
    if (c_grid->parsed()) return cmd_grid(grid);
    if (c_synth->parsed()) return cmd_synth(synth);
    if (c_train->parsed()) return cmd_train(tr);
    if (c_eval->parsed()) return cmd_evaluate(ev);
    if (c_pred->parsed()) return cmd_predict(pr);
    if (c_e2e->parsed()) return cmd_e2e(e2e);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
