#include "xregion/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>

#include "xregion/baselines.hpp"
#include "xregion/checkpoint.hpp"
#include "xregion/error.hpp"
#include "xregion/synthetic.hpp"

namespace xregion {
namespace {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage ") + name + ": " + e.what());
  }
}

AcceptanceCheck at_least(std::string name, double value, double bound) {
  return {std::move(name), value >= bound, value, bound};
}

AcceptanceCheck at_most(std::string name, double value, double bound) {
  return {std::move(name), value <= bound, value, bound};
}

nlohmann::json fingerprint_source(const RunConfig& config) {
  nlohmann::json j = config.to_json();
  j.erase("output_dir");
  return j;
}

}  // namespace

PreparedRegion prepare_region(RegionDataset dataset, double edge_km, int interval_min, const FeatureSpec& spec,
                              const PrepareOptions& options) {
  require(!dataset.trips.empty() || (options.epoch && options.num_slots), ErrorKind::DataQuality,
          "region " + dataset.region_id + " has no trips");
  PreparedRegion out;
  out.region_id = dataset.region_id;
  out.grid = std::make_shared<const HexGrid>(HexGrid::build(dataset.polygon, edge_km));
  const UnixSeconds epoch = options.epoch.value_or(default_epoch(dataset));
  std::int64_t num_slots = 0;
  if (options.num_slots) {
    num_slots = *options.num_slots;
  } else {
    UnixSeconds last = epoch;
    for (const auto& t : dataset.trips) last = std::max(last, t.pickup_time);
    num_slots = bin_time(last, interval_min, epoch) + 1;
  }
  out.demand = std::make_shared<const DemandTensor>(
      count_demand(dataset, out.grid, interval_min, epoch, num_slots, &out.counts));
  const TimeRange window{epoch, out.demand->slot_start(num_slots)};
  out.topology = build_topology(*out.grid, dataset, window);
  out.lag_scale = lag_scale(*out.demand, 0, num_slots);
  out.snapshots = build_snapshots(*out.demand, out.topology, spec, out.lag_scale, options.stride);
  out.dataset = std::move(dataset);
  return out;
}

std::vector<RegionDataset> load_region_datasets(const RunConfig& config, std::vector<IngestReport>* reports) {
  std::vector<RegionDataset> out;
  if (config.synthetic) {
    for (int r = 0; r < config.synthetic->n_regions; ++r) out.push_back(generate_region(*config.synthetic, r).dataset);
    return out;
  }
  std::set<std::string> seen;
  for (const auto& d : config.datasets) {
    require(seen.insert(d.region_id).second, ErrorKind::Config, "duplicate region id in datasets: " + d.region_id);
    const Dialect dialect = parse_dialect(d.dialect);
    const std::string polygon_path = config.resolve(d.polygon);
    const std::string data_path = config.resolve(d.path);
    require(std::filesystem::exists(polygon_path), ErrorKind::Config,
            "datasets[" + d.region_id + "].polygon: no such file " + polygon_path);
    require(std::filesystem::exists(data_path), ErrorKind::Config,
            "datasets[" + d.region_id + "].path: no such file or directory " + data_path);
    ParseOptions opts;
    opts.utc_offset_minutes = d.utc_offset_minutes;
    IngestReport report;
    auto trips = parse_trip_file(data_path, dialect, report, opts);
    const int offset = d.utc_offset_minutes.value_or(default_utc_offset_minutes(dialect));
    auto clipped = clip_to_region(std::move(trips), read_geojson_polygon(polygon_path), d.region_id, offset);
    report.retained = clipped.dataset.trips.size();
    report.clipped = clipped.dropped;
    if (reports) reports->push_back(report);
    out.push_back(std::move(clipped.dataset));
  }
  return out;
}

std::vector<PreparedRegion> prepare_regions(const RunConfig& config) {
  auto datasets = stage(config.synthetic ? "synth" : "ingest", [&] { return load_region_datasets(config); });
  std::vector<PreparedRegion> out;
  for (auto& ds : datasets) {
    PrepareOptions opts;
    opts.stride = config.experiment.snapshot_stride;
    if (config.synthetic) {
      opts.epoch = config.synthetic->start;
      opts.num_slots = config.synthetic->num_slots();
    }
    out.push_back(stage("grid+snapshots", [&] {
      return prepare_region(std::move(ds), config.experiment.edge_km, config.experiment.interval_min, config.features,
                            opts);
    }));
  }
  return out;
}

nlohmann::json AcceptanceCheck::to_json() const {
  return {{"name", name}, {"passed", passed}, {"value", value}, {"bound", bound}};
}

bool E2EResult::all_passed() const {
  for (const auto& r : runs)
    for (const auto& c : r.checks)
      if (!c.passed) return false;
  return true;
}

std::vector<std::string> e2e_plan(const RunConfig& config) {
  std::vector<std::string> plan;
  if (config.synthetic) {
    plan.push_back("synth: generate " + std::to_string(config.synthetic->n_regions) + " synthetic regions over " +
                   std::to_string(config.synthetic->days) + " days");
  } else {
    for (const auto& d : config.datasets) {
      plan.push_back("ingest: " + d.region_id + " from " + config.resolve(d.path) + " (" + d.dialect + ")");
    }
  }
  plan.push_back("grid: hexagons of edge " + std::to_string(config.experiment.edge_km) + " km, " +
                 std::to_string(config.experiment.interval_min) + "-minute slots");
  plan.push_back("snapshots: h = " + std::to_string(config.features.history) + ", stride " +
                 std::to_string(config.experiment.snapshot_stride));
  const std::string held = config.experiment.held_out_region.empty() ? "every region in turn"
                                                                     : config.experiment.held_out_region;
  plan.push_back("train: leave-one-region-out, held out " + held + ", " + std::to_string(config.experiment.max_epochs) +
                 " epochs, seed " + std::to_string(config.experiment.seed));
  std::string baselines;
  for (const auto& b : config.baselines) baselines += (baselines.empty() ? "" : ", ") + b;
  plan.push_back("evaluate: proposed model" + (baselines.empty() ? std::string() : " and " + baselines));
  plan.push_back("report: metrics_report.json, accuracy_chart.svg, acceptance.json");
  return plan;
}

E2EResult run_e2e(const RunConfig& config, std::ostream* log, std::optional<std::string> out_dir_override) {
  namespace fs = std::filesystem;
  config.validate();
  const std::string out_dir = out_dir_override.value_or(config.resolve(config.output_dir));
  stage("report", [&] {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    require(!ec && fs::is_directory(out_dir), ErrorKind::Io, "cannot create output directory " + out_dir);
    return 0;
  });

  std::vector<PreparedRegion> regions = prepare_regions(config);
  std::vector<std::string> ids;
  for (const auto& r : regions) ids.push_back(r.region_id);
  std::vector<SplitPlan> plans = stage("train", [&] { return make_loco_splits(ids); });
  if (!config.experiment.held_out_region.empty()) {
    auto it = std::find_if(plans.begin(), plans.end(),
                           [&](const SplitPlan& p) { return p.test_region == config.experiment.held_out_region; });
    require(it != plans.end(), ErrorKind::Config,
            "experiment.held_out_region '" + config.experiment.held_out_region + "' is not a configured region");
    plans = {*it};
  }

  const std::string fingerprint = config_fingerprint(fingerprint_source(config));
  E2EResult result;
  std::vector<MetricsReport> reports;
  nlohmann::json acceptance = nlohmann::json::array();

  for (auto& plan : plans) {
    HoldOutRun run;
    std::map<std::string, std::vector<RegionGraph>> train_sets;
    const PreparedRegion* test = nullptr;
    for (const auto& r : regions) {
      if (r.region_id == plan.test_region) {
        test = &r;
      } else {
        train_sets[r.region_id] = r.snapshots;
      }
    }
    count_samples(plan, train_sets);
    run.plan = plan;
    if (log) *log << "held out " << plan.test_region << ": " << plan.total_samples << " training snapshots\n";

    // Proposed model and baselines consume the same bytes for the test region.
    const std::string test_path = (fs::path(out_dir) / ("test_snapshots_" + plan.test_region + ".bin")).string();
    std::vector<RegionGraph> test_graphs = stage("snapshots", [&] {
      write_snapshots(test_path, test->snapshots, config.features);
      return read_snapshots(test_path);
    });

    ExperimentConfig exp = config.experiment;
    exp.held_out_region = plan.test_region;
    TrainOptions topts;
    topts.failure_checkpoint_path = (fs::path(out_dir) / ("failed_" + plan.test_region + ".ckpt")).string();
    if (log) {
      topts.on_epoch = [&](const EpochRecord& e) {
        *log << "  epoch " << e.epoch << " main " << e.main.total << " bce " << e.main.recon_bce << " mae "
             << e.main.mae << " ce " << e.main.cross_entropy << " | ie " << e.adversarial.independent_excitation
             << '\n';
      };
    }
    run.training = stage("train", [&] { return train(exp, config.features, train_sets, topts); });
    stage("train", [&] {
      save_checkpoint({run.training.params, config.features, run.training.vocabulary, exp.seed, exp.to_json()},
                      (fs::path(out_dir) / ("checkpoint_" + plan.test_region + ".ckpt")).string());
      run.training.history.write_jsonl((fs::path(out_dir) / ("history_" + plan.test_region + ".jsonl")).string());
      return 0;
    });

    stage("evaluate", [&] {
      run.report =
          evaluate_unseen(run.training.params, run.training.vocabulary, test_graphs, config.accuracy_threshold);
      run.report.train_samples = plan.samples_per_region;
      run.report.config_fingerprint = fingerprint;
      run.report.seed = exp.seed;

      std::vector<RegionGraph> probe_graphs;
      for (std::size_t i = 0; i < run.training.vocabulary.size(); ++i) {
        for (const auto& g : train_sets.at(run.training.vocabulary[i])) {
          probe_graphs.push_back(g);
          probe_graphs.back().region_index = static_cast<int>(i);
        }
      }
      std::vector<const RegionGraph*> ptrs;
      for (const auto& g : probe_graphs) ptrs.push_back(&g);
      run.probe_agnostic = probe_region_leakage(run.training.params, ptrs, LatentKind::Agnostic, exp.seed);
      run.probe_specific = probe_region_leakage(run.training.params, ptrs, LatentKind::Specific, exp.seed);
      return 0;
    });
    if (log) {
      *log << "  proposed accuracy " << run.report.proposed.accuracy << " mae " << run.report.proposed.mae
           << "; probe z " << run.probe_agnostic << " z_r " << run.probe_specific << '\n';
    }

    for (const auto& name : config.baselines) {
      BaselineRun b = stage("evaluate", [&] { return run_baseline(name, train_sets, test_graphs, exp); });
      require(b.train_samples == plan.samples_per_region, ErrorKind::Contract,
              "baseline " + name + " saw a different split than the proposed model");
      run.report.baselines[name] = b.metrics;
      if (log) *log << "  " << name << " accuracy " << b.metrics.accuracy << " mae " << b.metrics.mae << '\n';
    }

    const auto& t = config.acceptance;
    const double acc = run.report.proposed.accuracy;
    if (t.min_margin_over_gcn_direct && run.report.baselines.contains("gcn_direct")) {
      const double gcn = run.report.baselines.at("gcn_direct").accuracy;
      run.checks.push_back(at_least("accuracy margin over gcn_direct", acc - gcn, *t.min_margin_over_gcn_direct));
    }
    if (t.proposed_at_least_other_baselines) {
      for (const auto& [name, m] : run.report.baselines) {
        if (name != "gcn_direct") run.checks.push_back(at_least("accuracy minus " + name, acc - m.accuracy, 0.0));
      }
    }
    if (t.min_probe_specific) {
      run.checks.push_back(at_least("probe accuracy on z_r", run.probe_specific, *t.min_probe_specific));
    }
    if (t.max_probe_agnostic_over_chance) {
      const double chance = 1.0 / static_cast<double>(run.training.vocabulary.size());
      run.checks.push_back(
          at_most("probe accuracy on z", run.probe_agnostic, chance + *t.max_probe_agnostic_over_chance));
    }
    if (t.min_bce_reduction && run.training.history.epochs.size() > 1) {
      const double b0 = run.training.history.epochs.front().main.recon_bce;
      const double b1 = run.training.history.epochs.back().main.recon_bce;
      run.checks.push_back(at_least("relative reconstruction BCE reduction", (b0 - b1) / b0, *t.min_bce_reduction));
    }

    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : run.checks) checks.push_back(c.to_json());
    acceptance.push_back({{"held_out_region", plan.test_region},
                          {"probe_agnostic", run.probe_agnostic},
                          {"probe_specific", run.probe_specific},
                          {"checks", checks}});
    reports.push_back(run.report);
    result.runs.push_back(std::move(run));
  }

  stage("report", [&] {
    render_report(reports, out_dir);
    std::ofstream out(fs::path(out_dir) / "acceptance.json");
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write into " + out_dir);
    out << nlohmann::json{{"all_passed", result.all_passed()}, {"runs", acceptance}}.dump(2) << '\n';
    return 0;
  });
  return result;
}

}  // namespace xregion
