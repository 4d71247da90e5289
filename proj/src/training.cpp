#include "xregion/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "xregion/checkpoint.hpp"
#include "xregion/error.hpp"
#include "xregion/optimizer.hpp"

namespace xregion {
namespace {

constexpr std::uint64_t kInitStream = 101;
constexpr std::uint64_t kShuffleStream = 102;
constexpr std::uint64_t kStepStream = 103;
constexpr std::uint64_t kEvalStream = 104;

template <class Params>
std::vector<Matrix*> all_tensors(Params& p) {
  std::vector<Matrix*> out;
  for_each_tensor(p, [&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<Matrix*> encoder_tensors(ModelParams& p) {
  std::vector<Matrix*> out;
  for_each_tensor(p, [&](const std::string& name, Matrix& m) {
    if (name.rfind("enc_", 0) == 0) out.push_back(&m);
  });
  return out;
}

std::vector<const Matrix*> const_view(const std::vector<Matrix*>& v) { return {v.begin(), v.end()}; }

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::Config, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    require(ok, ErrorKind::Config, "unknown key '" + key + "' in " + where);
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  require(learning_rate > 0 && std::isfinite(learning_rate), ErrorKind::Config, "learning_rate must be > 0");
  require(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
  require(max_epochs >= 0, ErrorKind::Config, "max_epochs must be >= 0");
  require(latent_dim >= 1 && hidden1 >= 1 && hidden2 >= 1 && head_hidden >= 1, ErrorKind::Config,
          "layer widths must be >= 1");
  require(edge_km > 0, ErrorKind::Config, "edge_km must be > 0");
  require(interval_min > 0 && 1440 % interval_min == 0, ErrorKind::Config, "interval_min must divide a day");
  require(history >= 1, ErrorKind::Config, "h must be >= 1");
  require(lambda_elbo >= 0 && lambda_ts >= 0 && lambda_ie >= 0, ErrorKind::Config, "loss weights must be >= 0");
  require(snapshot_stride >= 1, ErrorKind::Config, "snapshot_stride must be >= 1");
  require(!patience || *patience >= 1, ErrorKind::Config, "patience must be >= 1");
  require(probe_every >= 0, ErrorKind::Config, "probe_every must be >= 0");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j = {{"learning_rate", learning_rate}, {"batch_size", batch_size},
                      {"max_epochs", max_epochs},       {"latent_dim", latent_dim},
                      {"hidden1", hidden1},             {"hidden2", hidden2},
                      {"head_hidden", head_hidden},     {"edge_km", edge_km},
                      {"interval_min", interval_min},   {"h", history},
                      {"lambda_elbo", lambda_elbo},     {"lambda_ts", lambda_ts},
                      {"lambda_ie", lambda_ie},         {"seed", seed},
                      {"held_out_region", held_out_region}, {"snapshot_stride", snapshot_stride},
                      {"probe_every", probe_every}};
  j["patience"] = patience ? nlohmann::json(*patience) : nlohmann::json(nullptr);
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  check_keys(j,
             {"learning_rate", "batch_size", "max_epochs", "latent_dim", "hidden1", "hidden2", "head_hidden",
              "edge_km", "interval_min", "h", "lambda_elbo", "lambda_ts", "lambda_ie", "seed", "held_out_region",
              "snapshot_stride", "patience", "probe_every"},
             "experiment");
  ExperimentConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.hidden1 = j.value("hidden1", c.hidden1);
    c.hidden2 = j.value("hidden2", c.hidden2);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.edge_km = j.value("edge_km", c.edge_km);
    c.interval_min = j.value("interval_min", c.interval_min);
    c.history = j.value("h", c.history);
    c.lambda_elbo = j.value("lambda_elbo", c.lambda_elbo);
    c.lambda_ts = j.value("lambda_ts", c.lambda_ts);
    c.lambda_ie = j.value("lambda_ie", c.lambda_ie);
    c.seed = j.value("seed", c.seed);
    c.held_out_region = j.value("held_out_region", c.held_out_region);
    c.snapshot_stride = j.value("snapshot_stride", c.snapshot_stride);
    c.probe_every = j.value("probe_every", c.probe_every);
    if (j.contains("patience") && !j["patience"].is_null()) c.patience = j["patience"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("invalid experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig ExperimentConfig::model_config(int input_dim, int num_regions) const {
  ModelConfig m;
  m.input_dim = input_dim;
  m.hidden1 = hidden1;
  m.hidden2 = hidden2;
  m.latent_dim = latent_dim;
  m.head_hidden = head_hidden;
  m.num_regions = num_regions;
  m.lambda_elbo = lambda_elbo;
  m.lambda_ts = lambda_ts;
  m.lambda_ie = lambda_ie;
  m.validate();
  return m;
}

std::vector<SplitPlan> make_loco_splits(const std::vector<std::string>& regions) {
  std::vector<std::string> sorted = regions;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::Config,
          "duplicate region label in split request");
  require(sorted.size() >= 3, ErrorKind::Config,
          "leave-one-region-out needs at least 3 regions so that 2 remain for the region classifier");
  std::vector<SplitPlan> plans;
  for (const auto& test : regions) {
    SplitPlan p;
    p.test_region = test;
    for (const auto& r : sorted) {
      if (r != test) p.train_regions.push_back(r);
    }
    plans.push_back(std::move(p));
  }
  return plans;
}

void count_samples(SplitPlan& plan, const std::map<std::string, std::vector<RegionGraph>>& datasets) {
  plan.samples_per_region.clear();
  plan.total_samples = 0;
  for (const auto& r : plan.train_regions) {
    auto it = datasets.find(r);
    require(it != datasets.end(), ErrorKind::Config, "no snapshots for training region " + r);
    plan.samples_per_region[r] = it->second.size();
    plan.total_samples += it->second.size();
  }
}

std::string TrainingHistory::to_jsonl() const {
  std::ostringstream out;
  for (const auto& e : epochs) {
    for (Phase phase : {Phase::Main, Phase::Adversarial}) {
      nlohmann::json line = {{"epoch", e.epoch}, {"phase", phase == Phase::Main ? "main" : "adversarial"}};
      line["losses"] = (phase == Phase::Main ? e.main : e.adversarial).to_json();
      if (phase == Phase::Main && e.probe_agnostic) {
        line["probe"] = {{"agnostic", *e.probe_agnostic}, {"specific", *e.probe_specific}};
      }
      out << line.dump() << '\n';
    }
  }
  return out.str();
}

void TrainingHistory::write_jsonl(const std::string& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
  out << to_jsonl();
}

TrainResult train(const ExperimentConfig& config, const FeatureSpec& spec,
                  const std::map<std::string, std::vector<RegionGraph>>& datasets, const TrainOptions& options) {
  config.validate();
  spec.validate();
  require(spec.history == config.history, ErrorKind::Config, "feature spec history differs from experiment h");
  require(datasets.size() >= 2, ErrorKind::Config, "training needs at least 2 regions");
  require(config.held_out_region.empty() || !datasets.contains(config.held_out_region), ErrorKind::Config,
          "held-out region " + config.held_out_region + " is among the training datasets");

  TrainResult result;
  result.feature_spec = spec;
  std::vector<RegionGraph> graphs;
  for (const auto& [region, list] : datasets) {
    require(!list.empty(), ErrorKind::Config, "no snapshots for training region " + region);
    const int index = static_cast<int>(result.vocabulary.size());
    result.vocabulary.push_back(region);
    for (const auto& g : list) {
      require(g.node_features.cols() == spec.feature_dim(), ErrorKind::Contract,
              "snapshot of " + region + " has feature width " + std::to_string(g.node_features.cols()) +
                  ", expected " + std::to_string(spec.feature_dim()));
      graphs.push_back(g);
      graphs.back().region_id = region;
      graphs.back().region_index = index;
    }
  }
  std::vector<const RegionGraph*> all;
  for (const auto& g : graphs) all.push_back(&g);

  const ModelConfig mc = config.model_config(spec.feature_dim(), static_cast<int>(result.vocabulary.size()));
  ModelParams& params = result.params;
  params = ModelParams::init(mc, derive_seed(config.seed, kInitStream));

  auto probe = [&](EpochRecord& rec) {
    if (config.probe_every > 0 && rec.epoch % config.probe_every == 0) {
      rec.probe_agnostic = probe_region_leakage(params, all, LatentKind::Agnostic, config.seed);
      rec.probe_specific = probe_region_leakage(params, all, LatentKind::Specific, config.seed);
    }
  };

  {
    EpochRecord rec;
    const std::uint64_t s = derive_seed(config.seed, kEvalStream);
    rec.main = batch_loss(all, params, Phase::Main, derive_seed(s, 0));
    rec.adversarial = batch_loss(all, params, Phase::Adversarial, derive_seed(s, 1));
    probe(rec);
    result.history.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }

  Adam main_opt(config.learning_rate), adv_opt(config.learning_rate);
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, kShuffleStream));
  const std::uint64_t step_base = derive_seed(config.seed, kStepStream);
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best_main = result.history.epochs[0].main.total;
  int stale_epochs = 0;
  bool stop = false;

  for (int epoch = 1; epoch <= config.max_epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      if (options.max_steps >= 0 && result.steps >= options.max_steps) {
        stop = true;
        break;
      }
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::vector<const RegionGraph*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&graphs[order[i]]);
      const ModelParams last_good = params;
      try {
        ModelParams grad = params.zeros_like();
        LossBreakdown lm =
            batch_loss(batch, params, Phase::Main, derive_seed(step_base, 2 * static_cast<std::uint64_t>(result.steps)),
                       &grad);
        main_opt.step(all_tensors(params), const_view(all_tensors(grad)));
        if (options.on_step) options.on_step(result.steps, Phase::Main, last_good, params);

        const ModelParams after_main = options.on_step ? params : ModelParams{};
        ModelParams agrad = params.zeros_like();
        LossBreakdown la = batch_loss(batch, params, Phase::Adversarial,
                                      derive_seed(step_base, 2 * static_cast<std::uint64_t>(result.steps) + 1), &agrad);
        adv_opt.step(encoder_tensors(params), const_view(encoder_tensors(agrad)));
        if (options.on_step) options.on_step(result.steps, Phase::Adversarial, after_main, params);

        for (const Matrix* m : all_tensors(params)) {
          require(m->allFinite(), ErrorKind::Numerical, "non-finite parameter after update");
        }
        const double w = static_cast<double>(batch.size());
        lm *= w;
        la *= w;
        rec.main += lm;
        rec.adversarial += la;
        seen += batch.size();
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numerical) throw;
        std::string where = "epoch " + std::to_string(epoch) + ", step " + std::to_string(result.steps);
        if (!options.failure_checkpoint_path.empty()) {
          save_checkpoint({last_good, spec, result.vocabulary, config.seed, config.to_json()},
                          options.failure_checkpoint_path);
          where += "; last good parameters saved to " + options.failure_checkpoint_path;
        }
        fail(ErrorKind::Numerical, std::string("training diverged (") + e.what() + ") at " + where);
      }
      ++result.steps;
    }
    if (seen == 0) break;
    rec.main *= 1.0 / static_cast<double>(seen);
    rec.adversarial *= 1.0 / static_cast<double>(seen);
    probe(rec);
    result.history.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    if (config.patience) {
      if (rec.main.total < best_main) {
        best_main = rec.main.total;
        stale_epochs = 0;
      } else if (++stale_epochs >= *config.patience) {
        stop = true;
      }
    }
  }
  return result;
}

Matrix pooled_latents(const ModelParams& params, const std::vector<const RegionGraph*>& graphs, LatentKind kind) {
  const EncoderParams& enc = kind == LatentKind::Agnostic ? params.enc_agnostic : params.enc_specific;
  Matrix out(static_cast<Eigen::Index>(graphs.size()), params.config.latent_dim);
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto s = encode(graphs[i]->node_features, graphs[i]->adjacency_norm(), enc, EncodeMode::deterministic());
    out.row(static_cast<Eigen::Index>(i)) = s.mu.colwise().mean();
  }
  return out;
}

double linear_probe_accuracy(const Matrix& features, const std::vector<int>& labels, int num_classes,
                             std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(features.rows());
  require(n == labels.size(), ErrorKind::Contract, "probe feature/label count mismatch");
  require(n >= 2 && num_classes >= 2, ErrorKind::Contract, "probe needs at least 2 samples and 2 classes");
  for (int l : labels) require(l >= 0 && l < num_classes, ErrorKind::Contract, "probe label out of range");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 0x9e0be));
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_train = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(0.8 * n)), 1, n - 1);

  const Eigen::Index d = features.cols();
  Matrix xtr(static_cast<Eigen::Index>(n_train), d + 1), xte(static_cast<Eigen::Index>(n - n_train), d + 1);
  Matrix ytr = Matrix::Zero(static_cast<Eigen::Index>(n_train), num_classes);
  RowVector mean = RowVector::Zero(d), sd = RowVector::Zero(d);
  for (std::size_t i = 0; i < n_train; ++i) mean += features.row(static_cast<Eigen::Index>(idx[i]));
  mean /= static_cast<double>(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    sd += (features.row(static_cast<Eigen::Index>(idx[i])) - mean).array().square().matrix();
  }
  sd = (sd / static_cast<double>(n_train)).array().sqrt().max(1e-12).matrix();
  for (std::size_t i = 0; i < n; ++i) {
    const RowVector row = (features.row(static_cast<Eigen::Index>(idx[i])) - mean).cwiseQuotient(sd);
    Matrix& x = i < n_train ? xtr : xte;
    const auto r = static_cast<Eigen::Index>(i < n_train ? i : i - n_train);
    x.row(r).head(d) = row;
    x(r, d) = 1.0;
    if (i < n_train) ytr(r, labels[idx[i]]) = 1.0;
  }

  Matrix w = Matrix::Zero(d + 1, num_classes), g;
  Adam opt(0.05);
  constexpr double kWeightDecay = 1e-4;
  for (int it = 0; it < 300; ++it) {
    Matrix logits = xtr * w;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      logits.row(r).array() -= logits.row(r).maxCoeff();
      logits.row(r) = logits.row(r).array().exp().matrix();
      logits.row(r) /= logits.row(r).sum();
    }
    g = xtr.transpose() * (logits - ytr) / static_cast<double>(n_train) + kWeightDecay * w;
    opt.step({&w}, {&g});
  }
  const Matrix scores = xte * w;
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index arg;
    scores.row(r).maxCoeff(&arg);
    correct += static_cast<int>(arg) == labels[idx[n_train + static_cast<std::size_t>(r)]];
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

double probe_region_leakage(const ModelParams& params, const std::vector<const RegionGraph*>& graphs, LatentKind kind,
                            std::uint64_t seed) {
  std::vector<int> labels;
  int num_classes = 0;
  for (const auto* g : graphs) {
    require(g->region_index >= 0, ErrorKind::Contract, "probe graph without a region index");
    labels.push_back(g->region_index);
    num_classes = std::max(num_classes, g->region_index + 1);
  }
  std::vector<int> distinct = labels;
  std::sort(distinct.begin(), distinct.end());
  require(std::unique(distinct.begin(), distinct.end()) - distinct.begin() >= 2, ErrorKind::Contract,
          "probe needs graphs from at least 2 regions");
  return linear_probe_accuracy(pooled_latents(params, graphs, kind), labels, num_classes, seed);
}

}  // namespace xregion
