#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "xregion/checkpoint.hpp"
#include "xregion/error.hpp"
#include "xregion/optimizer.hpp"
#include "xregion/training.hpp"

using namespace xregion;

namespace {

FeatureSpec tiny_spec() {
  FeatureSpec s;
  s.history = 2;
  s.include_day_onehot = false;
  s.include_slot_encoding = false;
  s.include_relative_coords = false;
  return s;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.history = 2;
  c.batch_size = 4;
  c.max_epochs = 3;
  c.hidden1 = 6;
  c.hidden2 = 5;
  c.latent_dim = 3;
  c.head_hidden = 4;
  c.learning_rate = 1e-2;
  c.seed = 5;
  return c;
}

std::map<std::string, std::vector<RegionGraph>> tiny_sets(int per_region = 6) {
  std::mt19937_64 rng(17);
  std::map<std::string, std::vector<RegionGraph>> sets;
  for (const std::string r : {"a", "b", "c"}) {
    for (int i = 0; i < per_region; ++i) sets[r].push_back(testutil::random_graph(5, 2, -1, rng));
  }
  return sets;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::Contract;
}

}  // namespace

TEST_CASE("leave-one-region-out splits") {
  const auto plans = make_loco_splits({"nyc", "chicago", "sf", "seattle"});
  REQUIRE(plans.size() == 4);
  for (const auto& p : plans) {
    CHECK(p.train_regions.size() == 3);
    CHECK(std::is_sorted(p.train_regions.begin(), p.train_regions.end()));
    CHECK(std::find(p.train_regions.begin(), p.train_regions.end(), p.test_region) == p.train_regions.end());
  }
  CHECK(plans[0].test_region == "nyc");
  CHECK(kind_of([] { make_loco_splits({"a", "b"}); }) == ErrorKind::Config);
  CHECK(kind_of([] { make_loco_splits({"a", "b", "a"}); }) == ErrorKind::Config);

  SplitPlan p = plans[0];
  std::map<std::string, std::vector<RegionGraph>> sets;
  sets["chicago"].resize(3);
  sets["sf"].resize(4);
  sets["seattle"].resize(5);
  count_samples(p, sets);
  CHECK(p.total_samples == 12);
  CHECK(p.samples_per_region.at("sf") == 4);
  sets.erase("sf");
  CHECK(kind_of([&] { count_samples(p, sets); }) == ErrorKind::Config);
}

TEST_CASE("Adam first step moves each coordinate by the learning rate against the gradient sign") {
  Matrix p(1, 3), g(1, 3);
  p << 1.0, -2.0, 0.5;
  g << 0.3, -4.0, 1e-3;
  const Matrix start = p;
  Adam opt(0.1);
  opt.step({&p}, {&g});
  CHECK(p(0, 0) == doctest::Approx(start(0, 0) - 0.1));
  CHECK(p(0, 1) == doctest::Approx(start(0, 1) + 0.1));
  CHECK(p(0, 2) == doctest::Approx(start(0, 2) - 0.1).epsilon(1e-4));
  CHECK(opt.steps() == 1);

  SUBCASE("second step follows the bias-corrected moments") {
    Matrix g2(1, 3);
    g2 << -0.3, 1.0, 0.0;
    const Matrix before = p;
    opt.step({&p}, {&g2});
    for (int i = 0; i < 3; ++i) {
      const double m = 0.9 * 0.1 * g(0, i) + 0.1 * g2(0, i);
      const double v = 0.999 * 0.001 * g(0, i) * g(0, i) + 0.001 * g2(0, i) * g2(0, i);
      const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
      CHECK(p(0, i) == doctest::Approx(before(0, i) - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)));
    }
  }
}

TEST_CASE("training is deterministic and records an initial evaluation") {
  const auto sets = tiny_sets();
  const ExperimentConfig cfg = tiny_config();
  const TrainResult a = train(cfg, tiny_spec(), sets);
  const TrainResult b = train(cfg, tiny_spec(), sets);
  CHECK(a.vocabulary == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(a.history.epochs.size() == 4);
  CHECK(a.history.epochs[0].epoch == 0);
  CHECK(a.steps == 3 * 5);  // 18 graphs in batches of 4
  CHECK(a.history.to_jsonl() == b.history.to_jsonl());
  bool same = true;
  std::vector<const Matrix*> ta, tb;
  for_each_tensor(a.params, [&](const std::string&, const Matrix& m) { ta.push_back(&m); });
  for_each_tensor(b.params, [&](const std::string&, const Matrix& m) { tb.push_back(&m); });
  for (std::size_t i = 0; i < ta.size(); ++i) same = same && *ta[i] == *tb[i];
  CHECK(same);

  std::istringstream lines(a.history.to_jsonl());
  int n = 0;
  for (std::string line; std::getline(lines, line); ++n) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("phase") == (n % 2 == 0 ? "main" : "adversarial"));
  }
  CHECK(n == 8);

  ExperimentConfig other = cfg;
  other.seed = 6;
  CHECK(train(other, tiny_spec(), sets).history.to_jsonl() != a.history.to_jsonl());
}

TEST_CASE("adversarial steps change only encoder tensors") {
  const auto sets = tiny_sets();
  TrainOptions opts;
  int adversarial = 0;
  opts.max_steps = 20;
  opts.on_step = [&](std::int64_t, Phase phase, const ModelParams& before, const ModelParams& after) {
    if (phase != Phase::Adversarial) return;
    ++adversarial;
    std::vector<std::pair<std::string, const Matrix*>> tb, ta;
    for_each_tensor(before, [&](const std::string& n, const Matrix& m) { tb.emplace_back(n, &m); });
    for_each_tensor(after, [&](const std::string& n, const Matrix& m) { ta.emplace_back(n, &m); });
    for (std::size_t i = 0; i < tb.size(); ++i) {
      if (tb[i].first.rfind("heads.", 0) == 0) CHECK(*tb[i].second == *ta[i].second);
    }
  };
  ExperimentConfig cfg = tiny_config();
  cfg.max_epochs = 10;
  const TrainResult r = train(cfg, tiny_spec(), sets, opts);
  CHECK(r.steps == 20);
  CHECK(adversarial == 20);
}

TEST_CASE("training input contracts") {
  auto sets = tiny_sets();
  ExperimentConfig cfg = tiny_config();
  cfg.held_out_region = "a";
  CHECK(kind_of([&] { train(cfg, tiny_spec(), sets); }) == ErrorKind::Config);
  cfg.held_out_region.clear();
  FeatureSpec wide = tiny_spec();
  wide.history = 3;
  cfg.history = 3;
  CHECK(kind_of([&] { train(cfg, wide, sets); }) == ErrorKind::Contract);
  CHECK(kind_of([] { ExperimentConfig::from_json({{"learning_rate", 0.1}, {"lr2", 1}}); }) == ErrorKind::Config);
}

TEST_CASE("probe sanity") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  const int per_class = 60;
  Matrix x(3 * per_class, 4);
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const auto r = c * per_class + i;
      for (int k = 0; k < 4; ++k) x(r, k) = n(rng) * 0.3 + (k == c ? 3.0 : 0.0);
      labels.push_back(c);
    }
  }
  SUBCASE("separable classes are recovered") { CHECK(linear_probe_accuracy(x, labels, 3, 0) >= 0.95); }
  SUBCASE("features without label information stay near chance") {
    const Matrix noise = Matrix::NullaryExpr(x.rows(), 4, [&] { return n(rng); });
    CHECK(linear_probe_accuracy(noise, labels, 3, 0) < 1.0 / 3 + 0.2);
  }
  SUBCASE("seeded") { CHECK(linear_probe_accuracy(x, labels, 3, 1) == linear_probe_accuracy(x, labels, 3, 1)); }
}

TEST_CASE("checkpoint round trip and failure modes") {
  const auto sets = tiny_sets();
  ExperimentConfig cfg = tiny_config();
  cfg.max_epochs = 1;
  const TrainResult r = train(cfg, tiny_spec(), sets);
  const auto dir = testutil::temp_dir("ckpt");
  const std::string path = (dir / "m.ckpt").string();
  save_checkpoint({r.params, r.feature_spec, r.vocabulary, cfg.seed, cfg.to_json()}, path);

  const Checkpoint back = load_checkpoint(path, &r.vocabulary);
  CHECK(back.vocabulary == r.vocabulary);
  CHECK(back.feature_spec == r.feature_spec);
  CHECK(back.params.config == r.params.config);
  CHECK(back.seed == cfg.seed);
  std::vector<const Matrix*> ta, tb;
  for_each_tensor(r.params, [&](const std::string&, const Matrix& m) { ta.push_back(&m); });
  for_each_tensor(back.params, [&](const std::string&, const Matrix& m) { tb.push_back(&m); });
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i] == *tb[i]);

  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});

  SUBCASE("truncated") {
    const std::string cut = (dir / "cut.ckpt").string();
    std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK(kind_of([&] { load_checkpoint(cut); }) == ErrorKind::DataQuality);
  }
  SUBCASE("trailing bytes") {
    const std::string extra = (dir / "extra.ckpt").string();
    std::ofstream(extra, std::ios::binary) << bytes << "x";
    CHECK(kind_of([&] { load_checkpoint(extra); }) == ErrorKind::DataQuality);
  }
  SUBCASE("version mismatch") {
    std::string v = bytes;
    v[8] = static_cast<char>(kCheckpointVersion + 1);
    const std::string p = (dir / "v.ckpt").string();
    std::ofstream(p, std::ios::binary) << v;
    CHECK(kind_of([&] { load_checkpoint(p); }) == ErrorKind::Version);
  }
  SUBCASE("vocabulary mismatch") {
    const std::vector<std::string> other = {"a", "b", "d"};
    CHECK(kind_of([&] { load_checkpoint(path, &other); }) == ErrorKind::Vocabulary);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint((dir / "none.ckpt").string()), Error); }
}

TEST_CASE("zero epochs return the initialization") {
  const auto sets = tiny_sets();
  ExperimentConfig cfg = tiny_config();
  cfg.max_epochs = 0;
  const TrainResult r = train(cfg, tiny_spec(), sets);
  CHECK(r.steps == 0);
  CHECK(r.history.epochs.size() == 1);
  ExperimentConfig one = cfg;
  one.max_epochs = 1;
  TrainOptions opts;
  std::optional<ModelParams> first;
  opts.on_step = [&](std::int64_t step, Phase phase, const ModelParams& before, const ModelParams&) {
    if (step == 0 && phase == Phase::Main) first = before;
  };
  train(one, tiny_spec(), sets, opts);
  REQUIRE(first.has_value());
  std::vector<const Matrix*> ta, tb;
  for_each_tensor(r.params, [&](const std::string&, const Matrix& m) { ta.push_back(&m); });
  for_each_tensor(*first, [&](const std::string&, const Matrix& m) { tb.push_back(&m); });
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i] == *tb[i]);
}

TEST_CASE("probe on one-hot region latents and on shuffled labels") {
  std::mt19937_64 rng(23);
  std::vector<int> labels;
  Matrix onehot = Matrix::Zero(1500, 3);
  for (int i = 0; i < 1500; ++i) {
    labels.push_back(i % 3);
    onehot(i, i % 3) = 1.0;
  }
  CHECK(linear_probe_accuracy(onehot, labels, 3, 0) == 1.0);
  std::vector<int> shuffled = labels;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(std::abs(linear_probe_accuracy(onehot, shuffled, 3, 0) - 1.0 / 3) <= 0.1);
}
