#include <doctest.h>

#include <filesystem>
#include <random>

#include "helpers.hpp"
#include "xregion/baselines.hpp"
#include "xregion/error.hpp"
#include "xregion/evaluation.hpp"

using namespace xregion;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("one-off accuracy") {
  CHECK(accuracy_one_off(vec({5}), vec({7})) == 0.0);
  CHECK(accuracy_one_off(vec({5.9, 1, 0}), vec({4, 4, 1.5})) == doctest::Approx(2.0 / 3.0));
  CHECK(accuracy_one_off(vec({3}), vec({1})) == 0.0);           // |err| = 2 is wrong
  CHECK(accuracy_one_off(vec({2.999999}), vec({1})) == 1.0);
  CHECK(accuracy_one_off(vec({0, 0}), vec({0, 0})) == 1.0);
  CHECK(accuracy_one_off(vec({1, 4}), vec({0, 0}), 1.5) == 0.5);
  try {
    accuracy_one_off(Vector(0), Vector(0));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Contract);
  }
  CHECK_THROWS_AS(accuracy_one_off(vec({1, 2}), vec({1})), Error);
}

TEST_CASE("mean absolute error") {
  CHECK(mean_absolute_error(vec({1, 2, 3}), vec({2, 2, 0})) == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("predictions are pooled over every node of every snapshot") {
  std::mt19937_64 rng(1);
  std::vector<RegionGraph> graphs;
  for (int i = 0; i < 3; ++i) graphs.push_back(testutil::random_graph(4, 2, -1, rng));
  const Predictor zero = [](const RegionGraph& g) { return Vector::Zero(static_cast<Eigen::Index>(g.num_nodes())); };
  const MethodMetrics m = score_predictions(zero, graphs);
  CHECK(m.samples == 12);
  CHECK(m.snapshots == 3);
  Vector all(12), preds = Vector::Zero(12);
  for (int i = 0; i < 3; ++i) all.segment(4 * i, 4) = graphs[i].targets;
  CHECK(m.accuracy == accuracy_one_off(preds, all));
  CHECK(m.mae == doctest::Approx(mean_absolute_error(preds, all)));
}

TEST_CASE("metrics report JSON round trip, fingerprint and chart") {
  MetricsReport r;
  r.held_out_region = "synth_d";
  r.proposed = {0.9, 0.4, 100, 10};
  r.baselines["gcn_direct"] = {0.8, 0.6, 100, 10};
  r.train_samples = {{"synth_a", 5}, {"synth_b", 6}};
  r.warnings = {"something"};
  r.config_fingerprint = config_fingerprint({{"a", 1}});
  r.seed = 3;
  CHECK(MetricsReport::from_json(r.to_json()) == r);
  CHECK(r.config_fingerprint.size() == 16);
  CHECK(config_fingerprint({{"a", 1}}) == config_fingerprint({{"a", 1}}));
  CHECK(config_fingerprint({{"a", 1}}) != config_fingerprint({{"a", 2}}));

  const auto dir = testutil::temp_dir("report");
  render_report({r}, dir.string());
  CHECK(std::filesystem::exists(dir / "accuracy_chart.svg"));
  const auto back = read_report((dir / "metrics_report.json").string());
  REQUIRE(back.size() == 1);
  CHECK(back[0] == r);
}

TEST_CASE("unseen-region evaluation") {
  std::mt19937_64 rng(2);
  std::vector<RegionGraph> test;
  for (int i = 0; i < 2; ++i) test.push_back(testutil::random_graph(5, 3, -1, rng));
  for (auto& g : test) g.region_id = "new";
  ModelConfig mc;
  mc.input_dim = 3;
  mc.hidden1 = mc.hidden2 = mc.head_hidden = 4;
  mc.latent_dim = 2;
  mc.num_regions = 2;
  const ModelParams p = ModelParams::init(mc, 1);

  const MetricsReport r = evaluate_unseen(p, {"a", "b"}, test);
  CHECK(r.held_out_region == "new");
  CHECK(r.warnings.empty());
  CHECK(r.proposed.samples == 10);
  const Vector yhat = predict_unseen(p, test[0]);
  CHECK(yhat.minCoeff() >= 0.0);
  const auto mu = encode(test[0].node_features, test[0].adjacency_norm(), p.enc_agnostic, EncodeMode::deterministic()).mu;
  CHECK(yhat == predict_demand(mu, p.heads.regressor));

  const MetricsReport overlap = evaluate_unseen(p, {"a", "new"}, test);
  CHECK(overlap.warnings.size() == 1);

  RegionGraph wrong = test[0];
  wrong.node_features = Matrix::Zero(5, 4);
  try {
    predict_unseen(p, wrong);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Contract);
  }
}

TEST_CASE("baseline names") {
  for (const auto& n : all_baseline_names()) CHECK(baseline_name(parse_baseline(n)) == n);
  CHECK(all_baseline_names().size() == 3);
  try {
    parse_baseline("arima");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("skip-gram embeddings are seeded and place neighbours closer than distant nodes") {
  // Two 4-cliques joined by one light edge.
  EdgeWeights w;
  auto link = [&](CellId a, CellId b, double x) {
    w[{a, b}] = x;
    w[{b, a}] = x;
  };
  for (CellId i = 0; i < 4; ++i)
    for (CellId j = i + 1; j < 4; ++j) link(i, j, 5), link(i + 4, j + 4, 5);
  link(3, 4, 0.2);
  const auto topo = make_topology(w, 8);
  const Matrix e1 = skipgram_embeddings(*topo, 3);
  const Matrix e2 = skipgram_embeddings(*topo, 3);
  CHECK(e1 == e2);
  CHECK(e1.rows() == 8);
  auto cosine = [&](int a, int b) { return e1.row(a).dot(e1.row(b)) / (e1.row(a).norm() * e1.row(b).norm()); };
  CHECK(cosine(0, 1) > cosine(0, 6));
}
