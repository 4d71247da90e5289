#include "xregion/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <unordered_map>

#include "xregion/error.hpp"
#include "xregion/optimizer.hpp"

namespace xregion {
namespace {

using detail::sigmoid;
using detail::softplus;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct Trainable {
  std::vector<Matrix*> params;
  std::vector<Matrix*> grads;
  /// Loss of one graph; accumulates scale * gradient into grads.
  std::function<double(const RegionGraph&, double scale, std::uint64_t seed)> loss_grad;
};

template <class P>
void collect(P& p, std::vector<Matrix*>& out) {
  out.insert(out.end(), {&p.w1, &p.b1, &p.w2, &p.b2});
}

void collect_encoder(EncoderParams& e, std::vector<Matrix*>& out) {
  out.insert(out.end(), {&e.w1, &e.b1, &e.w2, &e.b2, &e.w_mu, &e.b_mu, &e.w_logvar, &e.b_logvar});
}

EncoderParams zeros_like(const EncoderParams& e) {
  auto z = [](const Matrix& m) { return Matrix::Zero(m.rows(), m.cols()).eval(); };
  return {z(e.w1), z(e.b1), z(e.w2), z(e.b2), z(e.w_mu), z(e.b_mu), z(e.w_logvar), z(e.b_logvar)};
}

MlpHead zeros_like(const MlpHead& h) {
  auto z = [](const Matrix& m) { return Matrix::Zero(m.rows(), m.cols()).eval(); };
  return {z(h.w1), z(h.b1), z(h.w2), z(h.b2)};
}

/// Mini-batch Adam over shuffled graphs; returns the mean loss of the last epoch.
double fit(const std::vector<const RegionGraph*>& graphs, const ExperimentConfig& cfg, std::uint64_t seed,
           Trainable& t) {
  Adam opt(cfg.learning_rate);
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::uint64_t step = 0;
  double last = 0.0;
  const std::vector<const Matrix*> grads(t.grads.begin(), t.grads.end());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (Matrix* g : t.grads) g->setZero();
      for (std::size_t i = begin; i < end; ++i) {
        sum += t.loss_grad(*graphs[order[i]], scale, derive_seed(derive_seed(seed, 2), step * 4096 + (i - begin)));
      }
      opt.step(t.params, grads);
      ++step;
    }
    last = sum / static_cast<double>(graphs.size());
    require(std::isfinite(last), ErrorKind::Numerical, "baseline training diverged");
  }
  return last;
}

/// softplus regressor output, MAE loss; returns d(input) and adds head gradients.
double regress_with_grad(const Matrix& input, const Vector& y, const MlpHead& head, double scale, MlpHead* ghead,
                         Matrix* dinput) {
  const auto tr = detail::head_forward(input, head);
  const Vector yhat = tr.out.col(0).unaryExpr([](double x) { return softplus(x); });
  Vector dyhat;
  const double loss = detail::mae(yhat, y, &dyhat);
  const Matrix dout = scale * dyhat.cwiseProduct(tr.out.col(0).unaryExpr([](double x) { return sigmoid(x); }));
  Matrix d = detail::head_backward(tr, head, dout, ghead);
  if (dinput) *dinput = std::move(d);
  return loss;
}

Vector regress(const Matrix& input, const MlpHead& head) {
  return detail::head_forward(input, head).out.col(0).unaryExpr([](double x) { return softplus(x); });
}

std::vector<const RegionGraph*> flatten(const std::map<std::string, std::vector<RegionGraph>>& sets) {
  std::vector<const RegionGraph*> out;
  for (const auto& [_, list] : sets)
    for (const auto& g : list) out.push_back(&g);
  return out;
}

// ---------------------------------------------------------------------------

struct GcnDirect {
  EncoderParams enc;
  MlpHead reg;

  Vector predict(const RegionGraph& g) const {
    const auto s = encode(g.node_features, g.adjacency_norm(), enc, EncodeMode::deterministic());
    return regress(s.mu, reg);
  }
};

double train_gcn_direct(GcnDirect& m, const std::vector<const RegionGraph*>& graphs, const ExperimentConfig& cfg,
                        std::uint64_t seed) {
  EncoderParams genc = zeros_like(m.enc);
  MlpHead greg = zeros_like(m.reg);
  Trainable t;
  collect_encoder(m.enc, t.params);
  collect(m.reg, t.params);
  collect_encoder(genc, t.grads);
  collect(greg, t.grads);
  t.loss_grad = [&](const RegionGraph& g, double scale, std::uint64_t) {
    const auto tr = detail::encoder_forward(g.node_features, g.adjacency_norm(), m.enc, EncodeMode::deterministic());
    Matrix dmu;
    const double loss = regress_with_grad(tr.out.mu, g.targets, m.reg, scale, &greg, &dmu);
    const Matrix zero = Matrix::Zero(dmu.rows(), dmu.cols());
    detail::encoder_backward(tr, g.adjacency_norm(), m.enc, dmu, zero, zero, genc);
    return loss;
  };
  return fit(graphs, cfg, seed, t);
}

// ---------------------------------------------------------------------------

struct EmbeddingMlp {
  MlpHead reg;
  SkipGramOptions sg;
  std::uint64_t seed = 0;
  std::unordered_map<const GraphTopology*, Matrix> cache;

  const Matrix& embedding(const RegionGraph& g) {
    auto it = cache.find(g.topology.get());
    if (it == cache.end()) {
      it = cache.emplace(g.topology.get(), skipgram_embeddings(*g.topology, derive_seed(seed, fnv1a(g.region_id)), sg))
               .first;
    }
    return it->second;
  }
  Matrix input(const RegionGraph& g) {
    const Matrix& e = embedding(g);
    Matrix x(g.node_features.rows(), e.cols() + g.node_features.cols());
    x << e, g.node_features;
    return x;
  }
};

// ---------------------------------------------------------------------------

double vgae_loss_grad(const RegionGraph& g, const EncoderParams& enc, double scale, std::uint64_t seed,
                      EncoderParams& genc) {
  const auto tr = detail::encoder_forward(g.node_features, g.adjacency_norm(), enc, EncodeMode::sampled(seed));
  const Matrix& z = tr.out.z;
  const Matrix logits = z * z.transpose();
  Matrix dlogits;
  const double bce = detail::weighted_bce(logits, g.topology->adjacency_binary, &dlogits);
  const double kl = kl_diag_gaussian(tr.out.mu, tr.out.logvar);
  const double inv_v = scale / static_cast<double>(z.rows());
  const Matrix dz = scale * (dlogits + dlogits.transpose()) * z;
  const Matrix dmu = inv_v * tr.out.mu;
  const Matrix dlogvar = (inv_v * 0.5 * (tr.out.logvar.array().exp() - 1.0)).matrix();
  detail::encoder_backward(tr, g.adjacency_norm(), enc, dmu, dlogvar, dz, genc);
  return bce + kl;
}

}  // namespace

BaselineKind parse_baseline(const std::string& name) {
  if (name == "gcn_direct") return BaselineKind::GcnDirect;
  if (name == "node_embedding_mlp") return BaselineKind::NodeEmbeddingMlp;
  if (name == "graph_ae") return BaselineKind::GraphAe;
  fail(ErrorKind::Config, "unknown baseline '" + name + "' (expected gcn_direct, node_embedding_mlp or graph_ae)");
}

std::string baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::GcnDirect: return "gcn_direct";
    case BaselineKind::NodeEmbeddingMlp: return "node_embedding_mlp";
    case BaselineKind::GraphAe: return "graph_ae";
  }
  return "";
}

std::vector<std::string> all_baseline_names() { return {"gcn_direct", "node_embedding_mlp", "graph_ae"}; }

Matrix skipgram_embeddings(const GraphTopology& topology, std::uint64_t seed, const SkipGramOptions& o) {
  const auto v = static_cast<Eigen::Index>(topology.num_nodes);
  std::vector<std::vector<std::pair<CellId, double>>> nbrs(topology.num_nodes);
  for (const auto& [key, w] : topology.edge_weights_raw) {
    if (key.first != key.second) nbrs[key.first].push_back({key.second, w});
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<CellId>> walks;
  std::vector<double> freq(topology.num_nodes, 0.0);
  for (int rep = 0; rep < o.walks_per_node; ++rep) {
    for (CellId start = 0; start < topology.num_nodes; ++start) {
      std::vector<CellId> walk{start};
      while (static_cast<int>(walk.size()) < o.walk_length && !nbrs[walk.back()].empty()) {
        const auto& nb = nbrs[walk.back()];
        double total = 0.0;
        for (const auto& [_, w] : nb) total += w;
        double pick = unit(rng) * total;
        CellId next = nb.back().first;
        for (const auto& [n, w] : nb) {
          if (pick < w) {
            next = n;
            break;
          }
          pick -= w;
        }
        walk.push_back(next);
      }
      for (CellId c : walk) freq[c] += 1.0;
      walks.push_back(std::move(walk));
    }
  }
  std::vector<double> noise(freq.size());
  for (std::size_t i = 0; i < freq.size(); ++i) noise[i] = std::pow(freq[i], 0.75);
  std::discrete_distribution<std::size_t> negative(noise.begin(), noise.end());

  Matrix in(v, o.dim), out = Matrix::Zero(v, o.dim);
  for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = (unit(rng) - 0.5) / o.dim;
  const double total_steps = static_cast<double>(o.epochs) * static_cast<double>(walks.size());
  double done = 0.0;
  for (int epoch = 0; epoch < o.epochs; ++epoch) {
    for (const auto& walk : walks) {
      const double lr = std::max(o.learning_rate * (1.0 - done / total_steps), o.learning_rate * 1e-4);
      done += 1.0;
      for (std::size_t i = 0; i < walk.size(); ++i) {
        const std::size_t lo = i >= static_cast<std::size_t>(o.window) ? i - static_cast<std::size_t>(o.window) : 0;
        const std::size_t hi = std::min(walk.size() - 1, i + static_cast<std::size_t>(o.window));
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          const auto center = static_cast<Eigen::Index>(walk[i]);
          RowVector grad_in = RowVector::Zero(o.dim);
          for (int k = 0; k <= o.negatives; ++k) {
            const auto target = static_cast<Eigen::Index>(k == 0 ? walk[j] : negative(rng));
            const double label = k == 0 ? 1.0 : 0.0;
            const double g = lr * (label - sigmoid(in.row(center).dot(out.row(target))));
            grad_in += g * out.row(target);
            out.row(target) += g * in.row(center);
          }
          in.row(center) += grad_in;
        }
      }
    }
  }
  return in;
}

BaselineRun run_baseline(const std::string& name, const std::map<std::string, std::vector<RegionGraph>>& train_sets,
                         const std::vector<RegionGraph>& test_graphs, const ExperimentConfig& config) {
  const BaselineKind kind = parse_baseline(name);
  config.validate();
  require(train_sets.size() >= 2, ErrorKind::Config, "baselines train on at least 2 regions");
  require(!test_graphs.empty(), ErrorKind::Contract, "no test snapshots");
  BaselineRun run;
  for (const auto& [region, list] : train_sets) {
    require(!list.empty(), ErrorKind::Config, "no snapshots for training region " + region);
    run.train_samples[region] = list.size();
  }
  const auto graphs = flatten(train_sets);
  const int d = static_cast<int>(graphs.front()->node_features.cols());
  for (const auto* g : graphs) {
    require(g->node_features.cols() == d, ErrorKind::Contract, "training snapshots disagree on feature width");
  }
  for (const auto& g : test_graphs) {
    require(g.node_features.cols() == d, ErrorKind::Contract, "test snapshots disagree on feature width");
  }
  const std::uint64_t seed = derive_seed(config.seed, 200 + static_cast<std::uint64_t>(kind));
  std::mt19937_64 init_rng(derive_seed(seed, 0));

  switch (kind) {
    case BaselineKind::GcnDirect: {
      GcnDirect m{detail::init_encoder(d, config.hidden1, config.hidden2, config.latent_dim, init_rng),
                  detail::init_head(config.latent_dim, config.head_hidden, 1, init_rng)};
      run.final_train_loss = train_gcn_direct(m, graphs, config, seed);
      run.metrics = score_predictions([&](const RegionGraph& g) { return m.predict(g); }, test_graphs);
      break;
    }
    case BaselineKind::NodeEmbeddingMlp: {
      EmbeddingMlp m;
      m.seed = seed;
      m.reg = detail::init_head(m.sg.dim + d, config.head_hidden, 1, init_rng);
      MlpHead greg = zeros_like(m.reg);
      Trainable t;
      collect(m.reg, t.params);
      collect(greg, t.grads);
      std::unordered_map<const RegionGraph*, Matrix> inputs;
      for (const auto* g : graphs) inputs.emplace(g, m.input(*g));
      t.loss_grad = [&](const RegionGraph& g, double scale, std::uint64_t) {
        return regress_with_grad(inputs.at(&g), g.targets, m.reg, scale, &greg, nullptr);
      };
      run.final_train_loss = fit(graphs, config, seed, t);
      run.metrics = score_predictions([&](const RegionGraph& g) { return regress(m.input(g), m.reg); }, test_graphs);
      break;
    }
    case BaselineKind::GraphAe: {
      EncoderParams enc = detail::init_encoder(d, config.hidden1, config.hidden2, config.latent_dim, init_rng);
      MlpHead reg = detail::init_head(config.latent_dim, config.head_hidden, 1, init_rng);
      EncoderParams genc = zeros_like(enc);
      Trainable ae;
      collect_encoder(enc, ae.params);
      collect_encoder(genc, ae.grads);
      ae.loss_grad = [&](const RegionGraph& g, double scale, std::uint64_t s) {
        return vgae_loss_grad(g, enc, scale, s, genc);
      };
      fit(graphs, config, derive_seed(seed, 3), ae);

      auto latent = [&](const RegionGraph& g) {
        return encode(g.node_features, g.adjacency_norm(), enc, EncodeMode::deterministic()).mu;
      };
      std::unordered_map<const RegionGraph*, Matrix> frozen;
      for (const auto* g : graphs) frozen.emplace(g, latent(*g));
      MlpHead greg = zeros_like(reg);
      Trainable head;
      collect(reg, head.params);
      collect(greg, head.grads);
      head.loss_grad = [&](const RegionGraph& g, double scale, std::uint64_t) {
        return regress_with_grad(frozen.at(&g), g.targets, reg, scale, &greg, nullptr);
      };
      run.final_train_loss = fit(graphs, config, derive_seed(seed, 4), head);
      run.metrics = score_predictions([&](const RegionGraph& g) { return regress(latent(g), reg); }, test_graphs);
      break;
    }
  }
  return run;
}

}  // namespace xregion
