#include "xregion/model.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <sstream>

#include "xregion/error.hpp"

namespace xregion {
namespace {

Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

Matrix relu_mask(const Matrix& pre) { return (pre.array() > 0.0).cast<double>().matrix(); }

Matrix add_bias(Matrix m, const Matrix& bias) {
  m.rowwise() += bias.row(0);
  return m;
}

Matrix glorot(int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  return m;
}


void check_finite(const LossBreakdown& b, const char* phase) {
  if (std::isfinite(b.total)) return;
  std::ostringstream msg;
  msg << "non-finite " << phase << " loss: " << b.to_json().dump();
  fail(ErrorKind::Numerical, msg.str());
}

using detail::LatentGrad;

std::atomic<std::size_t> g_bce_fallbacks{0};

/// Adds `scale` * d(KL)/d(mu, logvar) into g.
double kl_with_grad(const Matrix& mu, const Matrix& logvar, double scale, LatentGrad* g) {
  const double kl = kl_diag_gaussian(mu, logvar);
  if (g) {
    const double inv_v = scale / static_cast<double>(mu.rows());
    g->dmu += inv_v * mu;
    g->dlogvar.array() += inv_v * 0.5 * (logvar.array().exp() - 1.0);
  }
  return kl;
}

/// Reconstruction BCE on [z_a z_s]; adds `scale` * gradients to dz of both.
double recon_with_grad(const Matrix& za, const Matrix& zs, const Matrix& adj, double scale, LatentGrad* ga,
                       LatentGrad* gs) {
  Matrix zf(za.rows(), za.cols() + zs.cols());
  zf << za, zs;
  const Matrix logits = zf * zf.transpose();
  Matrix dlogits;
  const double bce = detail::weighted_bce(logits, adj, ga ? &dlogits : nullptr);
  if (ga) {
    // logits symmetric in zf: d/dzf = (G + G^T) zf.
    const Matrix dzf = scale * (dlogits + dlogits.transpose()) * zf;
    ga->dz += dzf.leftCols(za.cols());
    gs->dz += dzf.rightCols(zs.cols());
  }
  return bce;
}

}  // namespace

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  require(input_dim > 0 && hidden1 > 0 && hidden2 > 0 && latent_dim > 0 && head_hidden > 0, ErrorKind::Config,
          "model dimensions must be positive");
  require(num_regions >= 2, ErrorKind::Config, "region classifier needs at least 2 regions");
  require(lambda_elbo >= 0 && lambda_ts >= 0 && lambda_ie >= 0, ErrorKind::Config, "loss weights must be >= 0");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"input_dim", input_dim},     {"hidden1", hidden1},         {"hidden2", hidden2},
          {"latent_dim", latent_dim},   {"head_hidden", head_hidden}, {"num_regions", num_regions},
          {"lambda_elbo", lambda_elbo}, {"lambda_ts", lambda_ts},     {"lambda_ie", lambda_ie}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden1 = j.at("hidden1").get<int>();
  c.hidden2 = j.at("hidden2").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.head_hidden = j.at("head_hidden").get<int>();
  c.num_regions = j.at("num_regions").get<int>();
  c.lambda_elbo = j.at("lambda_elbo").get<double>();
  c.lambda_ts = j.at("lambda_ts").get<double>();
  c.lambda_ie = j.at("lambda_ie").get<double>();
  return c;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = config;
  p.enc_agnostic = detail::init_encoder(config.input_dim, config.hidden1, config.hidden2, config.latent_dim, rng);
  p.enc_specific = detail::init_encoder(config.input_dim, config.hidden1, config.hidden2, config.latent_dim, rng);
  p.heads.regressor = detail::init_head(config.latent_dim, config.head_hidden, 1, rng);
  p.heads.classifier = detail::init_head(config.latent_dim, config.head_hidden, config.num_regions, rng);
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for_each_tensor(z, [](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

std::size_t ModelParams::num_scalars() const {
  std::size_t n = 0;
  for_each_tensor(*this, [&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over a stream-offset state.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix gcn_layer(const Matrix& h, const SparseMatrix& adjacency, const Matrix& w, const Matrix* bias,
                 Activation activation) {
  require(adjacency.rows() == adjacency.cols() && adjacency.cols() == h.rows() && h.cols() == w.rows(),
          ErrorKind::Contract, "gcn_layer shape mismatch");
  Matrix out = (adjacency * h) * w;
  if (bias) {
    require(bias->rows() == 1 && bias->cols() == w.cols(), ErrorKind::Contract, "gcn_layer bias shape mismatch");
    out = add_bias(std::move(out), *bias);
  }
  return activation == Activation::Relu ? relu(out) : out;
}

namespace detail {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double weighted_bce(const Matrix& logits, const Matrix& target, Matrix* dlogits) {
  require(logits.rows() == target.rows() && logits.cols() == target.cols(), ErrorKind::Contract,
          "reconstruction target shape mismatch");
  const double positives = target.sum();
  const double negatives = static_cast<double>(target.size()) - positives;
  double pos_weight = 1.0;
  if (positives > 0.0 && negatives > 0.0) pos_weight = negatives / positives;
  else g_bce_fallbacks.fetch_add(1, std::memory_order_relaxed);
  double weight_sum = 0.0, acc = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double a = target(i, j), l = logits(i, j);
      const double c = a > 0.5 ? pos_weight : 1.0;
      acc += c * (a * softplus(-l) + (1.0 - a) * softplus(l));
      weight_sum += c;
    }
  }
  if (dlogits) {
    dlogits->resize(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double a = target(i, j);
        const double c = a > 0.5 ? pos_weight : 1.0;
        (*dlogits)(i, j) = c * (sigmoid(logits(i, j)) - a) / weight_sum;
      }
    }
  }
  return acc / weight_sum;
}

EncoderTrace encoder_forward(const Matrix& x, const SparseMatrix& a, const EncoderParams& p, EncodeMode mode) {
  require(a.rows() == x.rows() && a.cols() == x.rows() && x.cols() == p.w1.rows(), ErrorKind::Contract,
          "encoder input shape mismatch");
  EncoderTrace t;
  t.ax = a * x;
  t.pre1 = add_bias(t.ax * p.w1, p.b1);
  t.h1 = relu(t.pre1);
  t.ah1 = a * t.h1;
  t.pre2 = add_bias(t.ah1 * p.w2, p.b2);
  t.h2 = relu(t.pre2);
  t.ah2 = a * t.h2;
  t.out.mu = add_bias(t.ah2 * p.w_mu, p.b_mu);
  t.logvar_raw = add_bias(t.ah2 * p.w_logvar, p.b_logvar);
  t.out.logvar = t.logvar_raw.cwiseMax(kLogvarMin).cwiseMin(kLogvarMax);
  t.sampled = mode.sample;
  if (mode.sample) {
    std::mt19937_64 rng(mode.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    t.eps.resize(t.out.mu.rows(), t.out.mu.cols());
    for (Eigen::Index i = 0; i < t.eps.rows(); ++i)
      for (Eigen::Index j = 0; j < t.eps.cols(); ++j) t.eps(i, j) = normal(rng);
    t.out.z = t.out.mu.array() + (0.5 * t.out.logvar.array()).exp() * t.eps.array();
  } else {
    t.out.z = t.out.mu;
  }
  if (!t.out.mu.allFinite() || !t.out.logvar.allFinite() || !t.out.z.allFinite()) {
    fail(ErrorKind::Numerical, "encoder produced non-finite latents");
  }
  return t;
}

void encoder_backward(const EncoderTrace& t, const SparseMatrix& a, const EncoderParams& p, const Matrix& dmu,
                      const Matrix& dlogvar, const Matrix& dz, EncoderParams& grad) {
  const Matrix dmu_total = dmu + dz;
  Matrix dlv_total = dlogvar;
  if (t.sampled) {
    dlv_total.array() += dz.array() * t.eps.array() * 0.5 * (0.5 * t.out.logvar.array()).exp();
  }
  const Matrix inside = ((t.logvar_raw.array() > kLogvarMin) && (t.logvar_raw.array() < kLogvarMax)).cast<double>();
  const Matrix dlv_raw = dlv_total.cwiseProduct(inside);

  grad.w_mu.noalias() += t.ah2.transpose() * dmu_total;
  grad.b_mu += dmu_total.colwise().sum();
  grad.w_logvar.noalias() += t.ah2.transpose() * dlv_raw;
  grad.b_logvar += dlv_raw.colwise().sum();
  const Matrix dah2 = dmu_total * p.w_mu.transpose() + dlv_raw * p.w_logvar.transpose();
  const Matrix dpre2 = (a.transpose() * dah2).cwiseProduct(relu_mask(t.pre2));
  grad.w2.noalias() += t.ah1.transpose() * dpre2;
  grad.b2 += dpre2.colwise().sum();
  const Matrix dah1 = dpre2 * p.w2.transpose();
  const Matrix dpre1 = (a.transpose() * dah1).cwiseProduct(relu_mask(t.pre1));
  grad.w1.noalias() += t.ax.transpose() * dpre1;
  grad.b1 += dpre1.colwise().sum();
}

HeadTrace head_forward(const Matrix& input, const MlpHead& h) {
  require(input.cols() == h.w1.rows(), ErrorKind::Contract, "head input shape mismatch");
  HeadTrace t;
  t.input = input;
  t.pre = add_bias(input * h.w1, h.b1);
  t.hidden = relu(t.pre);
  t.out = add_bias(t.hidden * h.w2, h.b2);
  return t;
}

Matrix head_backward(const HeadTrace& t, const MlpHead& h, const Matrix& dout, MlpHead* grad) {
  const Matrix dpre = (dout * h.w2.transpose()).cwiseProduct(relu_mask(t.pre));
  if (grad) {
    grad->w2.noalias() += t.hidden.transpose() * dout;
    grad->b2 += dout.colwise().sum();
    grad->w1.noalias() += t.input.transpose() * dpre;
    grad->b1 += dpre.colwise().sum();
  }
  return dpre * h.w1.transpose();
}

LatentGrad LatentGrad::zeros_like(const LatentSample& s) {
  const Matrix zero = Matrix::Zero(s.mu.rows(), s.mu.cols());
  return {zero, zero, zero};
}

double elbo_with_grad(const LatentSample& agnostic, const LatentSample& specific, const Matrix& adjacency_binary,
                      LatentGrad* g_agnostic, LatentGrad* g_specific) {
  require((g_agnostic == nullptr) == (g_specific == nullptr), ErrorKind::Contract, "pass both gradient slots or none");
  return recon_with_grad(agnostic.z, specific.z, adjacency_binary, 1.0, g_agnostic, g_specific) +
         kl_with_grad(agnostic.mu, agnostic.logvar, 1.0, g_agnostic) +
         kl_with_grad(specific.mu, specific.logvar, 1.0, g_specific);
}

EncoderParams init_encoder(int input_dim, int hidden1, int hidden2, int latent_dim, std::mt19937_64& rng) {
  EncoderParams e;
  e.w1 = glorot(input_dim, hidden1, rng);
  e.b1 = Matrix::Zero(1, hidden1);
  e.w2 = glorot(hidden1, hidden2, rng);
  e.b2 = Matrix::Zero(1, hidden2);
  e.w_mu = glorot(hidden2, latent_dim, rng);
  e.b_mu = Matrix::Zero(1, latent_dim);
  e.w_logvar = glorot(hidden2, latent_dim, rng);
  e.b_logvar = Matrix::Zero(1, latent_dim);
  return e;
}

MlpHead init_head(int in, int hidden, int out, std::mt19937_64& rng) {
  return {glorot(in, hidden, rng), Matrix::Zero(1, hidden), glorot(hidden, out, rng), Matrix::Zero(1, out)};
}

std::size_t bce_weight_fallbacks() { return g_bce_fallbacks.load(std::memory_order_relaxed); }

double mae(const Vector& yhat, const Vector& y, Vector* dyhat) {
  require(yhat.size() == y.size() && y.size() > 0, ErrorKind::Contract, "MAE shape mismatch");
  const double n = static_cast<double>(y.size());
  if (dyhat) *dyhat = (yhat - y).array().sign().matrix() / n;
  return (yhat - y).cwiseAbs().sum() / n;
}

double cross_entropy(const Vector& logits, int target, Vector* dlogits) {
  require(target >= 0 && target < logits.size(), ErrorKind::Contract, "region index out of range");
  const double m = logits.maxCoeff();
  const Vector shifted = logits.array() - m;
  const double lse = std::log(shifted.array().exp().sum());
  if (dlogits) {
    *dlogits = (shifted.array() - lse).exp().matrix();
    (*dlogits)(target) -= 1.0;
  }
  return lse - shifted(target);
}

}  // namespace detail

LatentSample encode(const Matrix& x, const SparseMatrix& adjacency, const EncoderParams& params, EncodeMode mode) {
  return detail::encoder_forward(x, adjacency, params, mode).out;
}

Matrix decode_adjacency(const Matrix& z, const Matrix& z_specific) {
  require(z.rows() == z_specific.rows(), ErrorKind::Contract, "decoder latent shape mismatch");
  Matrix zf(z.rows(), z.cols() + z_specific.cols());
  zf << z, z_specific;
  return (zf * zf.transpose()).unaryExpr([](double v) { return detail::sigmoid(v); });
}

Vector predict_demand(const Matrix& z, const MlpHead& regressor) {
  return detail::head_forward(z, regressor).out.col(0).unaryExpr([](double v) { return detail::softplus(v); });
}

Vector classify_region(const Matrix& z_specific, const MlpHead& classifier) {
  require(z_specific.rows() >= 1, ErrorKind::Contract, "classify_region needs at least one node");
  const Matrix pooled = z_specific.colwise().mean();
  return detail::head_forward(pooled, classifier).out.row(0).transpose();
}

double kl_diag_gaussian(const Matrix& mu, const Matrix& logvar) {
  require(mu.rows() == logvar.rows() && mu.cols() == logvar.cols() && mu.rows() > 0, ErrorKind::Contract,
          "KL shape mismatch");
  const double total =
      -0.5 * (1.0 + logvar.array() - mu.array().square() - logvar.array().exp()).sum();
  return total / static_cast<double>(mu.rows());
}

double loss_elbo(const LatentSample& agnostic, const LatentSample& specific, const Matrix& adjacency_binary) {
  return detail::elbo_with_grad(agnostic, specific, adjacency_binary, nullptr, nullptr);
}

double loss_task_specific(const Vector& yhat, const Vector& y, const Vector& logits, int region) {
  return detail::mae(yhat, y, nullptr) + detail::cross_entropy(logits, region, nullptr);
}

double loss_independent_excitation(const Vector& yhat_from_specific, const Vector& y, const Vector& logits_from_agnostic,
                                   int region) {
  return -loss_task_specific(yhat_from_specific, y, logits_from_agnostic, region);
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  total += o.total, elbo += o.elbo, recon_bce += o.recon_bce, kl_agnostic += o.kl_agnostic;
  kl_specific += o.kl_specific, task += o.task, mae += o.mae, cross_entropy += o.cross_entropy;
  independent_excitation += o.independent_excitation, ie_mae += o.ie_mae, ie_cross_entropy += o.ie_cross_entropy;
  return *this;
}

LossBreakdown& LossBreakdown::operator*=(double s) {
  total *= s, elbo *= s, recon_bce *= s, kl_agnostic *= s, kl_specific *= s, task *= s, mae *= s;
  cross_entropy *= s, independent_excitation *= s, ie_mae *= s, ie_cross_entropy *= s;
  return *this;
}

nlohmann::json LossBreakdown::to_json() const {
  return {{"total", total},
          {"elbo", elbo},
          {"recon_bce", recon_bce},
          {"kl_agnostic", kl_agnostic},
          {"kl_specific", kl_specific},
          {"task", task},
          {"mae", mae},
          {"cross_entropy", cross_entropy},
          {"independent_excitation", independent_excitation},
          {"ie_mae", ie_mae},
          {"ie_cross_entropy", ie_cross_entropy}};
}

LossBreakdown total_loss(const RegionGraph& graph, const ModelParams& params, Phase phase, std::uint64_t seed,
                         ModelParams* grad, double grad_scale) {
  const ModelConfig& cfg = params.config;
  require(graph.topology != nullptr, ErrorKind::Contract, "graph without topology");
  require(graph.region_index >= 0 && graph.region_index < cfg.num_regions, ErrorKind::Contract,
          "graph region index outside the training vocabulary");
  const SparseMatrix& a = graph.adjacency_norm();
  const auto v = static_cast<double>(graph.num_nodes());

  const auto ta = detail::encoder_forward(graph.node_features, a, params.enc_agnostic,
                                          EncodeMode::sampled(derive_seed(seed, 0)));
  const auto ts = detail::encoder_forward(graph.node_features, a, params.enc_specific,
                                          EncodeMode::sampled(derive_seed(seed, 1)));
  LatentGrad ga = LatentGrad::zeros_like(ta.out), gs = LatentGrad::zeros_like(ts.out);
  LossBreakdown b;

  if (phase == Phase::Main) {
    const double le = cfg.lambda_elbo * grad_scale, lt = cfg.lambda_ts * grad_scale;
    b.recon_bce = recon_with_grad(ta.out.z, ts.out.z, graph.topology->adjacency_binary, le, grad ? &ga : nullptr,
                                  grad ? &gs : nullptr);
    b.kl_agnostic = kl_with_grad(ta.out.mu, ta.out.logvar, le, grad ? &ga : nullptr);
    b.kl_specific = kl_with_grad(ts.out.mu, ts.out.logvar, le, grad ? &gs : nullptr);
    b.elbo = b.recon_bce + b.kl_agnostic + b.kl_specific;

    const auto reg = detail::head_forward(ta.out.z, params.heads.regressor);
    const Vector yhat = reg.out.col(0).unaryExpr([](double x) { return detail::softplus(x); });
    Vector dyhat;
    b.mae = detail::mae(yhat, graph.targets, &dyhat);
    const auto cls = detail::head_forward(ts.out.z.colwise().mean(), params.heads.classifier);
    Vector dlogits;
    b.cross_entropy = detail::cross_entropy(cls.out.row(0).transpose(), graph.region_index, &dlogits);
    b.task = b.mae + b.cross_entropy;
    b.total = cfg.lambda_elbo * b.elbo + cfg.lambda_ts * b.task;
    check_finite(b, "main-phase");

    if (grad) {
      const Matrix dout = lt * dyhat.cwiseProduct(reg.out.col(0).unaryExpr([](double x) { return detail::sigmoid(x); }));
      ga.dz += detail::head_backward(reg, params.heads.regressor, dout, &grad->heads.regressor);
      const Matrix dpooled =
          detail::head_backward(cls, params.heads.classifier, lt * dlogits.transpose(), &grad->heads.classifier);
      gs.dz.rowwise() += dpooled.row(0) / v;
      detail::encoder_backward(ta, a, params.enc_agnostic, ga.dmu, ga.dlogvar, ga.dz, grad->enc_agnostic);
      detail::encoder_backward(ts, a, params.enc_specific, gs.dmu, gs.dlogvar, gs.dz, grad->enc_specific);
    }
  } else {
    const double li = cfg.lambda_ie * grad_scale;
    const auto reg = detail::head_forward(ts.out.z, params.heads.regressor);
    const Vector yhat = reg.out.col(0).unaryExpr([](double x) { return detail::softplus(x); });
    Vector dyhat;
    b.ie_mae = detail::mae(yhat, graph.targets, &dyhat);
    const auto cls = detail::head_forward(ta.out.z.colwise().mean(), params.heads.classifier);
    Vector dlogits;
    b.ie_cross_entropy = detail::cross_entropy(cls.out.row(0).transpose(), graph.region_index, &dlogits);
    b.independent_excitation = -(b.ie_mae + b.ie_cross_entropy);
    b.total = cfg.lambda_ie * b.independent_excitation;
    check_finite(b, "adversarial-phase");

    if (grad) {
      // Heads are constants here: propagate through them without touching their gradients.
      const Matrix dout =
          -li * dyhat.cwiseProduct(reg.out.col(0).unaryExpr([](double x) { return detail::sigmoid(x); }));
      gs.dz += detail::head_backward(reg, params.heads.regressor, dout, nullptr);
      const Matrix dpooled = detail::head_backward(cls, params.heads.classifier, -li * dlogits.transpose(), nullptr);
      ga.dz.rowwise() += dpooled.row(0) / v;
      detail::encoder_backward(ta, a, params.enc_agnostic, ga.dmu, ga.dlogvar, ga.dz, grad->enc_agnostic);
      detail::encoder_backward(ts, a, params.enc_specific, gs.dmu, gs.dlogvar, gs.dz, grad->enc_specific);
    }
  }
  return b;
}

LossBreakdown batch_loss(std::span<const RegionGraph* const> graphs, const ModelParams& params, Phase phase,
                         std::uint64_t seed, ModelParams* grad) {
  require(!graphs.empty(), ErrorKind::Contract, "empty batch");
  const double inv = 1.0 / static_cast<double>(graphs.size());
  LossBreakdown sum;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    sum += total_loss(*graphs[i], params, phase, derive_seed(seed, i), grad, inv);
  }
  sum *= inv;
  return sum;
}

}  // namespace xregion
