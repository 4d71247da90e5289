#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xregion/graph_builder.hpp"
#include "xregion/linalg.hpp"

namespace xregion {

struct ModelConfig {
  int input_dim = 0;
  int hidden1 = 64;
  int hidden2 = 64;
  int latent_dim = 32;
  int head_hidden = 64;
  int num_regions = 0;
  double lambda_elbo = 1.0;
  double lambda_ts = 1.0;
  double lambda_ie = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Variational GCN encoder: two shared ReLU GCN layers, then a GCN layer split
/// into mean and log-variance heads. Biases are 1 x n row matrices.
struct EncoderParams {
  Matrix w1, b1, w2, b2, w_mu, b_mu, w_logvar, b_logvar;
};

/// Fully connected Z -> hidden -> out with a ReLU in between.
struct MlpHead {
  Matrix w1, b1, w2, b2;
};

struct HeadParams {
  MlpHead regressor;   // SR_y, output through softplus
  MlpHead classifier;  // SC_r, on the mean-pooled latent
};

struct ModelParams {
  ModelConfig config;
  EncoderParams enc_agnostic;
  EncoderParams enc_specific;
  HeadParams heads;

  /// Glorot-uniform weights, zero biases.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);
  ModelParams zeros_like() const;
  std::size_t num_scalars() const;
};

/// Visits every tensor with a stable dotted name, in a fixed order.
template <class Params, class F>
void for_each_tensor(Params& p, F&& f) {
  auto encoder = [&](auto& e, const std::string& prefix) {
    f(prefix + ".w1", e.w1), f(prefix + ".b1", e.b1), f(prefix + ".w2", e.w2), f(prefix + ".b2", e.b2);
    f(prefix + ".w_mu", e.w_mu), f(prefix + ".b_mu", e.b_mu);
    f(prefix + ".w_logvar", e.w_logvar), f(prefix + ".b_logvar", e.b_logvar);
  };
  auto head = [&](auto& h, const std::string& prefix) {
    f(prefix + ".w1", h.w1), f(prefix + ".b1", h.b1), f(prefix + ".w2", h.w2), f(prefix + ".b2", h.b2);
  };
  encoder(p.enc_agnostic, "enc_agnostic");
  encoder(p.enc_specific, "enc_specific");
  head(p.heads.regressor, "heads.regressor");
  head(p.heads.classifier, "heads.classifier");
}

enum class Activation { Relu, None };

/// activation(A H W + b); bias may be null.
Matrix gcn_layer(const Matrix& h, const SparseMatrix& adjacency, const Matrix& w, const Matrix* bias,
                 Activation activation);

struct LatentSample {
  Matrix mu;
  Matrix logvar;
  Matrix z;
};

struct EncodeMode {
  bool sample = false;
  std::uint64_t seed = 0;
  static EncodeMode deterministic() { return {false, 0}; }
  static EncodeMode sampled(std::uint64_t seed) { return {true, seed}; }
};

constexpr double kLogvarMin = -10.0;
constexpr double kLogvarMax = 10.0;

LatentSample encode(const Matrix& x, const SparseMatrix& adjacency, const EncoderParams& params, EncodeMode mode);

/// sigmoid([z z_r][z z_r]^T).
Matrix decode_adjacency(const Matrix& z, const Matrix& z_specific);

Vector predict_demand(const Matrix& z, const MlpHead& regressor);
Vector classify_region(const Matrix& z_specific, const MlpHead& classifier);

/// KL(q || N(0, I)) summed over latent dims, averaged over nodes.
double kl_diag_gaussian(const Matrix& mu, const Matrix& logvar);

/// Class-weighted BCE of the decoded adjacency against a 0/1 target (weighted
/// mean, positive weight #non-edges/#edges) plus both KL terms: the negated ELBO.
double loss_elbo(const LatentSample& agnostic, const LatentSample& specific, const Matrix& adjacency_binary);

/// MAE(y, yhat) + cross-entropy(region, logits).
double loss_task_specific(const Vector& yhat, const Vector& y, const Vector& logits, int region);

/// -[MAE(y, SR_y(z_r)) + cross-entropy(region, SC_r(z))].
double loss_independent_excitation(const Vector& yhat_from_specific, const Vector& y, const Vector& logits_from_agnostic,
                                   int region);

enum class Phase { Main, Adversarial };

struct LossBreakdown {
  double total = 0.0;
  double elbo = 0.0;
  double recon_bce = 0.0;
  double kl_agnostic = 0.0;
  double kl_specific = 0.0;
  double task = 0.0;
  double mae = 0.0;
  double cross_entropy = 0.0;
  double independent_excitation = 0.0;
  double ie_mae = 0.0;
  double ie_cross_entropy = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown& operator*=(double s);
  nlohmann::json to_json() const;
};

/// Loss of one graph for a phase. In the adversarial phase the heads act as
/// constants: their gradient slots in `grad` are left untouched. `grad`, when
/// given, is accumulated into (scaled by `grad_scale`).
LossBreakdown total_loss(const RegionGraph& graph, const ModelParams& params, Phase phase, std::uint64_t seed,
                         ModelParams* grad = nullptr, double grad_scale = 1.0);

/// Mean of total_loss over a batch; graph i uses seed derived from (seed, i).
LossBreakdown batch_loss(std::span<const RegionGraph* const> graphs, const ModelParams& params, Phase phase,
                         std::uint64_t seed, ModelParams* grad = nullptr);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

namespace detail {

/// Glorot-uniform weights, zero biases.
EncoderParams init_encoder(int input_dim, int hidden1, int hidden2, int latent_dim, std::mt19937_64& rng);
MlpHead init_head(int in, int hidden, int out, std::mt19937_64& rng);

double softplus(double x);
double sigmoid(double x);

/// Weighted BCE on logits and its gradient with respect to the logits.
double weighted_bce(const Matrix& logits, const Matrix& target, Matrix* dlogits);

struct EncoderTrace {
  Matrix ax, pre1, h1, ah1, pre2, h2, ah2, logvar_raw, eps;
  LatentSample out;
  bool sampled = false;
};

EncoderTrace encoder_forward(const Matrix& x, const SparseMatrix& a, const EncoderParams& p, EncodeMode mode);

/// Backpropagates upstream gradients on (mu, logvar, z) into `grad`.
void encoder_backward(const EncoderTrace& t, const SparseMatrix& a, const EncoderParams& p, const Matrix& dmu,
                      const Matrix& dlogvar, const Matrix& dz, EncoderParams& grad);

struct HeadTrace {
  Matrix input, pre, hidden, out;
};

HeadTrace head_forward(const Matrix& input, const MlpHead& h);
/// Returns d(input); accumulates parameter gradients into `grad` when non-null.
Matrix head_backward(const HeadTrace& t, const MlpHead& h, const Matrix& dout, MlpHead* grad);

struct LatentGrad {
  Matrix dmu, dlogvar, dz;
  static LatentGrad zeros_like(const LatentSample& s);
};

/// Negated ELBO with gradients on both samples' (mu, logvar, z) treated as
/// independent inputs. Gradients are accumulated when the pointers are non-null.
double elbo_with_grad(const LatentSample& agnostic, const LatentSample& specific, const Matrix& adjacency_binary,
                      LatentGrad* g_agnostic, LatentGrad* g_specific);

/// Number of reconstruction losses that fell back to unit positive weight
/// because the target had no edges or no non-edges.
std::size_t bce_weight_fallbacks();

/// Mean absolute error and its gradient with respect to yhat.
double mae(const Vector& yhat, const Vector& y, Vector* dyhat);
/// Softmax cross-entropy and its gradient with respect to logits.
double cross_entropy(const Vector& logits, int target, Vector* dlogits);

}  // namespace detail

}  // namespace xregion
