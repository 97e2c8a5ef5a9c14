#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "linkbackdoor/autodiff.hpp"
#include "linkbackdoor/graph.hpp"

namespace lbd {

enum class ModelKind { GAE, VGAE, GIC, ARGA, ARVGA };

std::string_view to_string(ModelKind kind);
/// Case-insensitive; throws std::invalid_argument on unknown names.
ModelKind parse_model_kind(std::string_view name);
bool is_variational(ModelKind kind);
bool is_adversarial(ModelKind kind);

struct ModelConfig {
  std::size_t hidden = 32;
  std::size_t embedding = 16;      ///< GIC uses `hidden` for both layers
  double lr = 0.01;
  std::size_t max_epochs = 500;
  std::size_t patience = 100;
  std::size_t disc_hidden = 64;
  double disc_lr = 0.001;
  double adv_weight = 1.0;
  std::size_t gic_clusters = 16;
  double gic_beta = 10.0;
  double gic_weight = 1.0;
  /// Above this node count the reconstruction loss uses sampled negatives.
  std::size_t dense_loss_max_nodes = 6000;
};

std::size_t embedding_dim(ModelKind kind, const ModelConfig& cfg);

/// Named weight matrices of one link predictor.
///
///   W0 d x hidden, then per kind
///   GAE, ARGA      W1 hidden x embedding
///   VGAE, ARVGA    W1_mu, W1_logstd hidden x embedding
///   GIC            W1 hidden x hidden, centers K x hidden (not trained by Adam)
///   ARGA, ARVGA    D0 emb x disc_hidden, D1 disc_hidden x disc_hidden, D2 disc_hidden x 1
struct ModelState {
  ModelKind kind = ModelKind::GAE;
  std::uint64_t seed = 0;
  std::map<std::string, Matrix> params;

  const Matrix& at(const std::string& key) const;
  bool has(const std::string& key) const { return params.contains(key); }
};

/// Glorot-uniform weights, GIC centers drawn N(0, 1).
ModelState init_model(ModelKind kind, std::size_t n_features, const ModelConfig& cfg, std::uint64_t seed);

/// What the encoder consumes. Either a constant normalized adjacency or a
/// differentiable set of normalized entry weights over `structure`.
struct EncoderInput {
  std::shared_ptr<const SparseMatrix> features;  ///< rows 0 .. features->rows()-1
  ad::Var extra_features;                        ///< appended rows, optional
  std::shared_ptr<const SparseMatrix> propagation;
  std::shared_ptr<const ad::EdgeStructure> structure;
  ad::Var weights;

  std::size_t n_nodes() const;
};

/// Constant input for a graph: sparse features and D^-1/2 (A+I) D^-1/2.
EncoderInput make_input(const Graph& g);

/// Symmetric normalization of raw entry weights. `structure` must hold every
/// diagonal entry (self loops) among its entries. Returns w_ij / sqrt(deg_i deg_j)
/// with deg the row sums of the raw weights.
ad::Var normalize_entries(std::shared_ptr<const ad::EdgeStructure> structure, const ad::Var& raw);

using BoundParams = std::map<std::string, ad::Var>;
BoundParams bind_params(ad::Tape& tape, const ModelState& state, bool requires_grad);

enum class Mode { Train, Eval };

struct Encoding {
  ad::Var z;       ///< sampled in Train mode for variational kinds, mu in Eval
  ad::Var mu;      ///< variational kinds only
  ad::Var logstd;  ///< variational kinds only
};

/// Two-layer GCN encoder. `corruption`, when non-empty, permutes the rows of
/// the first projection (row-shuffled features). `seed` drives the
/// reparameterization noise in Train mode.
Encoding encode(ModelKind kind, const BoundParams& p, const EncoderInput& in, Mode mode, std::uint64_t seed,
                std::span<const int> corruption = {});

/// Eval-mode embeddings of `g`.
Matrix embed(const ModelState& state, const Graph& g);

/// sigmoid(<z_u, z_v>) per pair; throws std::out_of_range on bad indices.
std::vector<double> score_pairs(const Matrix& z, std::span<const Edge> pairs);

/// Reconstruction data for one graph: message-passing input plus the positive
/// set (A + I plus any extra positive pairs).
struct TrainingData {
  EncoderInput input;
  std::shared_ptr<const SparseMatrix> positives;  ///< symmetric, dense-loss mode
  std::vector<Edge> positive_pairs;               ///< sampled-loss mode
  double pos_weight = 1.0;
  double norm = 1.0;
  bool dense = true;
};

TrainingData make_training_data(const Graph& g, std::span<const Edge> extra_positives, const ModelConfig& cfg);

struct SoftClusters {
  ad::Var assignment;  ///< r, n x K, rows sum to 1
  ad::Var centers;     ///< mu, K x dim, soft-assignment weighted means of z
  ad::Var summary;     ///< c, n x dim, sigmoid(r mu)
};

/// One soft k-means step from `centers` (constant) with cosine similarity
/// sharpened by `beta`.
SoftClusters soft_clusters(const ad::Var& z, const Matrix& centers, double beta);

struct LossTerms {
  ad::Var total;
  ad::Var reconstruction;
  ad::Var kl;           ///< variational kinds
  ad::Var adversarial;  ///< adversarial kinds
  ad::Var cluster;      ///< GIC
  ad::Var centers;      ///< GIC: centers after this step's soft k-means update
  ad::Var z;
};

/// Generator-side objective for one training step. Deterministic in `step_seed`.
LossTerms generator_loss(const ModelState& state, const BoundParams& p, const TrainingData& data,
                         const ModelConfig& cfg, std::uint64_t step_seed);

/// Discriminator objective: prior samples labelled real, `fake` labelled fake.
ad::Var discriminator_loss(const BoundParams& p, const Matrix& fake, std::uint64_t step_seed);

/// Mean BCE of eval-mode scores over validation positives and negatives.
double validation_loss(const ModelState& state, const EncoderInput& in, std::span<const Edge> pos,
                       std::span<const Edge> neg);

/// Adam state for a subset of a model's parameters.
class Adam {
 public:
  Adam(double lr, std::vector<std::string> keys) : lr_(lr), keys_(std::move(keys)) {}
  void step(ModelState& state, const BoundParams& p, const ad::Gradients& grads);
  const std::vector<std::string>& keys() const noexcept { return keys_; }

 private:
  double lr_;
  std::vector<std::string> keys_;
  std::map<std::string, Matrix> m_, v_;
  std::size_t t_ = 0;
};

/// One model being trained; the data may change between epochs.
class Trainer {
 public:
  Trainer(ModelState init, ModelConfig cfg);

  /// One epoch: a discriminator step (adversarial kinds) then a generator
  /// step. Returns the generator loss. Throws std::runtime_error naming the
  /// epoch when the loss is not finite.
  double step(const TrainingData& data, std::size_t epoch);

  const ModelState& state() const noexcept { return state_; }
  const ModelConfig& config() const noexcept { return cfg_; }

 private:
  ModelState state_;
  ModelConfig cfg_;
  Adam gen_;
  Adam disc_;
};

struct TrainResult {
  ModelState state;               ///< best-validation state
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<double> train_loss;  ///< per epoch
};

/// Trains on `train_graph` with early stopping on the split's validation pairs.
TrainResult train(ModelKind kind, const Graph& train_graph, const DataSplit& split, const ModelConfig& cfg,
                  std::uint64_t seed);

}  // namespace lbd
