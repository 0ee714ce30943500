#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ltc/data.hpp"
#include "ltc/diagnostics.hpp"
#include "ltc/gradients.hpp"
#include "ltc/matrix.hpp"
#include "ltc/prototypes.hpp"
#include "ltc/rng.hpp"

namespace ltc {

struct EncoderConfig {
  int input_dim = 16;
  std::vector<int> hidden = {64};
  int embedding_dim = 32;
};

enum class TrainLossKind {
  bs_only,
  bs_scl_uniform,
  bs_scl_aware,
  bs_acl_noweight,
  bs_acl,
};

std::string to_string(TrainLossKind kind);
TrainLossKind parse_loss_kind(const std::string& name);  // throws listing valid kinds
const std::vector<std::string>& loss_kind_names();

bool kind_has_contrastive(TrainLossKind kind);
bool kind_uses_centers(TrainLossKind kind);       // ACL variants
bool kind_uses_uniform_views(TrainLossKind kind); // bs_only, bs+scl_uniform

/// Which views the contrastive term consumes. Batches are always composed
/// with `uniform_views` views per base sample and every view feeds the
/// Balanced Softmax branch; the contrastive loss either consumes them all
/// (`uniform`) or only each class's distribution-aware share (`aware`,
/// the first views_many/medium/few views by shot group). `by_kind` picks
/// uniform for bs+scl_uniform and aware for the other variants.
enum class ViewMode { by_kind, uniform, aware };

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_base = 32;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double alpha = 0.5;            // contrastive loss weight
  double tau = 0.1;              // contrastive temperature
  double classifier_tau = 0.05;  // cosine-classifier scale is 1/classifier_tau
  double center_momentum = 0.9;
  TrainLossKind loss_kind = TrainLossKind::bs_acl;
  ViewMode view_mode = ViewMode::by_kind;
  int uniform_views = 4;
  ViewPolicy view_policy;
  std::vector<int> lr_decay_epochs;
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 1;
  EncoderConfig encoder;

  /// Composition policy: uniform_views noisy views per base sample.
  ViewPolicy active_policy() const;
  /// True when the contrastive term restricts itself to the
  /// distribution-aware view subset.
  bool contrastive_uses_aware_views() const;
};

/// MLP encoder: linear layers with rectifier activations, final layer
/// projected to the unit sphere.
struct Encoder {
  EncoderConfig cfg;
  std::vector<Matrix> weights;  // layer l: out x in
  std::vector<Vec> biases;
};

/// Cosine classifier: per-class weight rows, normalized at use.
struct ClassifierHead {
  Matrix weight;  // classes x embedding_dim
  double scale = 20.0;
};

struct Model {
  Encoder encoder;
  ClassifierHead head;
  ClassCenters centers;
  int classes = 0;
};

Model make_model(const EncoderConfig& cfg, int classes, double classifier_tau,
                 double center_momentum, Rng& rng);

/// Activations of one batch forward pass, kept for the backward pass.
struct EncoderForward {
  Matrix input;             // S x in
  std::vector<Matrix> pre;  // per layer, S x out (pre-activation)
  Matrix embed;             // S x h, unit rows
  Vec prenorm_lengths;      // ||u|| per row
};

EncoderForward encoder_forward(const Encoder& enc, std::span<const Vec> inputs);
Matrix head_logits(const ClassifierHead& head, const Matrix& embed);

/// Embeddings plus class logits for a batch of raw inputs.
std::pair<Matrix, Matrix> forward(const Model& model, std::span<const Vec> inputs);

struct SgdState {
  std::vector<Matrix> vel_w;
  std::vector<Vec> vel_b;
  Matrix vel_head;
};
SgdState make_sgd_state(const Model& model);

/// Full analytic gradient of the combined objective for one batch:
/// contrastive coefficients and Balanced Softmax both flow into the
/// embeddings, chain through the unit-sphere projection, then through the
/// linear/relu stack; the classifier head is trained by Balanced Softmax
/// alone. Class centers are read, never written (ACL variants require the
/// classes present in the batch to be initialized already).
struct ModelGradients {
  LossBreakdown loss;
  std::vector<Matrix> d_weights;
  std::vector<Vec> d_biases;
  Matrix d_head;
};

ModelGradients compute_gradients(const Model& model, const ComposedBatch& batch,
                                 const LongTailedDataset& ds,
                                 const TrainConfig& cfg,
                                 ConflictAccumulator* conflicts = nullptr);

/// The combined loss exactly as compute_gradients reports it, without the
/// backward pass. Pure in the model.
LossBreakdown evaluate_batch_loss(const Model& model, const ComposedBatch& batch,
                                  const LongTailedDataset& ds,
                                  const TrainConfig& cfg);

/// One optimization step: initialize centers for first-seen classes,
/// compute gradients, apply SGD with momentum and weight decay, then the
/// post-step EMA center update. Throws on a non-finite loss, naming the
/// batch seed that reproduces the batch.
LossBreakdown backward_and_step(Model& model, SgdState& sgd,
                                const ComposedBatch& batch,
                                const LongTailedDataset& ds,
                                const TrainConfig& cfg, double lr,
                                ConflictAccumulator* conflicts,
                                std::uint64_t batch_seed = 0);

struct GroupAccuracy {
  double all = 0.0;  // balanced accuracy: unweighted mean of per-class accuracy
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
};

struct Evaluation {
  std::vector<double> per_class;
  GroupAccuracy groups;
};

/// Per-class accuracy on (xs, ys), grouped by the classes' TRAIN counts.
Evaluation evaluate(const Model& model, std::span<const Vec> xs,
                    std::span<const int> ys,
                    std::span<const long long> train_counts, long long many_min,
                    long long few_max);

struct EpochMetrics {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_contrastive = 0.0;
  double loss_bs = 0.0;
  std::vector<double> train_class_acc;
  std::vector<double> test_class_acc;
  GroupAccuracy test_groups;
  ConflictReport conflicts;
};

struct MetricTrace {
  std::vector<EpochMetrics> rows;
};

struct TrainResult {
  Model model;
  MetricTrace trace;
};

/// Deterministic training loop: same config and seed, same trace bytes.
TrainResult train(const TrainConfig& cfg, const LongTailedDataset& ds);

/// Composes fresh batches with the config's active view policy, embeds
/// them with the model, and tallies SCL-style conflict statistics (the
/// coefficient-sign criterion) plus easy-positive rates per class.
ConflictReport diagnose_conflicts(const Model& model, const LongTailedDataset& ds,
                                  const TrainConfig& cfg, int batches);

/// Versioned binary checkpoint: encoder, head, centers, config hash, seed.
void save_checkpoint(const Model& model, const std::string& path,
                     std::uint64_t config_hash, std::uint64_t seed);

struct LoadedCheckpoint {
  Model model;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ltc
