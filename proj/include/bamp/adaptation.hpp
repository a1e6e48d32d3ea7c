#pragma once

// Base-session adaptation: trains the bottleneck head on D^0 with
// cross-entropy plus the mixture-of-prototype losses, maintaining the
// prototype banks by EMA, then extracts base-class statistics with the
// frozen head.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bamp/bottleneck_head.hpp"
#include "bamp/embedding_store.hpp"
#include "bamp/losses.hpp"
#include "bamp/matrix.hpp"
#include "bamp/prototype_bank.hpp"

namespace bamp {

enum class StepSchedule : std::uint8_t {
  cosine,           // cosine-annealed from learning_rate to 0 over the epochs
  plateau_halving,  // epochs that raise the full-set loss are rolled back and the step halves
};

const char* to_string(StepSchedule schedule);
StepSchedule parse_step_schedule(const std::string& text);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double sgd_momentum = 0.9;
  StepSchedule schedule = StepSchedule::cosine;

  bool mixture_losses = true;     // off: cross-entropy only
  std::optional<double> alpha;    // unset: balance_weights(nbase)
  std::optional<double> lambda;   // unset: balance_weights(nbase)
  double tau = 0.1;               // loss temperature
  double tau_assign = 0.1;        // assignment temperature
  std::size_t prototypes_per_class = 4;
  double ema_momentum = 0.99;
  double prune_threshold = 0.0;   // 0 disables pruning
  double init_noise = 0.05;
  ContrastDenominator contrast_denominator = ContrastDenominator::other_classes;

  std::size_t rank = 0;           // 0: d / 4
  Activation activation = Activation::gelu;
  bool residual = true;
  std::uint64_t seed = 0;

  /// Throws InputError when a field is outside its documented range.
  void validate() const;
};

/// A labeled batch in base-class index space (labels in [0, C)).
struct TrainingSet {
  Matrix features;                  // N x d raw backbone features
  std::vector<std::size_t> labels;  // class index
  std::vector<std::uint32_t> class_ids;  // index -> dataset class id

  static TrainingSet from_records(std::span<const LabeledEmbedding> records);
};

struct ObjectiveWeights {
  double ce_weight = 1.0;
  double alpha = 0.0;
  double lambda = 0.0;
  double tau = 0.1;
  double tau_assign = 0.1;
  double ema_momentum = 0.99;
  ContrastDenominator contrast_denominator = ContrastDenominator::other_classes;
};

struct ObjectiveBreakdown {
  double total = 0.0;
  double cross_entropy = 0.0;
  double compact = 0.0;
  double proto_contrastive = 0.0;
  std::size_t skipped_anchors = 0;
};

struct ObjectiveEvaluation {
  ObjectiveBreakdown loss;
  HeadGradients grads;
  PrototypeBank updated_bank;  // bank after the EMA step on this batch
};

/// One training step's objective on a batch, with exact gradients with
/// respect to the head parameters.
///
/// The compact loss scores the batch against `bank` (the pre-step prototypes)
/// under fixed assignment weights. The prototype contrastive loss is evaluated
/// on the EMA-updated bank, so its gradient reaches the embeddings through
/// the EMA step. Assignments are constants throughout; when `assignments` is
/// null they are computed from the batch embeddings with weights.tau_assign.
/// An empty bank disables both mixture terms.
ObjectiveEvaluation evaluate_objective(const BottleneckHead& head, const Matrix& features,
                                       std::span<const std::size_t> labels,
                                       const PrototypeBank& bank, const Assignments* assignments,
                                       const ObjectiveWeights& weights);

/// Full objective value on a data set without an EMA step (prototype
/// contrastive term on `bank` as is).
ObjectiveBreakdown evaluate_dataset_objective(const BottleneckHead& head, const TrainingSet& data,
                                              const PrototypeBank& bank,
                                              const ObjectiveWeights& weights);

struct EpochStats {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  ObjectiveBreakdown batch_mean;   // mean over the epoch's mini-batches
  std::optional<double> full_loss; // recorded under plateau_halving
  bool rolled_back = false;
};

struct TrainResult {
  BottleneckHead head;
  PrototypeBank bank;
  std::vector<std::uint32_t> class_ids;
  double alpha = 0.0;
  double lambda = 0.0;
  std::vector<EpochStats> history;
  std::vector<std::string> warnings;
};

/// Mini-batch SGD with momentum on the training objective. Deterministic
/// given config.seed. Throws ComputationError on a non-finite loss.
TrainResult train_base_session(const TrainingSet& data, const TrainConfig& config);

/// Training accuracy of the linear head.
double head_accuracy(const BottleneckHead& head, const TrainingSet& data);

// ---------------------------------------------------------------------------
// Base-class statistics from the frozen embedding

struct BasePrototypes {
  std::vector<std::uint32_t> class_ids;
  Matrix raw;         // B x d, mean of phi*(x) per class
  Matrix normalized;  // B x d, rows of `raw` normalized
};

BasePrototypes extract_base_prototypes(const FrozenEmbedding& embedding,
                                       std::span<const LabeledEmbedding> base_records);

/// Unbiased covariance of phi*(x) per class, ordered like extract_base_prototypes.
/// Singleton classes yield a zero matrix and a message in `warnings`.
std::vector<Matrix> extract_base_covariances(const FrozenEmbedding& embedding,
                                             std::span<const LabeledEmbedding> base_records,
                                             std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Checkpoints
//
// Binary little-endian: magic "BAMC" | version u16 = 1 | config hash u64 |
// d u32 | r u32 | C u32 | activation u8 | residual u8 |
// W_down, W_up, W_cls as f64 | C x class id u32 | EMA momentum f64 |
// per class: K u32, K x d prototypes f64, K mass f64.

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t config_hash = 0;
  BottleneckHead head;
  PrototypeBank bank;
  std::vector<std::uint32_t> class_ids;
};

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace bamp
