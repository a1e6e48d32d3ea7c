#include "bamp/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "bamp/errors.hpp"
#include "bamp/kernels.hpp"
#include "bamp/linalg.hpp"
#include "bamp/random.hpp"
#include "binary_io.hpp"

namespace bamp {

const char* to_string(StepSchedule schedule) {
  return schedule == StepSchedule::cosine ? "cosine" : "plateau_halving";
}

StepSchedule parse_step_schedule(const std::string& text) {
  if (text == "cosine") return StepSchedule::cosine;
  if (text == "plateau_halving") return StepSchedule::plateau_halving;
  throw InputError("unknown step schedule '" + text + "' (expected cosine or plateau_halving)");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* message) {
    if (!ok) throw InputError(std::string("train config: ") + message);
  };
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be > 0");
  require(sgd_momentum >= 0.0 && sgd_momentum < 1.0, "sgd_momentum must lie in [0, 1)");
  require(!alpha || *alpha >= 0.0, "alpha must be >= 0");
  require(!lambda || *lambda >= 0.0, "lambda must be >= 0");
  require(tau > 0.0, "tau must be > 0");
  require(tau_assign > 0.0, "tau_assign must be > 0");
  require(prototypes_per_class >= 1, "prototypes_per_class must be >= 1");
  require(ema_momentum >= 0.0 && ema_momentum < 1.0, "ema_momentum must lie in [0, 1)");
  require(prune_threshold >= 0.0 && prune_threshold < 1.0, "prune_threshold must lie in [0, 1)");
  require(init_noise >= 0.0, "init_noise must be >= 0");
}

TrainingSet TrainingSet::from_records(std::span<const LabeledEmbedding> records) {
  TrainingSet set;
  std::map<std::uint32_t, std::size_t> index;
  for (const auto& record : records) index.emplace(record.class_id, 0);
  for (auto& [id, idx] : index) {
    idx = set.class_ids.size();
    set.class_ids.push_back(id);
  }
  const std::size_t d = records.empty() ? 0 : records.front().vector.size();
  set.features = Matrix(records.size(), d);
  set.labels.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& v = records[i].vector;
    if (v.size() != d) throw InputError("TrainingSet: mixed dimensions");
    std::copy(v.begin(), v.end(), set.features.row(i).begin());
    set.labels.push_back(index.at(records[i].class_id));
  }
  return set;
}

namespace {

struct BatchForward {
  std::vector<HeadForward> caches;
  Matrix embeddings;
  Matrix logits;
};

BatchForward forward_batch(const BottleneckHead& head, const Matrix& features) {
  BatchForward out;
  out.embeddings = Matrix(features.rows(), head.input_dim());
  out.logits = Matrix(features.rows(), head.class_count());
  out.caches.reserve(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    out.caches.push_back(forward(head, features.row(i)));
    const auto& cache = out.caches.back();
    std::copy(cache.embedding.begin(), cache.embedding.end(), out.embeddings.row(i).begin());
    std::copy(cache.logits.begin(), cache.logits.end(), out.logits.row(i).begin());
  }
  return out;
}

bool finite_breakdown(const ObjectiveBreakdown& loss) {
  return std::isfinite(loss.total) && std::isfinite(loss.cross_entropy) &&
         std::isfinite(loss.compact) && std::isfinite(loss.proto_contrastive);
}

std::string describe(const ObjectiveBreakdown& loss) {
  std::ostringstream out;
  out << "total=" << loss.total << " ce=" << loss.cross_entropy << " compact=" << loss.compact
      << " proto_contra=" << loss.proto_contrastive;
  return out.str();
}

}  // namespace

ObjectiveEvaluation evaluate_objective(const BottleneckHead& head, const Matrix& features,
                                       std::span<const std::size_t> labels,
                                       const PrototypeBank& bank, const Assignments* assignments,
                                       const ObjectiveWeights& weights) {
  if (labels.size() != features.rows()) throw InputError("evaluate_objective: label count mismatch");
  const BatchForward batch = forward_batch(head, features);
  ObjectiveEvaluation eval{{}, HeadGradients(head), bank};

  const auto ce = loss_ce_batch(batch.logits, labels);
  eval.loss.cross_entropy = ce.value;
  Matrix grad_embeddings(features.rows(), head.input_dim());

  if (bank.class_count() > 0) {
    Assignments computed;
    if (assignments == nullptr) {
      computed = compute_assignments(batch.embeddings, bank, weights.tau_assign);
      assignments = &computed;
    }
    const auto compact = loss_compact(batch.embeddings, labels, bank, *assignments, weights.tau);
    eval.loss.compact = compact.value;
    if (weights.alpha != 0.0) {
      kernels::axpy(weights.alpha, compact.grad_embeddings.storage(), grad_embeddings.storage());
    }

    EmaTrace trace;
    eval.updated_bank = update_prototypes_ema(bank, batch.embeddings, labels, *assignments,
                                              weights.ema_momentum, &trace);
    auto contrast =
        loss_proto_contrastive(eval.updated_bank, weights.tau, weights.contrast_denominator);
    eval.loss.proto_contrastive = contrast.value;
    eval.loss.skipped_anchors = contrast.skipped_anchors;
    if (weights.lambda != 0.0) {
      for (auto& g : contrast.grad_prototypes) {
        for (double& v : g.storage()) v *= weights.lambda;
      }
      backpropagate_ema(eval.updated_bank, batch.embeddings, labels, *assignments,
                        weights.ema_momentum, trace, contrast.grad_prototypes, grad_embeddings);
    }
  }

  eval.loss.total = weights.ce_weight * eval.loss.cross_entropy + weights.alpha * eval.loss.compact +
                    weights.lambda * eval.loss.proto_contrastive;

  Vector grad_logits(head.class_count());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto ce_row = ce.grad_logits.row(i);
    for (std::size_t c = 0; c < grad_logits.size(); ++c) grad_logits[c] = weights.ce_weight * ce_row[c];
    backward(head, features.row(i), batch.caches[i], grad_embeddings.row(i), grad_logits,
             eval.grads);
  }
  return eval;
}

ObjectiveBreakdown evaluate_dataset_objective(const BottleneckHead& head, const TrainingSet& data,
                                              const PrototypeBank& bank,
                                              const ObjectiveWeights& weights) {
  const BatchForward batch = forward_batch(head, data.features);
  ObjectiveBreakdown loss;
  loss.cross_entropy = loss_ce_batch(batch.logits, data.labels).value;
  if (bank.class_count() > 0) {
    const auto assignments = compute_assignments(batch.embeddings, bank, weights.tau_assign);
    loss.compact = loss_compact(batch.embeddings, data.labels, bank, assignments, weights.tau).value;
    const auto contrast = loss_proto_contrastive(bank, weights.tau, weights.contrast_denominator);
    loss.proto_contrastive = contrast.value;
    loss.skipped_anchors = contrast.skipped_anchors;
  }
  loss.total = weights.ce_weight * loss.cross_entropy + weights.alpha * loss.compact +
               weights.lambda * loss.proto_contrastive;
  return loss;
}

TrainResult train_base_session(const TrainingSet& data, const TrainConfig& config) {
  config.validate();
  if (data.features.rows() == 0) throw InputError("train_base_session: empty base session");
  const std::size_t n = data.features.rows();
  const std::size_t d = data.features.cols();
  const std::size_t classes = data.class_ids.size();
  const std::size_t rank = config.rank != 0 ? config.rank : std::max<std::size_t>(1, d / 4);

  TrainResult result;
  result.class_ids = data.class_ids;
  result.head = BottleneckHead::initialize(d, rank, classes, config.seed, config.activation,
                                           config.residual);
  if (config.mixture_losses) {
    const auto [alpha, lambda] = balance_weights(classes);
    result.alpha = config.alpha.value_or(alpha);
    result.lambda = config.lambda.value_or(lambda);

    // Warm start: prototypes scattered around each class's mean embedding.
    Matrix class_means(classes, d);
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const UnitVector z = forward_embed(result.head, data.features.row(i));
      kernels::axpy(1.0, z.components(), class_means.row(data.labels[i]));
      ++counts[data.labels[i]];
    }
    for (std::size_t c = 0; c < classes; ++c) {
      if (counts[c] == 0) throw InputError("train_base_session: base class without samples");
      for (double& v : class_means.row(c)) v /= static_cast<double>(counts[c]);
    }
    result.bank = initialize_bank(class_means, config.prototypes_per_class, config.init_noise,
                                  config.ema_momentum, config.seed);
    if (config.prototypes_per_class == 1) {
      result.warnings.push_back(
          "prototype contrastive loss is undefined with one prototype per class; term contributes 0");
    }
  }

  ObjectiveWeights weights;
  weights.alpha = result.alpha;
  weights.lambda = result.lambda;
  weights.tau = config.tau;
  weights.tau_assign = config.tau_assign;
  weights.ema_momentum = config.ema_momentum;
  weights.contrast_denominator = config.contrast_denominator;

  std::vector<Matrix> velocity;
  for (const Matrix* p : result.head.parameters()) velocity.emplace_back(p->rows(), p->cols());

  double step = config.learning_rate;
  std::optional<double> best_full;
  if (config.schedule == StepSchedule::plateau_halving && config.epochs > 0) {
    best_full = evaluate_dataset_objective(result.head, data, result.bank, weights).total;
  }

  std::vector<std::size_t> order(n);
  Matrix batch_features;
  std::vector<std::size_t> batch_labels;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.schedule == StepSchedule::cosine) {
      step = 0.5 * config.learning_rate *
             (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                             static_cast<double>(config.epochs)));
    }
    const BottleneckHead head_snapshot = result.head;
    const PrototypeBank bank_snapshot = result.bank;
    const std::vector<Matrix> velocity_snapshot = velocity;

    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(config.seed, 0x65706f6368ULL + epoch));
    rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = step;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      batch_features = Matrix(stop - start, d);
      batch_labels.resize(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        std::copy(data.features.row(order[i]).begin(), data.features.row(order[i]).end(),
                  batch_features.row(i - start).begin());
        batch_labels[i - start] = data.labels[order[i]];
      }

      auto eval = evaluate_objective(result.head, batch_features, batch_labels, result.bank,
                                     nullptr, weights);
      if (!finite_breakdown(eval.loss)) {
        throw ComputationError("training diverged at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batches) + ": " + describe(eval.loss));
      }
      auto params = result.head.parameters();
      auto grads = eval.grads.blocks();
      for (std::size_t b = 0; b < params.size(); ++b) {
        auto& v = velocity[b].storage();
        auto& p = params[b]->storage();
        const auto& g = grads[b]->storage();
        for (std::size_t j = 0; j < p.size(); ++j) {
          v[j] = config.sgd_momentum * v[j] - step * g[j];
          p[j] += v[j];
        }
      }
      result.bank = std::move(eval.updated_bank);

      stats.batch_mean.total += eval.loss.total;
      stats.batch_mean.cross_entropy += eval.loss.cross_entropy;
      stats.batch_mean.compact += eval.loss.compact;
      stats.batch_mean.proto_contrastive += eval.loss.proto_contrastive;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    stats.batch_mean.total *= inv;
    stats.batch_mean.cross_entropy *= inv;
    stats.batch_mean.compact *= inv;
    stats.batch_mean.proto_contrastive *= inv;

    if (config.prune_threshold > 0.0) result.bank = prune_prototypes(result.bank, config.prune_threshold);

    if (config.schedule == StepSchedule::plateau_halving) {
      const double full = evaluate_dataset_objective(result.head, data, result.bank, weights).total;
      if (!std::isfinite(full)) {
        throw ComputationError("training diverged at epoch " + std::to_string(epoch));
      }
      if (full > *best_full) {
        result.head = head_snapshot;
        result.bank = bank_snapshot;
        velocity = velocity_snapshot;
        step *= 0.5;
        stats.rolled_back = true;
        stats.full_loss = *best_full;
      } else {
        best_full = full;
        stats.full_loss = full;
      }
    }
    result.history.push_back(stats);
  }
  return result;
}

double head_accuracy(const BottleneckHead& head, const TrainingSet& data) {
  if (data.features.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.features.rows(); ++i) {
    const auto fwd = forward(head, data.features.row(i));
    const auto best = static_cast<std::size_t>(
        std::distance(fwd.logits.begin(), std::max_element(fwd.logits.begin(), fwd.logits.end())));
    if (best == data.labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.features.rows());
}

// ---------------------------------------------------------------------------

namespace {

std::map<std::uint32_t, Matrix> group_features(const FrozenEmbedding& embedding,
                                               std::span<const LabeledEmbedding> records) {
  std::map<std::uint32_t, Matrix> grouped;
  for (const auto& record : records) {
    grouped[record.class_id].append_row(embedding.features(std::span<const float>(record.vector)));
  }
  return grouped;
}

}  // namespace

BasePrototypes extract_base_prototypes(const FrozenEmbedding& embedding,
                                       std::span<const LabeledEmbedding> base_records) {
  const auto grouped = group_features(embedding, base_records);
  if (grouped.empty()) throw InputError("extract_base_prototypes: no base samples");
  BasePrototypes out;
  out.raw = Matrix(grouped.size(), embedding.input_dim());
  out.normalized = Matrix(grouped.size(), embedding.input_dim());
  std::size_t row = 0;
  for (const auto& [id, samples] : grouped) {
    out.class_ids.push_back(id);
    const Vector mean = linalg::mean_rows(samples);
    std::copy(mean.begin(), mean.end(), out.raw.row(row).begin());
    const UnitVector unit = UnitVector::normalize(mean);
    std::copy(unit.vector().begin(), unit.vector().end(), out.normalized.row(row).begin());
    ++row;
  }
  return out;
}

std::vector<Matrix> extract_base_covariances(const FrozenEmbedding& embedding,
                                             std::span<const LabeledEmbedding> base_records,
                                             std::vector<std::string>* warnings) {
  const auto grouped = group_features(embedding, base_records);
  std::vector<Matrix> covariances;
  for (const auto& [id, samples] : grouped) {
    if (samples.rows() < 2 && warnings != nullptr) {
      warnings->push_back("base class " + std::to_string(id) +
                          " has a single sample; its covariance is set to zero");
    }
    covariances.push_back(linalg::covariance_rows(samples));
  }
  return covariances;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'B', 'A', 'M', 'C'};

void put_matrix(std::string& out, const Matrix& m) {
  for (double v : m.storage()) binary::put_f64(out, v);
}

Matrix read_matrix(binary::Reader& in, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.storage()) {
    v = in.read_f64();
    if (!std::isfinite(v)) throw FormatError("checkpoint: non-finite parameter");
  }
  return m;
}

}  // namespace

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto& head = checkpoint.head;
  std::string out;
  out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  binary::put<std::uint16_t>(out, kCheckpointVersion);
  binary::put<std::uint64_t>(out, checkpoint.config_hash);
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(head.input_dim()));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(head.rank()));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(head.class_count()));
  out.push_back(static_cast<char>(head.activation));
  out.push_back(static_cast<char>(head.residual ? 1 : 0));
  put_matrix(out, head.down);
  put_matrix(out, head.up);
  put_matrix(out, head.classifier);
  if (checkpoint.class_ids.size() != head.class_count()) {
    throw InputError("write_checkpoint: class id count does not match the head");
  }
  for (auto id : checkpoint.class_ids) binary::put<std::uint32_t>(out, id);
  binary::put_f64(out, checkpoint.bank.momentum);
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.bank.class_count()));
  for (std::size_t c = 0; c < checkpoint.bank.class_count(); ++c) {
    const Matrix& protos = checkpoint.bank.prototypes[c];
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(protos.rows()));
    put_matrix(out, protos);
    for (double m : checkpoint.bank.mass[c]) binary::put_f64(out, m);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw InputError("write_checkpoint: cannot open " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw InputError("write_checkpoint: write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw InputError("read_checkpoint: cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>()};
  binary::Reader in(bytes, "checkpoint");
  if (std::memcmp(in.take(4), kCheckpointMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = in.read<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint checkpoint;
  checkpoint.config_hash = in.read<std::uint64_t>();
  const std::size_t d = in.read<std::uint32_t>();
  const std::size_t r = in.read<std::uint32_t>();
  const std::size_t classes = in.read<std::uint32_t>();
  const auto activation = in.read<std::uint8_t>();
  if (activation > 1) throw FormatError("checkpoint: unknown activation");
  checkpoint.head.activation = static_cast<Activation>(activation);
  checkpoint.head.residual = in.read<std::uint8_t>() != 0;
  checkpoint.head.down = read_matrix(in, d, r);
  checkpoint.head.up = read_matrix(in, r, d);
  checkpoint.head.classifier = read_matrix(in, d, classes);
  for (std::size_t c = 0; c < classes; ++c) checkpoint.class_ids.push_back(in.read<std::uint32_t>());
  checkpoint.bank.momentum = in.read_f64();
  const std::size_t bank_classes = in.read<std::uint32_t>();
  for (std::size_t c = 0; c < bank_classes; ++c) {
    const std::size_t k = in.read<std::uint32_t>();
    checkpoint.bank.prototypes.push_back(read_matrix(in, k, d));
    std::vector<double> mass(k);
    for (double& m : mass) m = in.read_f64();
    checkpoint.bank.mass.push_back(std::move(mass));
  }
  if (in.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return checkpoint;
}

}  // namespace bamp
