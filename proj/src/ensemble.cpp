#include "bamp/ensemble.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <thread>

#include "bamp/errors.hpp"
#include "bamp/kernels.hpp"
#include "bamp/linalg.hpp"
#include "bamp/random.hpp"

namespace bamp {

void RandomProjectionConfig::validate(std::size_t input_dim) const {
  if (dim < input_dim) {
    throw InputError("random projection: dim (" + std::to_string(dim) +
                     ") must be >= the feature dimension (" + std::to_string(input_dim) + ")");
  }
  if (!(ridge >= 0.0)) throw InputError("random projection: ridge must be >= 0");
}

RandomProjectionScorer::RandomProjectionScorer(std::size_t input_dim, RandomProjectionConfig config)
    : config_(config), projection_(input_dim, config.dim), gram_(config.dim, config.dim) {
  config_.validate(input_dim);
  Rng rng(config_.seed);
  for (double& v : projection_.storage()) v = rng.normal();
  class_sums_ = Matrix(0, config_.dim);
  targets_ = Matrix(0, config_.dim);
}

Vector RandomProjectionScorer::project(std::span<const double> x) const {
  if (x.size() != projection_.rows()) throw InputError("random projection: dimension mismatch");
  Vector h(config_.dim);
  kernels::active_kernels().gemv_t(projection_.data(), projection_.rows(), projection_.cols(),
                                   x.data(), h.data());
  for (double& v : h) v = std::max(0.0, v);
  return h;
}

void RandomProjectionScorer::accumulate(const Matrix& features, std::span<const std::size_t> labels,
                                        std::size_t classes) {
  if (labels.size() != features.rows()) throw InputError("random projection: label count mismatch");
  if (classes < counts_.size()) throw InputError("random projection: class count cannot shrink");
  while (counts_.size() < classes) {
    counts_.push_back(0.0);
    class_sums_.append_row(Vector(config_.dim, 0.0));
    targets_.append_row(Vector(config_.dim, 0.0));
  }
  const auto& k = kernels::active_kernels();
  const std::size_t dim = config_.dim;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    if (labels[i] >= classes) throw InputError("random projection: label out of range");
    const Vector h = project(features.row(i));
    k.rank1_update(1.0, h.data(), dim, h.data(), dim, gram_.data());
    k.axpy(1.0, h.data(), class_sums_.row(labels[i]).data(), dim);
    k.axpy(1.0, h.data(), targets_.row(labels[i]).data(), dim);
    counts_[labels[i]] += 1.0;
  }
}

void RandomProjectionScorer::solve() {
  const std::size_t dim = config_.dim;
  const std::size_t classes = counts_.size();
  Matrix system = gram_;
  for (std::size_t i = 0; i < dim; ++i) system(i, i) += config_.ridge;
  readout_ = Matrix(dim, classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto column = targets_.row(c);
    for (std::size_t i = 0; i < dim; ++i) readout_(i, c) = column[i];
  }
  linalg::cholesky_solve(linalg::cholesky(system), readout_);
}

void RandomProjectionScorer::fit_base(const Matrix& features, std::span<const std::size_t> labels,
                                      std::size_t classes) {
  if (!counts_.empty()) throw InputError("random projection: fit_base called twice");
  accumulate(features, labels, classes);
  base_classes_ = classes;
  solve();
}

void RandomProjectionScorer::fit_increment(const Matrix& features,
                                           std::span<const std::size_t> labels,
                                           std::size_t new_classes,
                                           const OtsCalibration* calibration) {
  const std::size_t first = counts_.size();
  for (std::size_t label : labels) {
    if (label < first) throw InputError("random projection: increment relabels a known class");
  }
  accumulate(features, labels, first + new_classes);
  if (calibration != nullptr) {
    if (calibration->weights.size() != new_classes) {
      throw InputError("random projection: calibration weight count mismatch");
    }
    // Target column of class c becomes n_c times its calibrated projected mean.
    const double beta = calibration->beta;
    for (std::size_t j = 0; j < new_classes; ++j) {
      const std::size_t c = first + j;
      const Vector& w = calibration->weights[j];
      if (w.size() != base_classes_) throw InputError("random projection: weights must span base classes");
      if (counts_[c] == 0.0) continue;
      Vector blended(config_.dim, 0.0);
      for (std::size_t b = 0; b < base_classes_; ++b) {
        kernels::axpy(w[b] / counts_[b], class_sums_.row(b), blended);
      }
      auto target = targets_.row(c);
      const auto sums = class_sums_.row(c);
      for (std::size_t i = 0; i < config_.dim; ++i) {
        target[i] = beta * sums[i] + (1.0 - beta) * counts_[c] * blended[i];
      }
    }
  }
  solve();
}

Vector RandomProjectionScorer::raw_scores(std::span<const double> x) const {
  const Vector h = project(x);
  Vector scores(counts_.size());
  kernels::active_kernels().gemv_t(readout_.data(), readout_.rows(), readout_.cols(), h.data(),
                                   scores.data());
  return scores;
}

ScoreVector RandomProjectionScorer::score_vector(std::span<const double> x) const {
  return min_max_normalize(raw_scores(x));
}

Vector soft_vote(std::span<const double> sa, std::span<const double> ots, double weight) {
  if (sa.size() != ots.size()) throw InputError("soft_vote: score vectors differ in length");
  Vector out(sa.size());
  for (std::size_t i = 0; i < sa.size(); ++i) out[i] = sa[i] + weight * ots[i];
  return out;
}

std::size_t predict(std::span<const double> scores) {
  if (scores.empty()) throw InputError("predict: empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------

ComponentToggles ComponentToggles::preset(const std::string& name) {
  if (name == "B1") return {false, false, false};
  if (name == "B2") return {true, false, false};
  if (name == "B3") return {true, true, false};
  if (name == "B4") return {true, true, true};
  throw InputError("unknown toggle preset '" + name + "' (expected B1, B2, B3 or B4)");
}

std::string ComponentToggles::preset_name() const {
  for (const char* name : {"B1", "B2", "B3", "B4"}) {
    if (preset(name) == *this) return name;
  }
  return "custom";
}

void ProtocolConfig::validate() const {
  train.validate();
  calibration.validate();
  if (!(vote_weight >= 0.0)) throw InputError("vote_weight must be >= 0");
  if (threads == 0) throw InputError("threads must be >= 1");
}

MetricPair session_metrics(std::span<const double> accuracies) {
  if (accuracies.empty()) throw InputError("session_metrics: no sessions");
  MetricPair out;
  out.a_last = accuracies.back();
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  out.a_inc = sum / static_cast<double>(accuracies.size());
  return out;
}

MetricPair macro_metrics(std::span<const MetricPair> runs) {
  if (runs.empty()) throw InputError("macro_metrics: no runs");
  MetricPair out;
  for (const auto& run : runs) {
    out.a_last += run.a_last;
    out.a_inc += run.a_inc;
  }
  out.a_last /= static_cast<double>(runs.size());
  out.a_inc /= static_cast<double>(runs.size());
  return out;
}

double recompute_accuracy(const SessionRecord& record) {
  if (record.truth.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < record.truth.size(); ++i) {
    if (record.truth[i] == record.predicted[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(record.truth.size());
}

namespace {

Matrix feature_rows(const FrozenEmbedding& embedding, std::span<const LabeledEmbedding> records) {
  Matrix out(records.size(), embedding.input_dim());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Vector f = embedding.features(std::span<const float>(records[i].vector));
    std::copy(f.begin(), f.end(), out.row(i).begin());
  }
  return out;
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  const std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t * chunk; i < std::min(count, (t + 1) * chunk); ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& worker : pool) worker.join();
  for (auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
}

class SessionState {
 public:
  SessionState(std::span<const LabeledEmbedding> records, const ProtocolConfig& config,
               FrozenEmbedding embedding)
      : records_(records), config_(config), embedding_(std::move(embedding)) {}

  void add_base(std::span<const LabeledEmbedding> base_records, std::vector<std::string>& warnings) {
    const BasePrototypes prototypes = extract_base_prototypes(embedding_, base_records);
    base_.means = prototypes.raw;
    base_.covariances = extract_base_covariances(embedding_, base_records, &warnings);
    for (std::size_t b = 0; b < prototypes.class_ids.size(); ++b) {
      register_class(prototypes.class_ids[b]);
      classes_.push_back(base_class_statistics(prototypes.class_ids[b], base_.means.row(b),
                                               base_.covariances[b], config_.calibration.gamma));
    }
    if (config_.toggles.voting) {
      ots_ = std::make_unique<RandomProjectionScorer>(embedding_.input_dim(), config_.ots);
      const Matrix features = feature_rows(embedding_, base_records);
      ots_->fit_base(features, indices_of(base_records), seen_.size());
    }
  }

  void add_session(std::span<const LabeledEmbedding> shots) {
    std::map<std::uint32_t, Matrix> grouped;
    for (const auto& record : shots) {
      grouped[record.class_id].append_row(
          embedding_.features(std::span<const float>(record.vector)));
    }
    OtsCalibration calibration;
    calibration.beta = config_.calibration.beta;
    for (const auto& [id, rows] : grouped) {
      register_class(id);
      const NewClassPrototypes prototypes = build_new_class_prototypes(id, rows);
      classes_.push_back(
          new_class_statistics(prototypes, base_, config_.calibration, config_.toggles.calibration));
      calibration.weights.push_back(analogy_weights_for(prototypes.prototypes.row(0), base_.means,
                                                        config_.calibration.tau_cal));
    }
    if (ots_) {
      const Matrix features = feature_rows(embedding_, shots);
      ots_->fit_increment(features, indices_of(shots), grouped.size(),
                          config_.toggles.calibration ? &calibration : nullptr);
    }
  }

  SessionRecord evaluate(std::size_t session) const {
    SessionRecord record;
    record.session = session;
    record.seen_classes = seen_;
    const auto test = select_test_records(records_, seen_);
    const std::size_t n = test.size();
    const std::size_t seen = seen_.size();
    std::vector<std::size_t> truth(n);
    std::vector<std::size_t> predicted(n);
    std::vector<char> degenerate(n, 0);
    parallel_for(n, config_.threads, [&](std::size_t i) {
      const Vector x = embedding_.features(std::span<const float>(test[i].vector));
      const ScoreVector sa = sa_score_vector(x, classes_);
      degenerate[i] = sa.degenerate ? 1 : 0;
      if (ots_) {
        const ScoreVector ots = ots_->score_vector(x);
        predicted[i] = predict(soft_vote(sa.scores, ots.scores, config_.vote_weight));
      } else {
        predicted[i] = predict(sa.scores);
      }
      truth[i] = index_.at(test[i].class_id);
    });
    record.confusion.assign(seen * seen, 0);
    for (std::size_t i = 0; i < n; ++i) {
      record.truth.push_back(seen_[truth[i]]);
      record.predicted.push_back(seen_[predicted[i]]);
      ++record.confusion[truth[i] * seen + predicted[i]];
      if (truth[i] == predicted[i]) ++record.correct;
      record.degenerate_scores += static_cast<std::size_t>(degenerate[i]);
    }
    record.accuracy = n == 0 ? 0.0 : 100.0 * static_cast<double>(record.correct) /
                                         static_cast<double>(n);
    return record;
  }

 private:
  void register_class(std::uint32_t id) {
    if (!index_.emplace(id, seen_.size()).second) {
      throw InputError("class " + std::to_string(id) + " appears in more than one session");
    }
    seen_.push_back(id);
  }

  std::vector<std::size_t> indices_of(std::span<const LabeledEmbedding> records) const {
    std::vector<std::size_t> out;
    out.reserve(records.size());
    for (const auto& record : records) out.push_back(index_.at(record.class_id));
    return out;
  }

  std::span<const LabeledEmbedding> records_;
  const ProtocolConfig& config_;
  FrozenEmbedding embedding_;
  BaseStatistics base_;
  std::vector<std::uint32_t> seen_;
  std::map<std::uint32_t, std::size_t> index_;
  std::vector<ClassStatistics> classes_;
  std::unique_ptr<RandomProjectionScorer> ots_;
};

}  // namespace

SessionResult run_protocol(std::span<const LabeledEmbedding> records, const SessionPlan& plan,
                           const ProtocolConfig& config, const BottleneckHead* pretrained,
                           const SessionCallback& on_session) {
  config.validate();
  if (plan.session_count() == 0) throw InputError("run_protocol: plan has no sessions");
  SessionResult result;

  const auto base_records = sample_session_data(plan, 0, records, config.seed);
  const TrainingSet base_set = TrainingSet::from_records(base_records);
  BottleneckHead head;
  if (pretrained != nullptr) {
    if (pretrained->input_dim() != base_set.features.cols() ||
        pretrained->class_count() != base_set.class_ids.size()) {
      throw InputError("run_protocol: checkpoint does not match the base session");
    }
    head = *pretrained;
  } else {
    TrainConfig train = config.train;
    train.mixture_losses = config.toggles.mixture_losses;
    TrainResult trained = train_base_session(base_set, train);
    result.alpha = trained.alpha;
    result.lambda = trained.lambda;
    result.warnings = std::move(trained.warnings);
    head = std::move(trained.head);
  }
  result.base_train_accuracy = head_accuracy(head, base_set);

  SessionState state(records, config, FrozenEmbedding(std::move(head)));
  state.add_base(base_records, result.warnings);

  std::vector<double> accuracies;
  for (std::size_t t = 0; t < plan.session_count(); ++t) {
    if (t > 0) state.add_session(sample_session_data(plan, t, records, config.seed));
    SessionRecord record = state.evaluate(t);
    if (record.degenerate_scores > 0) {
      result.warnings.push_back("session " + std::to_string(t) + ": " +
                                std::to_string(record.degenerate_scores) +
                                " test samples had identical scores for every class");
    }
    accuracies.push_back(record.accuracy);
    if (on_session) on_session(record);
    result.sessions.push_back(std::move(record));
  }
  result.metrics = session_metrics(accuracies);
  return result;
}

}  // namespace bamp
