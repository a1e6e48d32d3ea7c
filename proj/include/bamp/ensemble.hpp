#pragma once

// Off-the-shelf scorer, soft voting, and the session-by-session evaluation
// protocol with its accuracy metrics.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bamp/adaptation.hpp"
#include "bamp/embedding_store.hpp"
#include "bamp/matrix.hpp"
#include "bamp/statistical_analogy.hpp"

namespace bamp {

/// Per-new-class analogy weights over the base classes, for scorers that
/// calibrate their class summaries the way new-class means are calibrated.
struct OtsCalibration {
  std::vector<Vector> weights;  // one entry per new class, each of length B
  double beta = 0.9;
};

/// A second classifier whose normalized scores join the vote. Class indices
/// are global and grow with every increment.
class OtsScorer {
 public:
  virtual ~OtsScorer() = default;

  virtual void fit_base(const Matrix& features, std::span<const std::size_t> labels,
                        std::size_t classes) = 0;
  /// `labels` index the new classes as class_count() .. class_count() + new_classes - 1.
  virtual void fit_increment(const Matrix& features, std::span<const std::size_t> labels,
                             std::size_t new_classes, const OtsCalibration* calibration) = 0;
  /// Min-max normalized scores over every class fitted so far.
  virtual ScoreVector score_vector(std::span<const double> x) const = 0;
  virtual std::size_t class_count() const = 0;
};

struct RandomProjectionConfig {
  std::size_t dim = 2048;  // projected width D
  double ridge = 1.0;      // rho
  std::uint64_t seed = 0;

  void validate(std::size_t input_dim) const;
};

/// Ridge readout over h = max(0, R^T x) with a frozen Gaussian projection R.
/// Gram = sum h h^T and per-class target sums are plain running sums, so
/// the fit does not depend on how samples are batched.
class RandomProjectionScorer final : public OtsScorer {
 public:
  RandomProjectionScorer(std::size_t input_dim, RandomProjectionConfig config);

  void fit_base(const Matrix& features, std::span<const std::size_t> labels,
                std::size_t classes) override;
  void fit_increment(const Matrix& features, std::span<const std::size_t> labels,
                     std::size_t new_classes, const OtsCalibration* calibration) override;
  ScoreVector score_vector(std::span<const double> x) const override;
  std::size_t class_count() const override { return counts_.size(); }

  /// Adds samples to the running sums without re-solving. Labels may
  /// introduce new classes, up to `classes` in total.
  void accumulate(const Matrix& features, std::span<const std::size_t> labels,
                  std::size_t classes);
  /// readout = (Gram + rho I)^{-1} targets. Throws ComputationError when
  /// the system is not positive definite.
  void solve();

  Vector project(std::span<const double> x) const;
  Vector raw_scores(std::span<const double> x) const;

  const Matrix& projection() const noexcept { return projection_; }
  const Matrix& gram() const noexcept { return gram_; }
  const Matrix& targets() const noexcept { return targets_; }   // C x D (columns of T as rows)
  const Matrix& readout() const noexcept { return readout_; }   // D x C

 private:
  RandomProjectionConfig config_;
  Matrix projection_;  // d x D
  Matrix gram_;        // D x D
  Matrix class_sums_;  // C x D
  std::vector<double> counts_;
  Matrix targets_;     // C x D
  Matrix readout_;     // D x C
  std::size_t base_classes_ = 0;
};

/// s_sa + weight * s_ots. Throws InputError on a length mismatch.
Vector soft_vote(std::span<const double> sa, std::span<const double> ots, double weight = 1.0);

/// Argmax, ties to the lowest index. Throws InputError on an empty vector.
std::size_t predict(std::span<const double> scores);

// ---------------------------------------------------------------------------
// Protocol

struct ComponentToggles {
  bool mixture_losses = true;  // MoP losses during base adaptation
  bool calibration = true;     // n+1 calibrated prototypes per new class
  bool voting = true;          // soft vote with the off-the-shelf scorer

  /// "B1" .. "B4": B1 is plain mean prototypes with Mahalanobis scoring,
  /// each later preset adds one component.
  static ComponentToggles preset(const std::string& name);
  std::string preset_name() const;  // "B1".."B4", or "custom"

  friend bool operator==(const ComponentToggles&, const ComponentToggles&) = default;
};

struct ProtocolConfig {
  TrainConfig train;
  CalibrationParams calibration;
  RandomProjectionConfig ots;
  ComponentToggles toggles;
  double vote_weight = 1.0;
  std::uint64_t seed = 0;   // shot sampling
  std::size_t threads = 1;  // test-set scoring

  void validate() const;
};

struct SessionRecord {
  std::size_t session = 0;
  std::vector<std::uint32_t> seen_classes;  // index -> class id
  std::vector<std::uint32_t> truth;         // per test sample
  std::vector<std::uint32_t> predicted;
  std::vector<std::size_t> confusion;       // seen x seen, row = truth
  std::size_t correct = 0;
  double accuracy = 0.0;                    // percent
  std::size_t degenerate_scores = 0;

  std::size_t test_samples() const noexcept { return truth.size(); }
};

struct MetricPair {
  double a_last = 0.0;
  double a_inc = 0.0;
};

struct SessionResult {
  std::vector<SessionRecord> sessions;
  MetricPair metrics;
  double alpha = 0.0;
  double lambda = 0.0;
  double base_train_accuracy = 0.0;
  std::vector<std::string> warnings;
};

/// A_last = last entry, A_inc = mean. Throws InputError when empty.
MetricPair session_metrics(std::span<const double> accuracies);

/// Arithmetic means over runs. Throws InputError when empty.
MetricPair macro_metrics(std::span<const MetricPair> runs);

/// Percent correct recomputed from stored predictions.
double recompute_accuracy(const SessionRecord& record);

using SessionCallback = std::function<void(const SessionRecord&)>;

/// Runs every session of `plan` over `records`: adapt on the base session
/// (or reuse `pretrained`), freeze, then for each session build and
/// calibrate the new classes and score the cumulative test set.
/// `on_session` fires after each session is evaluated.
SessionResult run_protocol(std::span<const LabeledEmbedding> records, const SessionPlan& plan,
                           const ProtocolConfig& config, const BottleneckHead* pretrained = nullptr,
                           const SessionCallback& on_session = {});

}  // namespace bamp
