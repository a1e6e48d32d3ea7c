#pragma once

// Test-time class statistics: n+1 prototypes per few-shot class, mean and
// covariance calibration against the base classes, shrunk-correlation
// Mahalanobis scoring and min-max normalized score vectors.
//
// All vectors here live in the raw adapter space phi*(x).

#include <cstdint>
#include <span>
#include <vector>

#include "bamp/matrix.hpp"

namespace bamp {

struct CalibrationParams {
  double tau_cal = 16.0;  // similarity sharpness
  double beta = 0.9;      // mean calibration strength (0.75 for CIFAR100-style runs)
  double eta = 1.0;       // covariance scale
  double gamma = 500.0;   // shrinkage

  void validate() const;
};

/// Rows: p_0 (shot mean), then one row per shot in input order.
struct NewClassPrototypes {
  std::uint32_t class_id = 0;
  Matrix prototypes;       // (n + 1) x d
  Matrix shot_covariance;  // d x d, unbiased; zero for n == 1
};

/// Throws InputError on an empty shot set.
NewClassPrototypes build_new_class_prototypes(std::uint32_t class_id, const Matrix& shots);

/// cos(a, b) * tau_cal. Throws InputError on a zero vector.
double similarity(std::span<const double> base_mean, std::span<const double> prototype,
                  double tau_cal);

/// Softmax over base-class similarities.
Vector analogy_weights(std::span<const double> similarities);

/// Weights of one prototype over all base means (rows of `base_means`).
Vector analogy_weights_for(std::span<const double> prototype, const Matrix& base_means,
                           double tau_cal);

/// beta * p + (1 - beta) * sum_b w_b base_b
Vector calibrate_mean(std::span<const double> prototype, const Matrix& base_means,
                      std::span<const double> weights, double beta);

/// eta * (cov + sum_b w_b base_cov_b)
Matrix calibrate_covariance(const Matrix& covariance, std::span<const Matrix> base_covariances,
                            std::span<const double> weights, double eta);

struct ShrunkCorrelation {
  Matrix correlation;  // N(cov + gamma I), unit diagonal
  Matrix inverse;
};

/// Throws InputError on non-finite entries or a non-positive gamma.
ShrunkCorrelation shrink_and_normalize(const Matrix& covariance, double gamma);

/// (x - mean)^T inverse (x - mean)
double mahalanobis(std::span<const double> x, std::span<const double> mean,
                   const Matrix& inverse);

/// Scoring statistics for one seen class. Every prototype row refers to one
/// of `metrics` through `metric_of`; uncalibrated classes share a single metric.
struct ClassStatistics {
  std::uint32_t class_id = 0;
  bool is_base = false;
  Matrix means;                         // calibrated prototype means, one per row
  std::vector<ShrunkCorrelation> metrics;
  std::vector<std::size_t> metric_of;   // per row of `means`

  std::size_t prototype_count() const noexcept { return means.rows(); }
};

/// A base class: its single mean prototype and its own covariance.
ClassStatistics base_class_statistics(std::uint32_t class_id, std::span<const double> mean,
                                      const Matrix& covariance, double gamma);

/// Base-session summary that new-class calibration draws on.
struct BaseStatistics {
  Matrix means;                     // B x d raw class means
  std::vector<Matrix> covariances;  // B x (d x d)
};

/// A few-shot class. With `calibrate` on, every one of the n+1 prototypes is
/// calibrated against `base`; otherwise the class keeps only its shot mean
/// and its shrunk shot covariance.
ClassStatistics new_class_statistics(const NewClassPrototypes& prototypes,
                                     const BaseStatistics& base, const CalibrationParams& params,
                                     bool calibrate);

/// Minimum Mahalanobis distance over the class's prototypes.
double min_distance(std::span<const double> x, const ClassStatistics& stats);

/// max_k exp(-D_M(x, p_k)); underflows to 0 for distant samples.
double sa_score(std::span<const double> x, const ClassStatistics& stats);

struct ScoreVector {
  Vector scores;
  bool degenerate = false;  // every raw score equal; scores are all zero
};

/// (raw - min) / (max - min), or all zeros with the degenerate flag.
ScoreVector min_max_normalize(std::span<const double> raw);

/// Min-max normalized sa scores over `classes`.
///
/// Evaluated from distances as r_c = exp(-(D_c - D_min)), which equals the
/// ratio score_c / max score, so the normalized values are unchanged while
/// exp(-D) for large distances no longer underflows.
ScoreVector sa_score_vector(std::span<const double> x, std::span<const ClassStatistics> classes);

}  // namespace bamp
