#include "bamp/statistical_analogy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bamp/errors.hpp"
#include "bamp/hypersphere.hpp"
#include "bamp/kernels.hpp"
#include "bamp/linalg.hpp"

namespace bamp {

void CalibrationParams::validate() const {
  if (!(tau_cal > 0.0)) throw InputError("calibration: tau_cal must be > 0");
  if (!(beta >= 0.0 && beta <= 1.0)) throw InputError("calibration: beta must lie in [0, 1]");
  if (!(eta > 0.0)) throw InputError("calibration: eta must be > 0");
  if (!(gamma > 0.0)) throw InputError("calibration: gamma must be > 0");
}

NewClassPrototypes build_new_class_prototypes(std::uint32_t class_id, const Matrix& shots) {
  if (shots.rows() == 0) {
    throw InputError("build_new_class_prototypes: class " + std::to_string(class_id) +
                     " has no shots");
  }
  NewClassPrototypes out;
  out.class_id = class_id;
  out.prototypes = Matrix(0, shots.cols());
  out.prototypes.append_row(linalg::mean_rows(shots));
  for (std::size_t i = 0; i < shots.rows(); ++i) out.prototypes.append_row(shots.row(i));
  out.shot_covariance = linalg::covariance_rows(shots);
  return out;
}

double similarity(std::span<const double> base_mean, std::span<const double> prototype,
                  double tau_cal) {
  if (base_mean.size() != prototype.size()) throw InputError("similarity: dimension mismatch");
  const double na = std::sqrt(kernels::dot(base_mean, base_mean));
  const double nb = std::sqrt(kernels::dot(prototype, prototype));
  if (na == 0.0 || nb == 0.0) throw InputError("similarity: zero vector");
  return kernels::dot(base_mean, prototype) / (na * nb) * tau_cal;
}

Vector analogy_weights(std::span<const double> similarities) {
  if (similarities.empty()) throw InputError("analogy_weights: no base classes");
  Vector w(similarities.begin(), similarities.end());
  softmax_inplace(w);
  return w;
}

Vector analogy_weights_for(std::span<const double> prototype, const Matrix& base_means,
                           double tau_cal) {
  Vector sims(base_means.rows());
  for (std::size_t b = 0; b < base_means.rows(); ++b) {
    sims[b] = similarity(base_means.row(b), prototype, tau_cal);
  }
  return analogy_weights(sims);
}

Vector calibrate_mean(std::span<const double> prototype, const Matrix& base_means,
                      std::span<const double> weights, double beta) {
  if (weights.size() != base_means.rows() || base_means.cols() != prototype.size()) {
    throw InputError("calibrate_mean: dimension mismatch");
  }
  if (beta == 1.0) return Vector(prototype.begin(), prototype.end());
  Vector blended(prototype.size(), 0.0);
  for (std::size_t b = 0; b < weights.size(); ++b) kernels::axpy(weights[b], base_means.row(b), blended);
  Vector out(prototype.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = beta * prototype[i] + (1.0 - beta) * blended[i];
  }
  return out;
}

Matrix calibrate_covariance(const Matrix& covariance, std::span<const Matrix> base_covariances,
                            std::span<const double> weights, double eta) {
  if (weights.size() != base_covariances.size()) {
    throw InputError("calibrate_covariance: weight count mismatch");
  }
  Matrix out = covariance;
  for (std::size_t b = 0; b < weights.size(); ++b) {
    const Matrix& base = base_covariances[b];
    if (base.rows() != out.rows() || base.cols() != out.cols()) {
      throw InputError("calibrate_covariance: dimension mismatch");
    }
    kernels::axpy(weights[b], base.storage(), out.storage());
  }
  for (double& v : out.storage()) v *= eta;
  return out;
}

ShrunkCorrelation shrink_and_normalize(const Matrix& covariance, double gamma) {
  const std::size_t d = covariance.rows();
  if (covariance.cols() != d) throw InputError("shrink_and_normalize: matrix is not square");
  if (!(gamma > 0.0)) throw InputError("shrink_and_normalize: gamma must be > 0");
  if (!linalg::all_finite(covariance.storage())) {
    throw InputError("shrink_and_normalize: non-finite covariance entry");
  }
  Vector scale(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double diag = covariance(i, i) + gamma;
    if (!(diag > 0.0)) throw ComputationError("shrink_and_normalize: non-positive variance");
    scale[i] = 1.0 / std::sqrt(diag);
  }
  ShrunkCorrelation out;
  out.correlation = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    out.correlation(i, i) = 1.0;
    for (std::size_t j = i + 1; j < d; ++j) {
      const double v = 0.5 * (covariance(i, j) + covariance(j, i)) * scale[i] * scale[j];
      out.correlation(i, j) = v;
      out.correlation(j, i) = v;
    }
  }
  out.inverse = linalg::spd_inverse(out.correlation);
  return out;
}

double mahalanobis(std::span<const double> x, std::span<const double> mean, const Matrix& inverse) {
  const std::size_t d = x.size();
  if (mean.size() != d || inverse.rows() != d || inverse.cols() != d) {
    throw InputError("mahalanobis: dimension mismatch");
  }
  Vector diff(d);
  for (std::size_t i = 0; i < d; ++i) diff[i] = x[i] - mean[i];
  return std::max(0.0, kernels::active_kernels().quadratic_form(inverse.data(), diff.data(), d));
}

ClassStatistics base_class_statistics(std::uint32_t class_id, std::span<const double> mean,
                                      const Matrix& covariance, double gamma) {
  ClassStatistics stats;
  stats.class_id = class_id;
  stats.is_base = true;
  stats.means = Matrix(0, mean.size());
  stats.means.append_row(mean);
  stats.metrics.push_back(shrink_and_normalize(covariance, gamma));
  stats.metric_of.push_back(0);
  return stats;
}

ClassStatistics new_class_statistics(const NewClassPrototypes& prototypes,
                                     const BaseStatistics& base, const CalibrationParams& params,
                                     bool calibrate) {
  ClassStatistics stats;
  stats.class_id = prototypes.class_id;
  stats.means = Matrix(0, prototypes.prototypes.cols());
  if (!calibrate) {
    stats.means.append_row(prototypes.prototypes.row(0));
    stats.metrics.push_back(shrink_and_normalize(prototypes.shot_covariance, params.gamma));
    stats.metric_of.push_back(0);
    return stats;
  }
  if (base.means.rows() == 0 || base.covariances.size() != base.means.rows()) {
    throw InputError("new_class_statistics: calibration needs base means and covariances");
  }
  for (std::size_t k = 0; k < prototypes.prototypes.rows(); ++k) {
    const auto p = prototypes.prototypes.row(k);
    const Vector w = analogy_weights_for(p, base.means, params.tau_cal);
    stats.means.append_row(calibrate_mean(p, base.means, w, params.beta));
    const Matrix cov =
        calibrate_covariance(prototypes.shot_covariance, base.covariances, w, params.eta);
    stats.metrics.push_back(shrink_and_normalize(cov, params.gamma));
    stats.metric_of.push_back(k);
  }
  return stats;
}

double min_distance(std::span<const double> x, const ClassStatistics& stats) {
  if (stats.prototype_count() == 0) throw InputError("sa_score: class without prototypes");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < stats.prototype_count(); ++k) {
    best = std::min(best, mahalanobis(x, stats.means.row(k), stats.metrics[stats.metric_of[k]].inverse));
  }
  return best;
}

double sa_score(std::span<const double> x, const ClassStatistics& stats) {
  return std::exp(-min_distance(x, stats));
}

ScoreVector min_max_normalize(std::span<const double> raw) {
  if (raw.empty()) throw InputError("min_max_normalize: empty score vector");
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  ScoreVector out;
  out.scores.assign(raw.size(), 0.0);
  const double range = *hi - *lo;
  if (!(range > 0.0)) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < raw.size(); ++i) out.scores[i] = (raw[i] - *lo) / range;
  return out;
}

ScoreVector sa_score_vector(std::span<const double> x, std::span<const ClassStatistics> classes) {
  if (classes.empty()) throw InputError("sa_score_vector: no classes");
  Vector distance(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) distance[c] = min_distance(x, classes[c]);
  const double best = *std::min_element(distance.begin(), distance.end());
  Vector ratio(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) ratio[c] = std::exp(-(distance[c] - best));
  const double lowest = *std::min_element(ratio.begin(), ratio.end());
  ScoreVector out;
  out.scores.assign(classes.size(), 0.0);
  if (!(lowest < 1.0)) {
    out.degenerate = true;
    return out;
  }
  const double range = 1.0 - lowest;
  for (std::size_t c = 0; c < classes.size(); ++c) out.scores[c] = (ratio[c] - lowest) / range;
  return out;
}

}  // namespace bamp
