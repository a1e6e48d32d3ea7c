#include "bamp/hypersphere.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bamp/errors.hpp"
#include "bamp/kernels.hpp"

namespace bamp {

UnitVector UnitVector::normalize(std::span<const double> v) {
  const double norm = std::sqrt(kernels::dot(v, v));
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw InputError("normalize: zero or non-finite vector");
  }
  Vector out(v.begin(), v.end());
  const double inv = 1.0 / norm;
  for (double& x : out) x *= inv;
  return UnitVector(std::move(out));
}

UnitVector UnitVector::from_normalized(Vector v) {
  const double norm = std::sqrt(kernels::dot(v, v));
  if (!(std::abs(norm - 1.0) <= 1e-9)) throw InputError("UnitVector: input is not unit-norm");
  return UnitVector(std::move(v));
}

double vmf_log_density_unnorm(const UnitVector& z, const UnitVector& mean, double concentration) {
  if (concentration < 0.0) throw InputError("vmf_log_density_unnorm: concentration must be >= 0");
  if (z.size() != mean.size()) throw InputError("vmf_log_density_unnorm: dimension mismatch");
  return concentration * kernels::dot(z.components(), mean.components());
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double peak = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(peak)) return peak;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

void softmax_inplace(std::span<double> values) {
  if (values.empty()) return;
  const double peak = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double& v : values) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (double& v : values) v /= sum;
}

std::vector<double> mixture_class_posterior(std::span<const double> z,
                                            std::span<const Matrix> prototypes,
                                            std::span<const std::vector<double>> weights,
                                            double tau) {
  if (!(tau > 0.0)) throw InputError("mixture_class_posterior: tau must be > 0");
  if (prototypes.empty() || prototypes.size() != weights.size()) {
    throw InputError("mixture_class_posterior: prototype/weight sets missing or mismatched");
  }
  std::vector<double> class_log_mass(prototypes.size());
  std::vector<double> terms;
  for (std::size_t c = 0; c < prototypes.size(); ++c) {
    const Matrix& protos = prototypes[c];
    if (protos.rows() == 0) throw InputError("mixture_class_posterior: empty prototype set");
    if (weights[c].size() != protos.rows() || protos.cols() != z.size()) {
      throw InputError("mixture_class_posterior: dimension mismatch");
    }
    terms.clear();
    for (std::size_t k = 0; k < protos.rows(); ++k) {
      if (weights[c][k] <= 0.0) continue;
      terms.push_back(std::log(weights[c][k]) + kernels::dot(protos.row(k), z) / tau);
    }
    class_log_mass[c] = log_sum_exp(terms);
  }
  softmax_inplace(class_log_mass);
  return class_log_mass;
}

std::vector<double> assignment_weights(std::span<const double> z, const Matrix& prototypes,
                                       double tau_a) {
  if (prototypes.rows() == 0) throw InputError("assignment_weights: no prototypes");
  if (!(tau_a > 0.0)) throw InputError("assignment_weights: tau_a must be > 0");
  std::vector<double> logits(prototypes.rows());
  for (std::size_t k = 0; k < prototypes.rows(); ++k) {
    logits[k] = kernels::dot(prototypes.row(k), z) / tau_a;
  }
  softmax_inplace(logits);
  return logits;
}

}  // namespace bamp
