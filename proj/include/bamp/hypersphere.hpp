#pragma once

// Hyperspherical embedding math: normalization, unnormalized vMF
// log-densities, the mixture class posterior and sample-to-prototype
// assignment weights.
//
// The vMF normalizer Z_d(kappa) is never evaluated. Every consumer uses
// ratios in which it cancels, so log-densities are exposed unnormalized.

#include <span>
#include <vector>

#include "bamp/matrix.hpp"

namespace bamp {

/// Vector with unit Euclidean norm (within 1e-9).
class UnitVector {
 public:
  /// Throws InputError for zero or non-finite input.
  static UnitVector normalize(std::span<const double> v);
  /// Wraps an already-normalized vector; throws if its norm is off by more than 1e-9.
  static UnitVector from_normalized(Vector v);

  std::span<const double> components() const noexcept { return components_; }
  std::size_t size() const noexcept { return components_.size(); }
  double operator[](std::size_t i) const noexcept { return components_[i]; }
  const Vector& vector() const noexcept { return components_; }

 private:
  explicit UnitVector(Vector v) : components_(std::move(v)) {}
  Vector components_;
};

inline UnitVector normalize(std::span<const double> v) { return UnitVector::normalize(v); }

struct VmfParams {
  double concentration = 10.0;  // kappa >= 0
  double temperature() const noexcept { return concentration > 0.0 ? 1.0 / concentration : 0.0; }
  static VmfParams from_temperature(double tau) { return {1.0 / tau}; }
};

/// kappa <p, z>: the vMF log-density without log Z_d(kappa). Throws for kappa < 0.
double vmf_log_density_unnorm(const UnitVector& z, const UnitVector& mean, double concentration);

/// Posterior over classes for embedding z under per-class vMF mixtures:
///   p(c | z) = sum_k w_k^c exp(<p_k^c, z>/tau) / sum_j sum_k w_k^j exp(<p_k^j, z>/tau)
/// prototypes[c] holds class c's prototypes as rows; weights[c] its mixture weights.
/// Evaluated with log-sum-exp.
std::vector<double> mixture_class_posterior(std::span<const double> z,
                                            std::span<const Matrix> prototypes,
                                            std::span<const std::vector<double>> weights,
                                            double tau);

/// Softmax over cosine similarities <z, p_k> / tau_a (rows of `prototypes`).
std::vector<double> assignment_weights(std::span<const double> z, const Matrix& prototypes,
                                       double tau_a);

/// log(sum_i exp(values[i])), -inf for an empty span.
double log_sum_exp(std::span<const double> values);

/// In-place numerically stable softmax.
void softmax_inplace(std::span<double> values);

}  // namespace bamp
