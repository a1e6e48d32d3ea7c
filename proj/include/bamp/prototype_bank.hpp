#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bamp/matrix.hpp"

namespace bamp {

/// Per-class mixture-of-vMF prototypes used during base training.
/// prototypes[c] holds class c's unit-norm prototypes as rows; mass[c][k]
/// accumulates the assignment weight prototype k has received.
struct PrototypeBank {
  std::vector<Matrix> prototypes;
  std::vector<std::vector<double>> mass;
  double momentum = 0.99;

  std::size_t class_count() const noexcept { return prototypes.size(); }
  std::size_t dim() const noexcept { return prototypes.empty() ? 0 : prototypes.front().cols(); }
  std::size_t total_prototypes() const noexcept;

  friend bool operator==(const PrototypeBank&, const PrototypeBank&) = default;
};

/// Assignment weights [sample][class][prototype].
using Assignments = std::vector<std::vector<std::vector<double>>>;

/// Softmax-over-cosine assignments of every sample to every class's prototypes.
Assignments compute_assignments(const Matrix& embeddings, const PrototypeBank& bank, double tau_a);

/// K prototypes per class: normalize(class_mean + N(0, noise^2 I)).
/// `class_means` rows need not be unit-norm.
PrototypeBank initialize_bank(const Matrix& class_means, std::size_t prototypes_per_class,
                              double noise, double momentum, std::uint64_t seed);

/// Per-prototype quantities the EMA step produces, needed to backpropagate
/// through it.
struct EmaTrace {
  // [class][prototype]: total batch mass and |mu p + (1 - mu) m| before normalization.
  std::vector<std::vector<double>> batch_mass;
  std::vector<std::vector<double>> pre_norm;
};

/// p_k^c <- normalize(mu p_k^c + (1 - mu) m_k^c), m_k^c being the
/// assignment-weighted mean of class-c batch embeddings. Prototypes with
/// zero batch mass are left unchanged. Mass accumulators grow by the batch mass.
/// Requires 0 <= momentum < 1.
PrototypeBank update_prototypes_ema(const PrototypeBank& bank, const Matrix& embeddings,
                                    std::span<const std::size_t> labels,
                                    const Assignments& assignments, double momentum,
                                    EmaTrace* trace = nullptr);

/// Given dL/dp for the updated prototypes, accumulates dL/dz into grad_embeddings.
void backpropagate_ema(const PrototypeBank& updated, const Matrix& embeddings,
                       std::span<const std::size_t> labels, const Assignments& assignments,
                       double momentum, const EmaTrace& trace,
                       std::span<const Matrix> grad_prototypes, Matrix& grad_embeddings);

/// Removes prototypes whose share of their class's cumulative mass is below
/// `threshold`. The highest-mass prototype of each class always survives.
PrototypeBank prune_prototypes(const PrototypeBank& bank, double threshold);

}  // namespace bamp
