#pragma once

// Training objectives of the base-session adaptation, each with its
// analytic gradient:
//
//   L = L_CE + alpha * L_com + lambda * L_proto-contra

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "bamp/matrix.hpp"
#include "bamp/prototype_bank.hpp"

namespace bamp {

/// alpha = lambda = min(1, exp(-(20 / nbase - 1))).
std::pair<double, double> balance_weights(std::size_t base_class_count);

/// Cross-entropy of softmax(logits) against label, log-sum-exp stabilized.
double loss_ce(std::span<const double> logits, std::size_t label);

struct CrossEntropyResult {
  double value = 0.0;
  Matrix grad_logits;  // N x C, already divided by N
};

/// Batch mean cross-entropy; logits is N x C.
CrossEntropyResult loss_ce_batch(const Matrix& logits, std::span<const std::size_t> labels);

struct CompactResult {
  double value = 0.0;
  Matrix grad_embeddings;  // N x d, already divided by N
};

/// Mixture-likelihood compact loss:
///   -(1/N) sum_i log [ sum_k w_ik^{y_i} e^{<p_k^{y_i}, z_i>/tau} /
///                      sum_c sum_k w_ik^c e^{<p_k^c, z_i>/tau} ]
/// Assignments are constants; gradients flow to z only.
CompactResult loss_compact(const Matrix& embeddings, std::span<const std::size_t> labels,
                           const PrototypeBank& bank, const Assignments& assignments, double tau);

/// Which prototypes enter the contrastive denominator for anchor p_k^c.
enum class ContrastDenominator {
  other_classes,   // every prototype of every other class
  all_but_anchor,  // every prototype except the anchor itself
};

struct ProtoContrastResult {
  double value = 0.0;
  std::vector<Matrix> grad_prototypes;  // shaped like bank.prototypes
  std::size_t skipped_anchors = 0;      // anchors with an empty numerator or denominator
};

/// Prototype-level contrastive loss:
///   -(1/(CK)) sum_{c,k} log [ sum_{k' != k} e^{<p_k^c, p_k'^c>/tau} / sum_{denominator} e^{<p_k^c, p>/tau} ]
/// Anchors whose class has a single prototype (or with no negatives) have an
/// undefined term; they contribute 0 and are counted in skipped_anchors.
ProtoContrastResult loss_proto_contrastive(
    const PrototypeBank& bank, double tau,
    ContrastDenominator denominator = ContrastDenominator::other_classes);

}  // namespace bamp
