#include "bamp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bamp/errors.hpp"
#include "bamp/hypersphere.hpp"
#include "bamp/kernels.hpp"

namespace bamp {

std::pair<double, double> balance_weights(std::size_t base_class_count) {
  if (base_class_count == 0) throw InputError("balance_weights: nbase must be >= 1");
  const double nbase = static_cast<double>(base_class_count);
  const double weight = std::min(1.0, std::exp(-(20.0 / nbase - 1.0)));
  return {weight, weight};
}

double loss_ce(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw InputError("loss_ce: label out of range");
  return log_sum_exp(logits) - logits[label];
}

CrossEntropyResult loss_ce_batch(const Matrix& logits, std::span<const std::size_t> labels) {
  const std::size_t n = logits.rows();
  if (labels.size() != n) throw InputError("loss_ce_batch: label count mismatch");
  CrossEntropyResult result;
  result.grad_logits = Matrix(n, logits.cols());
  if (n == 0) return result;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    result.value += loss_ce(logits.row(i), labels[i]);
    auto grad = result.grad_logits.row(i);
    std::copy(logits.row(i).begin(), logits.row(i).end(), grad.begin());
    softmax_inplace(grad);
    grad[labels[i]] -= 1.0;
    for (double& g : grad) g *= inv_n;
  }
  result.value *= inv_n;
  return result;
}

CompactResult loss_compact(const Matrix& embeddings, std::span<const std::size_t> labels,
                           const PrototypeBank& bank, const Assignments& assignments, double tau) {
  if (!(tau > 0.0)) throw InputError("loss_compact: tau must be > 0");
  const std::size_t n = embeddings.rows();
  const std::size_t d = embeddings.cols();
  if (labels.size() != n || assignments.size() != n) {
    throw InputError("loss_compact: batch size mismatch");
  }
  CompactResult result;
  result.grad_embeddings = Matrix(n, d);
  if (n == 0) return result;
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto& k = kernels::active_kernels();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  // log-terms per (class, prototype), flattened.
  std::vector<double> all_terms;
  std::vector<double> own_terms;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = labels[i];
    const auto z = embeddings.row(i);
    all_terms.clear();
    for (std::size_t c = 0; c < bank.class_count(); ++c) {
      const Matrix& protos = bank.prototypes[c];
      for (std::size_t p = 0; p < protos.rows(); ++p) {
        const double w = assignments[i][c][p];
        all_terms.push_back(w > 0.0 ? std::log(w) + k.dot(protos.row(p).data(), z.data(), d) / tau
                                    : kNegInf);
      }
    }
    std::size_t offset = 0;
    for (std::size_t c = 0; c < y; ++c) offset += bank.prototypes[c].rows();
    const std::size_t own_count = bank.prototypes[y].rows();
    own_terms.assign(all_terms.begin() + static_cast<std::ptrdiff_t>(offset),
                     all_terms.begin() + static_cast<std::ptrdiff_t>(offset + own_count));

    const double log_denominator = log_sum_exp(all_terms);
    const double log_numerator = log_sum_exp(own_terms);
    result.value += log_denominator - log_numerator;

    // d/dz = (1/tau) [ sum_all q_ck p_ck - sum_own r_k p_k ]
    auto grad = result.grad_embeddings.row(i);
    std::size_t flat = 0;
    for (std::size_t c = 0; c < bank.class_count(); ++c) {
      const Matrix& protos = bank.prototypes[c];
      for (std::size_t p = 0; p < protos.rows(); ++p, ++flat) {
        if (all_terms[flat] == kNegInf) continue;
        double coeff = std::exp(all_terms[flat] - log_denominator);
        if (c == y) coeff -= std::exp(all_terms[flat] - log_numerator);
        k.axpy(coeff * inv_n / tau, protos.row(p).data(), grad.data(), d);
      }
    }
  }
  result.value *= inv_n;
  return result;
}

ProtoContrastResult loss_proto_contrastive(const PrototypeBank& bank, double tau,
                                           ContrastDenominator denominator) {
  if (!(tau > 0.0)) throw InputError("loss_proto_contrastive: tau must be > 0");
  ProtoContrastResult result;
  const std::size_t d = bank.dim();
  for (const Matrix& protos : bank.prototypes) result.grad_prototypes.emplace_back(protos.rows(), d);
  const std::size_t anchors = bank.total_prototypes();
  if (anchors == 0) return result;
  const double scale = 1.0 / static_cast<double>(anchors);
  const auto& k = kernels::active_kernels();

  struct Ref {
    std::size_t cls;
    std::size_t idx;
  };
  std::vector<Ref> refs;
  for (std::size_t c = 0; c < bank.class_count(); ++c) {
    for (std::size_t p = 0; p < bank.prototypes[c].rows(); ++p) refs.push_back({c, p});
  }

  std::vector<double> positives;
  std::vector<double> negatives;
  std::vector<Ref> pos_refs;
  std::vector<Ref> neg_refs;
  for (const Ref& anchor : refs) {
    const auto a = bank.prototypes[anchor.cls].row(anchor.idx);
    positives.clear();
    negatives.clear();
    pos_refs.clear();
    neg_refs.clear();
    for (const Ref& other : refs) {
      const bool same_class = other.cls == anchor.cls;
      const bool is_anchor = same_class && other.idx == anchor.idx;
      if (is_anchor) continue;
      const double s =
          k.dot(a.data(), bank.prototypes[other.cls].row(other.idx).data(), d) / tau;
      if (same_class) {
        positives.push_back(s);
        pos_refs.push_back(other);
      }
      if (!same_class || denominator == ContrastDenominator::all_but_anchor) {
        negatives.push_back(s);
        neg_refs.push_back(other);
      }
    }
    if (positives.empty() || negatives.empty()) {
      ++result.skipped_anchors;
      continue;
    }
    const double log_num = log_sum_exp(positives);
    const double log_den = log_sum_exp(negatives);
    result.value += scale * (log_den - log_num);

    // Each similarity s_ab = <p_a, p_b>/tau contributes coeff * p_b/tau to
    // dL/dp_a and coeff * p_a/tau to dL/dp_b.
    auto grad_anchor = result.grad_prototypes[anchor.cls].row(anchor.idx);
    auto apply = [&](const Ref& other, double coeff) {
      const auto b = bank.prototypes[other.cls].row(other.idx);
      k.axpy(coeff / tau, b.data(), grad_anchor.data(), d);
      k.axpy(coeff / tau, a.data(), result.grad_prototypes[other.cls].row(other.idx).data(), d);
    };
    for (std::size_t j = 0; j < positives.size(); ++j) {
      apply(pos_refs[j], -scale * std::exp(positives[j] - log_num));
    }
    for (std::size_t j = 0; j < negatives.size(); ++j) {
      apply(neg_refs[j], scale * std::exp(negatives[j] - log_den));
    }
  }
  return result;
}

}  // namespace bamp
