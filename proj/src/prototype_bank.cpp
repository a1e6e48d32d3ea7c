#include "bamp/prototype_bank.hpp"

#include <algorithm>
#include <cmath>

#include "bamp/errors.hpp"
#include "bamp/hypersphere.hpp"
#include "bamp/kernels.hpp"
#include "bamp/random.hpp"

namespace bamp {

std::size_t PrototypeBank::total_prototypes() const noexcept {
  std::size_t total = 0;
  for (const auto& p : prototypes) total += p.rows();
  return total;
}

Assignments compute_assignments(const Matrix& embeddings, const PrototypeBank& bank,
                                double tau_a) {
  Assignments out(embeddings.rows());
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    out[i].reserve(bank.class_count());
    for (const Matrix& protos : bank.prototypes) {
      out[i].push_back(assignment_weights(embeddings.row(i), protos, tau_a));
    }
  }
  return out;
}

PrototypeBank initialize_bank(const Matrix& class_means, std::size_t prototypes_per_class,
                              double noise, double momentum, std::uint64_t seed) {
  if (prototypes_per_class == 0) throw InputError("initialize_bank: need at least one prototype");
  PrototypeBank bank;
  bank.momentum = momentum;
  Rng rng(mix_seed(seed, 0x70726f74ULL));
  const std::size_t d = class_means.cols();
  Vector draft(d);
  for (std::size_t c = 0; c < class_means.rows(); ++c) {
    Matrix protos(prototypes_per_class, d);
    for (std::size_t k = 0; k < prototypes_per_class; ++k) {
      for (std::size_t i = 0; i < d; ++i) draft[i] = class_means(c, i) + noise * rng.normal();
      const UnitVector unit = UnitVector::normalize(draft);
      std::copy(unit.vector().begin(), unit.vector().end(), protos.row(k).begin());
    }
    bank.prototypes.push_back(std::move(protos));
    bank.mass.emplace_back(prototypes_per_class, 0.0);
  }
  return bank;
}

PrototypeBank update_prototypes_ema(const PrototypeBank& bank, const Matrix& embeddings,
                                    std::span<const std::size_t> labels,
                                    const Assignments& assignments, double momentum,
                                    EmaTrace* trace) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InputError("update_prototypes_ema: momentum must lie in [0, 1)");
  }
  PrototypeBank next = bank;
  next.momentum = momentum;
  const std::size_t d = bank.dim();
  const auto& k = kernels::active_kernels();

  // Weighted sums of same-class embeddings per prototype.
  std::vector<Matrix> sums;
  std::vector<std::vector<double>> batch_mass;
  for (const Matrix& protos : bank.prototypes) {
    sums.emplace_back(protos.rows(), d);
    batch_mass.emplace_back(protos.rows(), 0.0);
  }
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    const std::size_t c = labels[i];
    const auto& weights = assignments[i][c];
    for (std::size_t p = 0; p < weights.size(); ++p) {
      if (weights[p] == 0.0) continue;
      batch_mass[c][p] += weights[p];
      k.axpy(weights[p], embeddings.row(i).data(), sums[c].row(p).data(), d);
    }
  }

  if (trace != nullptr) {
    trace->batch_mass = batch_mass;
    trace->pre_norm.assign(bank.class_count(), {});
  }
  Vector blended(d);
  for (std::size_t c = 0; c < bank.class_count(); ++c) {
    if (trace != nullptr) trace->pre_norm[c].assign(bank.prototypes[c].rows(), 0.0);
    for (std::size_t p = 0; p < bank.prototypes[c].rows(); ++p) {
      const double m = batch_mass[c][p];
      next.mass[c][p] += m;
      if (m <= 0.0) continue;
      const auto old = bank.prototypes[c].row(p);
      const auto sum = sums[c].row(p);
      for (std::size_t i = 0; i < d; ++i) {
        blended[i] = momentum * old[i] + (1.0 - momentum) * sum[i] / m;
      }
      const double norm = std::sqrt(k.dot(blended.data(), blended.data(), d));
      if (!(norm > 0.0)) throw ComputationError("update_prototypes_ema: prototype collapsed to zero");
      auto target = next.prototypes[c].row(p);
      for (std::size_t i = 0; i < d; ++i) target[i] = blended[i] / norm;
      if (trace != nullptr) trace->pre_norm[c][p] = norm;
    }
  }
  return next;
}

void backpropagate_ema(const PrototypeBank& updated, const Matrix& embeddings,
                       std::span<const std::size_t> labels, const Assignments& assignments,
                       double momentum, const EmaTrace& trace,
                       std::span<const Matrix> grad_prototypes, Matrix& grad_embeddings) {
  const std::size_t d = updated.dim();
  const auto& k = kernels::active_kernels();
  // dL/dv for v = mu p + (1 - mu) m, p_new = v / |v|.
  std::vector<Matrix> grad_blend;
  for (std::size_t c = 0; c < updated.class_count(); ++c) {
    Matrix g(updated.prototypes[c].rows(), d);
    for (std::size_t p = 0; p < g.rows(); ++p) {
      if (trace.batch_mass[c][p] <= 0.0) continue;
      const auto unit = updated.prototypes[c].row(p);
      const auto upstream = grad_prototypes[c].row(p);
      const double radial = k.dot(unit.data(), upstream.data(), d);
      const double norm = trace.pre_norm[c][p];
      auto out = g.row(p);
      for (std::size_t i = 0; i < d; ++i) out[i] = (upstream[i] - unit[i] * radial) / norm;
    }
    grad_blend.push_back(std::move(g));
  }
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    const std::size_t c = labels[i];
    const auto& weights = assignments[i][c];
    for (std::size_t p = 0; p < weights.size(); ++p) {
      const double m = trace.batch_mass[c][p];
      if (weights[p] == 0.0 || m <= 0.0) continue;
      k.axpy((1.0 - momentum) * weights[p] / m, grad_blend[c].row(p).data(),
             grad_embeddings.row(i).data(), d);
    }
  }
}

PrototypeBank prune_prototypes(const PrototypeBank& bank, double threshold) {
  if (threshold < 0.0) throw InputError("prune_prototypes: threshold must be >= 0");
  if (threshold == 0.0) return bank;
  PrototypeBank pruned;
  pruned.momentum = bank.momentum;
  for (std::size_t c = 0; c < bank.class_count(); ++c) {
    const auto& mass = bank.mass[c];
    double total = 0.0;
    for (double m : mass) total += m;
    if (total <= 0.0) {
      pruned.prototypes.push_back(bank.prototypes[c]);
      pruned.mass.push_back(mass);
      continue;
    }
    const auto best = static_cast<std::size_t>(
        std::distance(mass.begin(), std::max_element(mass.begin(), mass.end())));
    Matrix kept;
    std::vector<double> kept_mass;
    for (std::size_t p = 0; p < mass.size(); ++p) {
      const double share = mass[p] / total;
      if (share >= threshold || p == best) {
        kept.append_row(bank.prototypes[c].row(p));
        kept_mass.push_back(mass[p]);
      }
    }
    pruned.prototypes.push_back(std::move(kept));
    pruned.mass.push_back(std::move(kept_mass));
  }
  return pruned;
}

}  // namespace bamp
