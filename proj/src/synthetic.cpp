#include "bamp/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "bamp/errors.hpp"
#include "bamp/random.hpp"

namespace bamp {

namespace {

std::vector<double> random_direction(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

// Rows are the columns of Q scaled by the per-axis standard deviation, so
// noise = sum_j g_j * row_j.
std::vector<std::vector<double>> noise_basis(const SyntheticSpec& spec) {
  Rng rng(mix_seed(spec.seed, 0x6e6f697365ULL));
  std::vector<std::vector<double>> basis;
  for (std::size_t j = 0; j < spec.dim; ++j) {
    auto v = random_direction(rng, spec.dim);
    // Gram-Schmidt against the axes drawn so far.
    for (const auto& u : basis) {
      double proj = 0.0;
      for (std::size_t i = 0; i < spec.dim; ++i) proj += u[i] * v[i];
      for (std::size_t i = 0; i < spec.dim; ++i) v[i] -= proj * u[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  for (std::size_t j = 0; j < spec.dim; ++j) {
    const double t = spec.dim == 1 ? 0.0 : 2.0 * static_cast<double>(j) / static_cast<double>(spec.dim - 1) - 1.0;
    const double sd = spec.noise * std::pow(spec.anisotropy, 0.5 * t);
    for (double& x : basis[j]) x *= sd;
  }
  return basis;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (classes < 2) throw InputError("synth: classes must be >= 2");
  if (dim == 0) throw InputError("synth: dim must be >= 1");
  if (train_per_class == 0 || test_per_class == 0) {
    throw InputError("synth: train and test counts per class must be >= 1");
  }
  if (modes == 0) throw InputError("synth: modes must be >= 1");
  if (!(separation > 0.0) || !(mode_spread >= 0.0) || !(noise >= 0.0)) {
    throw InputError("synth: separation must be > 0, mode_spread and noise >= 0");
  }
  if (!(anisotropy >= 1.0)) throw InputError("synth: anisotropy must be >= 1");
}

std::vector<LabeledEmbedding> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<LabeledEmbedding> records;
  records.reserve(spec.classes * (spec.train_per_class + spec.test_per_class));
  const auto basis = noise_basis(spec);
  std::vector<double> sample(spec.dim);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    Rng rng(mix_seed(spec.seed, c));
    const auto center = random_direction(rng, spec.dim);
    std::vector<std::vector<double>> modes;
    for (std::size_t m = 0; m < spec.modes; ++m) {
      auto offset = random_direction(rng, spec.dim);
      for (std::size_t i = 0; i < spec.dim; ++i) {
        offset[i] = spec.separation * center[i] + spec.mode_spread * offset[i];
      }
      modes.push_back(std::move(offset));
    }
    for (Split split : {Split::train, Split::test}) {
      const std::size_t count = split == Split::train ? spec.train_per_class : spec.test_per_class;
      for (std::size_t n = 0; n < count; ++n) {
        const auto& mode = modes[rng.below(modes.size())];
        LabeledEmbedding record;
        record.class_id = static_cast<std::uint32_t>(c);
        record.split = split;
        sample = mode;
        for (const auto& axis : basis) {
          const double g = rng.normal();
          for (std::size_t i = 0; i < spec.dim; ++i) sample[i] += g * axis[i];
        }
        record.vector.assign(sample.begin(), sample.end());
        records.push_back(std::move(record));
      }
    }
  }
  return records;
}

std::vector<std::string> synthetic_class_names(std::size_t classes) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "class_%03zu", c);
    names.emplace_back(buffer);
  }
  return names;
}

}  // namespace bamp
