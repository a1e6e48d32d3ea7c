#pragma once

// Seeded synthetic embedding sets: well-separated class clusters, each made
// of a few sub-clusters ("modes") around a class center on a sphere.

#include <cstdint>
#include <string>
#include <vector>

#include "bamp/embedding_store.hpp"

namespace bamp {

struct SyntheticSpec {
  std::size_t classes = 20;
  std::size_t dim = 16;
  std::size_t train_per_class = 60;
  std::size_t test_per_class = 40;
  std::size_t modes = 3;        // sub-clusters per class
  double separation = 60.0;     // radius of the sphere holding class centers
  double mode_spread = 20.0;    // distance of each mode from its class center
  double noise = 10.0;          // per-coordinate standard deviation around a mode
  /// Within-class noise shares one covariance across classes: a random
  /// rotation of variances spread geometrically over [noise^2 / a, noise^2 * a].
  /// 1 gives isotropic noise.
  double anisotropy = 30.0;
  std::uint64_t seed = 0;
  std::string name = "synthetic";

  /// Throws InputError on zero counts or negative scales.
  void validate() const;
};

/// Records grouped by class (ascending id), training records before test
/// records within each class.
std::vector<LabeledEmbedding> generate_synthetic(const SyntheticSpec& spec);

/// "class_000", "class_001", ...
std::vector<std::string> synthetic_class_names(std::size_t classes);

}  // namespace bamp
