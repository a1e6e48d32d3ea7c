#pragma once

// Trainable bottleneck adapter plus linear classification head over frozen
// backbone features:
//
//   a = W_down^T x          (r)
//   h = act(a)
//   u = x + W_up^T h        (d; the projection chain alone when residual is off)
//   z = u / |u|             hyperspherical embedding
//   logits = W_cls^T z      (C)

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bamp/hypersphere.hpp"
#include "bamp/matrix.hpp"

namespace bamp {

enum class Activation : std::uint8_t { relu = 0, gelu = 1 };

const char* to_string(Activation activation);
Activation parse_activation(const std::string& text);

struct BottleneckHead {
  Matrix down;        // d x r
  Matrix up;          // r x d
  Matrix classifier;  // d x C
  Activation activation = Activation::gelu;
  bool residual = true;

  std::size_t input_dim() const noexcept { return down.rows(); }
  std::size_t rank() const noexcept { return down.cols(); }
  std::size_t class_count() const noexcept { return classifier.cols(); }

  /// Down-projection ~ N(0, 1/d), classifier ~ N(0, 0.01^2). With residual
  /// on, the up-projection starts at zero so the adapter begins as identity;
  /// otherwise it is drawn ~ N(0, 1/r).
  static BottleneckHead initialize(std::size_t dim, std::size_t rank, std::size_t classes,
                                   std::uint64_t seed, Activation activation = Activation::gelu,
                                   bool residual = true);

  /// Parameter blocks in a fixed order: down, up, classifier.
  std::vector<Matrix*> parameters() { return {&down, &up, &classifier}; }
  std::vector<const Matrix*> parameters() const { return {&down, &up, &classifier}; }

  friend bool operator==(const BottleneckHead&, const BottleneckHead&) = default;
};

/// Intermediate values of one forward pass, kept for backpropagation.
struct HeadForward {
  Vector pre_activation;  // a
  Vector hidden;          // h
  Vector adapted;         // u
  Vector embedding;       // z
  double adapted_norm = 0.0;
  Vector logits;
};

HeadForward forward(const BottleneckHead& head, std::span<const double> x);

/// Adapter output u, the raw (unnormalized) feature view.
Vector adapt(const BottleneckHead& head, std::span<const double> x);

/// z = normalize(adapter(x)). Throws InputError if the adapter output is zero.
UnitVector forward_embed(const BottleneckHead& head, std::span<const double> x);

/// Gradient accumulators shaped like the head's parameters.
struct HeadGradients {
  Matrix down;
  Matrix up;
  Matrix classifier;

  explicit HeadGradients(const BottleneckHead& head)
      : down(head.down.rows(), head.down.cols()),
        up(head.up.rows(), head.up.cols()),
        classifier(head.classifier.rows(), head.classifier.cols()) {}

  std::vector<Matrix*> blocks() { return {&down, &up, &classifier}; }
};

/// Accumulates dL/dtheta for one sample given dL/dz (treating z as a free
/// vector in R^d) and dL/dlogits. Either span may be empty to mean zero.
void backward(const BottleneckHead& head, std::span<const double> x, const HeadForward& cache,
              std::span<const double> grad_embedding, std::span<const double> grad_logits,
              HeadGradients& grads);

double activate(Activation activation, double a);
double activate_derivative(Activation activation, double a);

/// Read-only view over an adapted head, handed out after base training.
class FrozenEmbedding {
 public:
  explicit FrozenEmbedding(BottleneckHead head) : head_(std::move(head)) {}

  /// phi*(x): adapter output in feature space (unnormalized).
  Vector features(std::span<const double> x) const { return adapt(head_, x); }
  Vector features(std::span<const float> x) const;
  /// Hyperspherical embedding z.
  UnitVector embed(std::span<const double> x) const { return forward_embed(head_, x); }

  const BottleneckHead& head() const noexcept { return head_; }
  std::size_t input_dim() const noexcept { return head_.input_dim(); }

 private:
  BottleneckHead head_;
};

Vector to_double(std::span<const float> values);

}  // namespace bamp
