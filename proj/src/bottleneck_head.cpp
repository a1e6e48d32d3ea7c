#include "bamp/bottleneck_head.hpp"

#include <cmath>
#include <numbers>

#include "bamp/errors.hpp"
#include "bamp/kernels.hpp"
#include "bamp/random.hpp"

namespace bamp {

namespace {

// tanh approximation of GELU.
constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

void fill_normal(Matrix& m, Rng& rng, double stddev) {
  for (double& v : m.storage()) v = stddev * rng.normal();
}

}  // namespace

const char* to_string(Activation activation) {
  return activation == Activation::relu ? "relu" : "gelu";
}

Activation parse_activation(const std::string& text) {
  if (text == "relu") return Activation::relu;
  if (text == "gelu") return Activation::gelu;
  throw InputError("unknown activation '" + text + "' (expected relu or gelu)");
}

double activate(Activation activation, double a) {
  if (activation == Activation::relu) return a > 0.0 ? a : 0.0;
  const double inner = kGeluScale * (a + kGeluCubic * a * a * a);
  return 0.5 * a * (1.0 + std::tanh(inner));
}

double activate_derivative(Activation activation, double a) {
  if (activation == Activation::relu) return a > 0.0 ? 1.0 : 0.0;
  const double inner = kGeluScale * (a + kGeluCubic * a * a * a);
  const double t = std::tanh(inner);
  const double d_inner = kGeluScale * (1.0 + 3.0 * kGeluCubic * a * a);
  return 0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * d_inner;
}

BottleneckHead BottleneckHead::initialize(std::size_t dim, std::size_t rank, std::size_t classes,
                                          std::uint64_t seed, Activation activation,
                                          bool residual) {
  if (dim == 0 || rank == 0 || classes == 0) throw InputError("BottleneckHead: zero dimension");
  if (rank >= dim) throw InputError("BottleneckHead: rank must be smaller than the feature dim");
  BottleneckHead head;
  head.down = Matrix(dim, rank);
  head.up = Matrix(rank, dim);
  head.classifier = Matrix(dim, classes);
  head.activation = activation;
  head.residual = residual;
  Rng rng(mix_seed(seed, 0x68656164ULL));
  fill_normal(head.down, rng, 1.0 / std::sqrt(static_cast<double>(dim)));
  if (!residual) fill_normal(head.up, rng, 1.0 / std::sqrt(static_cast<double>(rank)));
  fill_normal(head.classifier, rng, 0.01);
  return head;
}

HeadForward forward(const BottleneckHead& head, std::span<const double> x) {
  const std::size_t d = head.input_dim();
  const std::size_t r = head.rank();
  if (x.size() != d) throw InputError("BottleneckHead: input dimension mismatch");
  const auto& k = kernels::active_kernels();

  HeadForward out;
  out.pre_activation.resize(r);
  k.gemv_t(head.down.data(), d, r, x.data(), out.pre_activation.data());
  out.hidden.resize(r);
  for (std::size_t j = 0; j < r; ++j) out.hidden[j] = activate(head.activation, out.pre_activation[j]);

  out.adapted.resize(d);
  k.gemv_t(head.up.data(), r, d, out.hidden.data(), out.adapted.data());
  if (head.residual) k.axpy(1.0, x.data(), out.adapted.data(), d);

  out.adapted_norm = std::sqrt(k.dot(out.adapted.data(), out.adapted.data(), d));
  if (!(out.adapted_norm > 0.0) || !std::isfinite(out.adapted_norm)) {
    throw InputError("forward_embed: adapter output is zero or non-finite");
  }
  out.embedding = out.adapted;
  for (double& v : out.embedding) v /= out.adapted_norm;

  out.logits.resize(head.class_count());
  k.gemv_t(head.classifier.data(), d, head.class_count(), out.embedding.data(), out.logits.data());
  return out;
}

Vector adapt(const BottleneckHead& head, std::span<const double> x) {
  const std::size_t d = head.input_dim();
  const std::size_t r = head.rank();
  if (x.size() != d) throw InputError("BottleneckHead: input dimension mismatch");
  const auto& k = kernels::active_kernels();
  Vector hidden(r);
  k.gemv_t(head.down.data(), d, r, x.data(), hidden.data());
  for (double& v : hidden) v = activate(head.activation, v);
  Vector adapted(d);
  k.gemv_t(head.up.data(), r, d, hidden.data(), adapted.data());
  if (head.residual) k.axpy(1.0, x.data(), adapted.data(), d);
  return adapted;
}

UnitVector forward_embed(const BottleneckHead& head, std::span<const double> x) {
  return UnitVector::normalize(adapt(head, x));
}

void backward(const BottleneckHead& head, std::span<const double> x, const HeadForward& cache,
              std::span<const double> grad_embedding, std::span<const double> grad_logits,
              HeadGradients& grads) {
  const std::size_t d = head.input_dim();
  const std::size_t r = head.rank();
  const std::size_t classes = head.class_count();
  const auto& k = kernels::active_kernels();

  Vector grad_z(d, 0.0);
  if (!grad_embedding.empty()) grad_z.assign(grad_embedding.begin(), grad_embedding.end());
  if (!grad_logits.empty()) {
    // logits = W_cls^T z
    k.rank1_update(1.0, cache.embedding.data(), d, grad_logits.data(), classes,
                   grads.classifier.data());
    Vector through(d);
    k.gemv(head.classifier.data(), d, classes, grad_logits.data(), through.data());
    k.axpy(1.0, through.data(), grad_z.data(), d);
  }

  // z = u / |u|  =>  du = (dz - z <z, dz>) / |u|
  const double radial = k.dot(cache.embedding.data(), grad_z.data(), d);
  Vector grad_u(d);
  for (std::size_t i = 0; i < d; ++i) {
    grad_u[i] = (grad_z[i] - cache.embedding[i] * radial) / cache.adapted_norm;
  }

  // u = [x +] W_up^T h
  k.rank1_update(1.0, cache.hidden.data(), r, grad_u.data(), d, grads.up.data());
  Vector grad_h(r);
  k.gemv(head.up.data(), r, d, grad_u.data(), grad_h.data());
  for (std::size_t j = 0; j < r; ++j) {
    grad_h[j] *= activate_derivative(head.activation, cache.pre_activation[j]);
  }
  // a = W_down^T x
  k.rank1_update(1.0, x.data(), d, grad_h.data(), r, grads.down.data());
}

Vector to_double(std::span<const float> values) { return Vector(values.begin(), values.end()); }

Vector FrozenEmbedding::features(std::span<const float> x) const {
  const Vector wide = to_double(x);
  return adapt(head_, wide);
}

}  // namespace bamp
