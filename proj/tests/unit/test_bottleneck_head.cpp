#include <doctest.h>

#include <cmath>

#include "bamp/bottleneck_head.hpp"
#include "bamp/errors.hpp"
#include "bamp/random.hpp"

using namespace bamp;

TEST_CASE("residual head starts as the identity adapter") {
  const auto head = BottleneckHead::initialize(8, 2, 3, 42);
  CHECK(head.input_dim() == 8);
  CHECK(head.rank() == 2);
  CHECK(head.class_count() == 3);
  for (double v : head.up.storage()) CHECK(v == 0.0);
  const Vector x = {1, -2, 3, 0.5, 0, 0, 1, 2};
  CHECK(adapt(head, x) == x);
  CHECK(BottleneckHead::initialize(8, 2, 3, 42) == head);
  CHECK(BottleneckHead::initialize(8, 2, 3, 43) != head);
}

TEST_CASE("forward pass by hand") {
  BottleneckHead head;
  head.down = Matrix(2, 1);
  head.down(0, 0) = 1.0;
  head.up = Matrix(1, 2);
  head.up(0, 1) = 2.0;
  head.classifier = Matrix(2, 2);
  head.classifier(0, 0) = 1.0;
  head.classifier(1, 1) = -1.0;
  head.activation = Activation::relu;

  // a = 3, h = 3, u = (3, 4 + 6) = (3, 10)
  const auto fwd = forward(head, Vector{3.0, 4.0});
  CHECK(fwd.adapted == Vector{3.0, 10.0});
  const double n = std::sqrt(109.0);
  CHECK(fwd.adapted_norm == doctest::Approx(n));
  CHECK(fwd.embedding[1] == doctest::Approx(10.0 / n));
  CHECK(fwd.logits[0] == doctest::Approx(3.0 / n));
  CHECK(fwd.logits[1] == doctest::Approx(-10.0 / n));

  head.residual = false;
  CHECK(adapt(head, Vector{3.0, 4.0}) == Vector{0.0, 6.0});
  CHECK_THROWS_AS(forward_embed(head, Vector{-3.0, 4.0}), InputError);
}

TEST_CASE("activations") {
  CHECK(activate(Activation::relu, -1.0) == 0.0);
  CHECK(activate(Activation::relu, 2.0) == 2.0);
  CHECK(activate(Activation::gelu, 0.0) == 0.0);
  CHECK(activate(Activation::gelu, 3.0) == doctest::Approx(2.9964).epsilon(1e-4));
  for (double a : {-2.0, -0.3, 0.4, 1.7}) {
    const double h = 1e-6;
    const double numeric =
        (activate(Activation::gelu, a + h) - activate(Activation::gelu, a - h)) / (2 * h);
    CHECK(activate_derivative(Activation::gelu, a) == doctest::Approx(numeric).epsilon(1e-7));
  }
  CHECK(parse_activation("relu") == Activation::relu);
  CHECK(std::string(to_string(Activation::gelu)) == "gelu");
  CHECK_THROWS_AS(parse_activation("tanh"), InputError);
}

TEST_CASE("backward matches finite differences on the logits") {
  Rng rng(3);
  auto head = BottleneckHead::initialize(6, 2, 3, 9);
  for (double& v : head.up.storage()) v = 0.3 * rng.normal();
  for (double& v : head.classifier.storage()) v = rng.normal();
  Vector x(6);
  for (double& v : x) v = rng.normal();
  const Vector g_logits = {0.5, -1.0, 0.25};
  const Vector g_embed = {0.1, 0.0, -0.2, 0.3, 0.0, 0.05};

  auto objective = [&](const BottleneckHead& h) {
    const auto f = forward(h, x);
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += g_logits[i] * f.logits[i];
    for (std::size_t i = 0; i < 6; ++i) s += g_embed[i] * f.embedding[i];
    return s;
  };
  HeadGradients grads(head);
  backward(head, x, forward(head, x), g_embed, g_logits, grads);

  const auto analytic = grads.blocks();
  auto params = head.parameters();
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b]->storage().size(); ++i) {
      double& w = params[b]->storage()[i];
      const double saved = w;
      w = saved + 1e-6;
      const double up = objective(head);
      w = saved - 1e-6;
      const double down = objective(head);
      w = saved;
      CHECK(analytic[b]->storage()[i] == doctest::Approx((up - down) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("frozen embedding exposes the adapter output") {
  const auto head = BottleneckHead::initialize(4, 1, 2, 1);
  const FrozenEmbedding frozen(head);
  const std::vector<float> x = {1.0f, 2.0f, 3.0f, 4.0f};
  CHECK(frozen.features(std::span<const float>(x)) == Vector{1.0, 2.0, 3.0, 4.0});
  CHECK(frozen.embed(Vector{0.0, 0.0, 3.0, 4.0})[3] == doctest::Approx(0.8));
}
