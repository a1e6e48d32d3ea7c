#include <doctest.h>

#include <cmath>
#include <limits>

#include "bamp/errors.hpp"
#include "bamp/hypersphere.hpp"
#include "bamp/random.hpp"
#include "oracles.hpp"

using namespace bamp;

namespace {

Vector random_unit(Rng& rng, std::size_t d) {
  Vector v(d);
  for (double& x : v) x = rng.normal();
  return normalize(v).vector();
}

}  // namespace

TEST_CASE("normalize yields unit norm") {
  const Vector v = {3.0, 4.0};
  const UnitVector u = normalize(v);
  CHECK(u[0] == doctest::Approx(0.6));
  CHECK(u[1] == doctest::Approx(0.8));

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Vector x(17);
    for (double& e : x) e = rng.normal() * std::pow(10.0, trial % 7 - 3);
    const auto z = normalize(x);
    double norm = 0.0;
    for (double e : z.components()) norm += e * e;
    CHECK(std::fabs(std::sqrt(norm) - 1.0) < 1e-12);
  }
}

TEST_CASE("normalize rejects zero and non-finite input") {
  CHECK_THROWS_AS(normalize(Vector{0.0, 0.0}), InputError);
  CHECK_THROWS_AS(normalize(Vector{1.0, std::numeric_limits<double>::quiet_NaN()}), InputError);
  CHECK_THROWS_AS(normalize(Vector{std::numeric_limits<double>::infinity()}), InputError);
  CHECK_THROWS_AS(UnitVector::from_normalized({1.0, 1.0}), InputError);
  CHECK_NOTHROW(UnitVector::from_normalized({0.0, 1.0}));
}

TEST_CASE("vmf log density") {
  const auto z = normalize(Vector{1.0, 0.0});
  const auto mean = normalize(Vector{1.0, 1.0});
  CHECK(vmf_log_density_unnorm(z, mean, 4.0) == doctest::Approx(4.0 / std::sqrt(2.0)));
  CHECK(vmf_log_density_unnorm(z, mean, 0.0) == 0.0);
  CHECK_THROWS_AS(vmf_log_density_unnorm(z, mean, -1.0), InputError);
  CHECK(VmfParams::from_temperature(0.1).concentration == doctest::Approx(10.0));
}

TEST_CASE("log_sum_exp and softmax are stable") {
  const Vector big = {1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)));
  CHECK(std::isinf(log_sum_exp(std::span<const double>{})));
  Vector v = {-1000.0, 0.0, -1000.0};
  softmax_inplace(v);
  CHECK(v[1] == doctest::Approx(1.0));
  CHECK(v[0] == 0.0);
}

TEST_CASE("mixture posterior matches direct evaluation") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 2 + rng.below(10);
    const std::size_t classes = 2 + rng.below(5);
    const double tau = 0.05 + 0.5 * rng.uniform();
    std::vector<Matrix> protos;
    std::vector<std::vector<double>> weights;
    std::vector<oracle::Mat> o_protos;
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t k = 1 + rng.below(4);
      Matrix m;
      oracle::Mat om;
      std::vector<double> w;
      double total = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const Vector row = random_unit(rng, d);
        m.append_row(row);
        om.push_back(row);
        w.push_back(0.1 + rng.uniform());
        total += w.back();
      }
      for (double& x : w) x /= total;
      protos.push_back(m);
      o_protos.push_back(om);
      weights.push_back(w);
    }
    const Vector z = random_unit(rng, d);
    const auto got = mixture_class_posterior(z, protos, weights, tau);
    const auto want = oracle::naive_posterior(z, o_protos, weights, tau);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      CHECK(std::fabs(got[c] - want[c]) < 1e-9);
      sum += got[c];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("posterior survives extreme temperatures") {
  Matrix a;
  a.append_row(Vector{1.0, 0.0});
  Matrix b;
  b.append_row(Vector{0.0, 1.0});
  const std::vector<Matrix> protos = {a, b};
  const std::vector<std::vector<double>> weights = {{1.0}, {1.0}};
  const auto post = mixture_class_posterior(Vector{1.0, 0.0}, protos, weights, 1e-4);
  CHECK(post[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(post[1]));
}

TEST_CASE("assignment weights") {
  Matrix protos;
  protos.append_row(Vector{1.0, 0.0});
  protos.append_row(Vector{0.0, 1.0});
  const auto w = assignment_weights(Vector{1.0, 0.0}, protos, 0.1);
  CHECK(w[0] == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))));
  CHECK(w[0] + w[1] == doctest::Approx(1.0));
  const auto even = assignment_weights(normalize(Vector{1.0, 1.0}).vector(), protos, 0.1);
  CHECK(even[0] == doctest::Approx(0.5));
}
