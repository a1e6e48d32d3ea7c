#include <doctest.h>

#include <cmath>

#include "bamp/ensemble.hpp"
#include "bamp/errors.hpp"
#include "bamp/random.hpp"
#include "bamp/synthetic.hpp"
#include "oracles.hpp"

using namespace bamp;

namespace {

struct Blobs {
  Matrix features;
  std::vector<std::size_t> labels;
};

Blobs blobs(std::size_t classes, std::size_t per_class, std::uint64_t seed, std::size_t first = 0) {
  Rng rng(seed);
  Blobs out;
  for (std::size_t c = first; c < first + classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Vector v(6);
      for (std::size_t j = 0; j < v.size(); ++j) v[j] = (j == c ? 3.0 : 0.0) + 0.4 * rng.normal();
      out.features.append_row(v);
      out.labels.push_back(c);
    }
  }
  return out;
}

double scorer_accuracy(const RandomProjectionScorer& scorer, const Blobs& test) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.features.rows(); ++i) {
    if (predict(scorer.score_vector(test.features.row(i)).scores) == test.labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.features.rows());
}

std::vector<LabeledEmbedding> small_synthetic() {
  SyntheticSpec spec;
  spec.classes = 6;
  spec.dim = 8;
  spec.train_per_class = 20;
  spec.test_per_class = 10;
  spec.seed = 2;
  return generate_synthetic(spec);
}

ProtocolConfig small_protocol() {
  ProtocolConfig config;
  config.train.epochs = 3;
  config.train.batch_size = 16;
  config.ots.dim = 64;
  config.seed = 1;
  return config;
}

}  // namespace

TEST_CASE("soft vote and prediction") {
  CHECK(soft_vote(Vector{0.0, 1.0}, Vector{1.0, 0.5}) == Vector{1.0, 1.5});
  CHECK(soft_vote(Vector{0.0, 1.0}, Vector{1.0, 0.0}, 2.0) == Vector{2.0, 1.0});
  CHECK_THROWS_AS(soft_vote(Vector{1.0}, Vector{1.0, 2.0}), InputError);
  CHECK(predict(Vector{0.2, 0.9, 0.9}) == 1);
  CHECK(predict(Vector{1.0, 1.0}) == 0);
  CHECK_THROWS_AS(predict(Vector{}), InputError);
}

TEST_CASE("presets") {
  CHECK(ComponentToggles::preset("B1") == ComponentToggles{false, false, false});
  CHECK(ComponentToggles::preset("B2") == ComponentToggles{true, false, false});
  CHECK(ComponentToggles::preset("B3") == ComponentToggles{true, true, false});
  CHECK(ComponentToggles::preset("B4") == ComponentToggles{true, true, true});
  CHECK(ComponentToggles{false, true, false}.preset_name() == "custom");
  CHECK(ComponentToggles{true, true, false}.preset_name() == "B3");
  CHECK_THROWS_AS(ComponentToggles::preset("B5"), InputError);
}

TEST_CASE("metrics") {
  const Vector acc = {90.0, 80.0, 70.0};
  const auto m = session_metrics(acc);
  CHECK(m.a_last == 70.0);
  CHECK(m.a_inc == doctest::Approx(80.0));
  CHECK_THROWS_AS(session_metrics(Vector{}), InputError);

  // Published per-dataset pairs and their reported averages.
  const std::vector<MetricPair> adapted = {{85.04, 89.32}, {86.30, 89.46}, {87.26, 89.70},
                                           {58.30, 66.93}, {81.02, 88.46}, {70.63, 79.18}};
  const auto avg = macro_metrics(adapted);
  CHECK(std::fabs(avg.a_last - 78.09) < 0.01);
  CHECK(std::fabs(avg.a_inc - 83.84) < 0.01);
  const std::vector<MetricPair> small = {{81.28, 87.04}, {78.05, 85.30}, {73.26, 78.06},
                                         {34.32, 49.28}, {71.78, 80.94}, {50.08, 64.90}};
  const auto small_avg = macro_metrics(small);
  CHECK(std::fabs(small_avg.a_last - 64.80) < 0.01);
  CHECK(std::fabs(small_avg.a_inc - 74.25) < 0.01);

  SessionRecord record;
  record.truth = {1, 2, 3, 4};
  record.predicted = {1, 2, 0, 4};
  CHECK(recompute_accuracy(record) == 75.0);
}

TEST_CASE("random projection scorer separates clusters") {
  RandomProjectionConfig config;
  config.dim = 256;
  config.seed = 4;
  RandomProjectionScorer scorer(6, config);
  const auto train = blobs(3, 30, 1);
  scorer.fit_base(train.features, train.labels, 3);
  CHECK(scorer.class_count() == 3);
  CHECK(scorer_accuracy(scorer, blobs(3, 40, 2)) >= 95.0);

  const auto shots = blobs(2, 5, 3, 3);
  std::vector<std::size_t> labels = shots.labels;
  scorer.fit_increment(shots.features, labels, 2, nullptr);
  CHECK(scorer.class_count() == 5);
  const auto s = scorer.score_vector(shots.features.row(0));
  CHECK(s.scores.size() == 5);
  CHECK(*std::max_element(s.scores.begin(), s.scores.end()) == 1.0);
  CHECK(*std::min_element(s.scores.begin(), s.scores.end()) == 0.0);
}

TEST_CASE("projection features are rectified") {
  RandomProjectionConfig config;
  config.dim = 32;
  RandomProjectionScorer scorer(4, config);
  for (double h : scorer.project(Vector{1.0, -2.0, 0.5, 3.0})) CHECK(h >= 0.0);
  CHECK_THROWS_AS(RandomProjectionScorer(4, RandomProjectionConfig{0, 1.0, 0}), InputError);
}

TEST_CASE("gram and targets do not depend on batching") {
  RandomProjectionConfig config;
  config.dim = 48;
  config.seed = 9;
  const auto data = blobs(3, 20, 6);
  RandomProjectionScorer whole(6, config), split(6, config);
  whole.accumulate(data.features, data.labels, 3);
  whole.solve();
  for (std::size_t start = 0; start < data.features.rows(); start += 7) {
    Matrix part;
    std::vector<std::size_t> labels;
    for (std::size_t i = start; i < std::min(start + 7, data.features.rows()); ++i) {
      part.append_row(data.features.row(i));
      labels.push_back(data.labels[i]);
    }
    split.accumulate(part, labels, 3);
  }
  split.solve();
  double worst = 0.0;
  for (std::size_t i = 0; i < whole.gram().storage().size(); ++i) {
    worst = std::max(worst, std::fabs(whole.gram().storage()[i] - split.gram().storage()[i]));
  }
  CHECK(worst < 1e-8);
  CHECK(oracle::max_abs_diff({whole.readout().storage()}, {split.readout().storage()}) < 1e-8);
}

TEST_CASE("readout solves the ridge system") {
  RandomProjectionConfig config;
  config.dim = 16;
  config.ridge = 2.0;
  RandomProjectionScorer scorer(6, config);
  const auto data = blobs(2, 10, 3);
  scorer.fit_base(data.features, data.labels, 2);
  oracle::Mat system;
  for (std::size_t i = 0; i < 16; ++i) {
    oracle::Vec row(scorer.gram().row(i).begin(), scorer.gram().row(i).end());
    row[i] += 2.0;
    system.push_back(row);
  }
  oracle::Mat targets(16, oracle::Vec(2));
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t j = 0; j < 16; ++j) targets[j][c] = scorer.targets()(c, j);
  }
  const auto want = oracle::multiply(oracle::gauss_jordan_inverse(system), targets);
  oracle::Mat got(16, oracle::Vec(2));
  for (std::size_t j = 0; j < 16; ++j) {
    for (std::size_t c = 0; c < 2; ++c) got[j][c] = scorer.readout()(j, c);
  }
  CHECK(oracle::max_abs_diff(got, want) < 1e-9);
}

TEST_CASE("protocol runs every session and is reproducible") {
  const auto records = small_synthetic();
  const auto plan = build_session_plan(derive_manifest(records), PlanMode::small_start, 5, 0, 3);
  auto config = small_protocol();
  std::size_t callbacks = 0;
  const auto result = run_protocol(records, plan, config, nullptr,
                                   [&](const SessionRecord&) { ++callbacks; });
  CHECK(callbacks == 3);
  REQUIRE(result.sessions.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& s = result.sessions[t];
    CHECK(s.seen_classes.size() == plan.seen_classes(t).size());
    CHECK(s.test_samples() == 10 * s.seen_classes.size());
    CHECK(recompute_accuracy(s) == doctest::Approx(s.accuracy));
    std::size_t diagonal = 0;
    for (std::size_t c = 0; c < s.seen_classes.size(); ++c) {
      diagonal += s.confusion[c * s.seen_classes.size() + c];
    }
    CHECK(diagonal == s.correct);
  }
  CHECK(result.metrics.a_last == result.sessions.back().accuracy);

  const auto again = run_protocol(records, plan, config);
  config.threads = 3;
  const auto threaded = run_protocol(records, plan, config);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(again.sessions[t].predicted == result.sessions[t].predicted);
    CHECK(threaded.sessions[t].predicted == result.sessions[t].predicted);
  }
}

TEST_CASE("protocol validation") {
  auto config = small_protocol();
  config.vote_weight = -1.0;
  CHECK_THROWS_AS(config.validate(), InputError);
  config = small_protocol();
  config.threads = 0;
  CHECK_THROWS_AS(config.validate(), InputError);
}
