#include <doctest.h>

#include <cmath>
#include <fstream>

#include "bamp/adaptation.hpp"
#include "bamp/errors.hpp"
#include "bamp/synthetic.hpp"
#include "temp_dir.hpp"

using namespace bamp;

namespace {

TrainingSet four_class_set(std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.dim = 8;
  spec.train_per_class = 30;
  spec.test_per_class = 1;
  spec.modes = 1;
  spec.separation = 10.0;
  spec.mode_spread = 0.0;
  spec.noise = 1.0;
  spec.anisotropy = 1.0;
  spec.seed = seed;
  std::vector<LabeledEmbedding> train;
  for (auto& r : generate_synthetic(spec)) {
    if (r.split == Split::train) train.push_back(std::move(r));
  }
  return TrainingSet::from_records(train);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 15;
  c.batch_size = 16;
  c.learning_rate = 0.05;
  c.prototypes_per_class = 2;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("training set indexes classes by ascending id") {
  std::vector<LabeledEmbedding> records(3);
  records[0].class_id = 9;
  records[0].vector = {1.0f};
  records[1].class_id = 2;
  records[1].vector = {2.0f};
  records[2].class_id = 9;
  records[2].vector = {3.0f};
  const auto set = TrainingSet::from_records(records);
  CHECK(set.class_ids == std::vector<std::uint32_t>{2, 9});
  CHECK(set.labels == std::vector<std::size_t>{1, 0, 1});
  CHECK(set.features(2, 0) == 3.0);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = TrainConfig{};
  c.ema_momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = TrainConfig{};
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  CHECK(parse_step_schedule("plateau_halving") == StepSchedule::plateau_halving);
  CHECK_THROWS_AS(parse_step_schedule("linear"), InputError);
}

TEST_CASE("four separated classes are learned") {
  const auto data = four_class_set();
  const auto result = train_base_session(data, quick_config());
  CHECK(head_accuracy(result.head, data) >= 95.0);
  CHECK(result.history.size() == 15);
  CHECK(result.bank.class_count() == 4);
  CHECK(result.alpha == doctest::Approx(std::exp(-4.0)));
  CHECK(result.warnings.empty());
}

TEST_CASE("training is deterministic") {
  const auto data = four_class_set();
  auto config = quick_config();
  config.epochs = 3;
  const auto a = train_base_session(data, config);
  const auto b = train_base_session(data, config);
  CHECK(a.head == b.head);
  CHECK(a.bank == b.bank);
  config.seed = 6;
  CHECK(train_base_session(data, config).head != a.head);
}

TEST_CASE("zero epochs leave the initial head") {
  const auto data = four_class_set();
  auto config = quick_config();
  config.epochs = 0;
  const auto result = train_base_session(data, config);
  CHECK(result.history.empty());
  CHECK(result.head == BottleneckHead::initialize(8, 2, 4, config.seed));
}

TEST_CASE("plateau halving never raises the full objective") {
  const auto data = four_class_set(4);
  auto config = quick_config();
  config.schedule = StepSchedule::plateau_halving;
  config.learning_rate = 0.5;
  config.epochs = 12;
  const auto result = train_base_session(data, config);
  double previous = INFINITY;
  for (const auto& epoch : result.history) {
    REQUIRE(epoch.full_loss.has_value());
    CHECK(*epoch.full_loss <= previous);
    previous = *epoch.full_loss;
  }
}

TEST_CASE("one prototype per class warns instead of failing") {
  auto config = quick_config();
  config.prototypes_per_class = 1;
  config.epochs = 2;
  const auto result = train_base_session(four_class_set(), config);
  REQUIRE(result.warnings.size() == 1);
  CHECK(result.warnings[0].find("one prototype") != std::string::npos);
}

TEST_CASE("cross-entropy only objective equals the mean CE") {
  const auto data = four_class_set();
  const auto head = BottleneckHead::initialize(8, 2, 4, 1);
  ObjectiveWeights w;
  const auto total = evaluate_dataset_objective(head, data, PrototypeBank{}, w);
  double ce = 0.0;
  for (std::size_t i = 0; i < data.features.rows(); ++i) {
    ce += loss_ce(forward(head, data.features.row(i)).logits, data.labels[i]);
  }
  CHECK(total.total == doctest::Approx(ce / static_cast<double>(data.features.rows())));
  CHECK(total.compact == 0.0);
}

TEST_CASE("base statistics follow the frozen adapter") {
  std::vector<LabeledEmbedding> records;
  for (float v : {1.0f, 3.0f}) {
    LabeledEmbedding r;
    r.class_id = 4;
    r.vector = {v, 0.0f};
    records.push_back(r);
  }
  LabeledEmbedding single;
  single.class_id = 1;
  single.vector = {0.0f, 5.0f};
  records.push_back(single);

  const FrozenEmbedding identity(BottleneckHead::initialize(2, 1, 2, 0));
  const auto protos = extract_base_prototypes(identity, records);
  CHECK(protos.class_ids == std::vector<std::uint32_t>{1, 4});
  CHECK(protos.raw(1, 0) == 2.0);
  CHECK(protos.normalized(0, 1) == 1.0);
  std::vector<std::string> warnings;
  const auto covs = extract_base_covariances(identity, records, &warnings);
  CHECK(covs[1](0, 0) == doctest::Approx(2.0));
  CHECK(covs[0](1, 1) == 0.0);
  CHECK(warnings.size() == 1);
}

TEST_CASE("checkpoint round trip") {
  bamp::testing::TempDir dir("checkpoint");
  auto config = quick_config();
  config.epochs = 2;
  const auto trained = train_base_session(four_class_set(), config);
  Checkpoint cp{0xfeedULL, trained.head, trained.bank, trained.class_ids};
  write_checkpoint(cp, dir / "c.bin");
  const auto back = read_checkpoint(dir / "c.bin");
  CHECK(back.config_hash == 0xfeedULL);
  CHECK(back.head == cp.head);
  CHECK(back.bank == cp.bank);
  CHECK(back.class_ids == cp.class_ids);

  std::ofstream(dir / "bad.bin") << "BAMX";
  CHECK_THROWS_AS(read_checkpoint(dir / "bad.bin"), FormatError);
  CHECK_THROWS_AS(read_checkpoint(dir / "missing.bin"), InputError);
}
