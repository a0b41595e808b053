#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "smil/error.hpp"
#include "smil/evaluation.hpp"
#include "smil/trainer.hpp"

using namespace smil;
using namespace smil::eval;

namespace {

data::MaskedDataset toy(std::size_t n, std::uint64_t seed, bool multi = false) {
  data::SynthConfig sc;
  sc.num_samples = n;
  sc.num_classes = multi ? 4 : 3;
  sc.dim1 = 6;
  sc.dim2 = 5;
  sc.noise = 0.3;
  sc.separation = 1.5;
  sc.multi_label = multi;
  sc.seed = seed;
  return data::as_masked(data::synth_bimodal(sc));
}

std::vector<double> flat(nn::Model m) {
  std::vector<double> out;
  for (auto& [name, t] : nn::params(m)) {
    out.insert(out.end(), t->values().begin(), t->values().end());
    CHECK_FALSE(t->has_grad());
  }
  return out;
}

}  // namespace

TEST_CASE("accuracy") {
  const std::vector<int> a = {1, 2, 3, 4};
  CHECK(accuracy(a, a) == 1.0);
  CHECK(accuracy(std::vector<int>{1, 2, 3, 0}, a) == 0.75);
  CHECK(accuracy(std::vector<int>{5, 6, 7, 8}, a) == 0.0);
  CHECK_THROWS_AS(accuracy(std::vector<int>{1}, a), std::invalid_argument);
  CHECK_THROWS_AS(accuracy(std::vector<int>{}, std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("F1 micro") {
  const BitMatrix truth = {{1, 1}, {1, 0}};
  CHECK(f1_micro(truth, truth) == 1.0);
  // TP=2 FP=1 FN=1
  const BitMatrix t2 = {{1, 1}, {0, 1}};
  const BitMatrix p2 = {{1, 1}, {1, 0}};
  CHECK(f1_micro(p2, t2) == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
  CHECK(f1_micro(BitMatrix{{0, 0}, {0, 0}}, truth) == 0.0);
  CHECK(f1_micro(BitMatrix{{0, 0}}, BitMatrix{{0, 0}}) == 0.0);
  CHECK_THROWS_AS(f1_micro(BitMatrix{{1, 0, 0}}, BitMatrix{{1, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(f1_micro(BitMatrix{{1, 0}}, truth), std::invalid_argument);
}

TEST_CASE("F1 samples") {
  const BitMatrix truth = {{1, 0, 1}, {1, 0, 0}};
  CHECK(f1_samples(truth, truth) == 1.0);
  const BitMatrix pred = {{1, 0, 1}, {1, 1, 0}};
  CHECK(f1_samples(pred, truth) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
  // one row: same number as micro, but rows average instead of pooling
  const BitMatrix p1 = {{1, 1, 0, 0}}, t1 = {{1, 0, 1, 0}};
  CHECK(f1_samples(p1, t1) == f1_micro(p1, t1));
  const BitMatrix pm = {{1, 1, 1, 1}, {0, 0, 0, 1}}, tm = {{1, 0, 0, 0}, {0, 0, 0, 1}};
  CHECK(f1_samples(pm, tm) != doctest::Approx(f1_micro(pm, tm)));
}

TEST_CASE("one-hot predictions that all match give F1 = accuracy = 1") {
  BitMatrix bits;
  std::vector<int> labels;
  for (int i = 0; i < 7; ++i) {
    std::vector<std::uint8_t> row(4, 0);
    row[i % 4] = 1;
    bits.push_back(row);
    labels.push_back(i % 4);
  }
  CHECK(f1_micro(bits, bits) == 1.0);
  CHECK(f1_samples(bits, bits) == 1.0);
  CHECK(accuracy(labels, labels) == 1.0);
}

TEST_CASE("evaluation leaves the model untouched and is repeatable") {
  auto train = data::mask_modality(toy(200, 1), 0.3, 2);
  auto val = toy(90, 5);
  val.split = data::Split::validation;
  train::TrainConfig cfg;
  cfg.iterations = 30;
  cfg.num_priors = 4;
  cfg.batch_m = cfg.batch_f = 16;
  auto state = train::train_smil(train, cfg);
  const auto before = flat(state.model);
  const std::vector<double> prior_before(state.priors->vectors.values().begin(), state.priors->vectors.values().end());
  for (auto pattern : {Pattern::full, Pattern::image_only}) {
    for (std::size_t l : {0u, 4u}) {
      EvalOptions eo{.pattern = pattern, .stochastic_samples = l, .seed = 3};
      const auto a = evaluate(state.model, &*state.priors, val, eo);
      const auto b = evaluate(state.model, &*state.priors, val, eo);
      CHECK(a.accuracy == b.accuracy);
      CHECK(a.accuracy >= 0.0);
      CHECK(a.accuracy <= 1.0);
      CHECK_FALSE(a.f1_micro);
    }
  }
  CHECK(flat(state.model) == before);
  CHECK(std::vector<double>(state.priors->vectors.values().begin(), state.priors->vectors.values().end()) ==
        prior_before);
}

TEST_CASE("chunking does not change predictions") {
  auto train = data::mask_modality(toy(200, 1), 0.3, 2);
  auto val = toy(90, 5);
  train::TrainConfig cfg;
  cfg.iterations = 10;
  cfg.num_priors = 4;
  auto state = train::train_smil(train, cfg);
  const auto a = predict(state.model, &*state.priors, val, {.pattern = Pattern::image_only, .chunk = 7});
  const auto b = predict(state.model, &*state.priors, val, {.pattern = Pattern::image_only, .chunk = 500});
  CHECK(a.labels == b.labels);
}

TEST_CASE("image-only needs priors for SMIL, falls back to zeros for baselines") {
  auto train = data::mask_modality(toy(200, 1), 0.3, 2);
  auto val = toy(60, 5);
  train::TrainConfig cfg;
  cfg.iterations = 5;
  cfg.num_priors = 4;
  auto smil_state = train::train_smil(train, cfg);
  try {
    evaluate(smil_state.model, nullptr, val, {.pattern = Pattern::image_only});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == "missing-priors");
  }
  CHECK_NOTHROW(evaluate(smil_state.model, nullptr, val, {.pattern = Pattern::full}));

  cfg.method = train::Method::upper;
  cfg.ignore_mask = true;
  auto upper = train::train_baseline(train, cfg);
  CHECK_NOTHROW(evaluate(upper.model, nullptr, val, {.pattern = Pattern::image_only}));
}

TEST_CASE("the lower bound scores the same with and without modality 2") {
  auto train = data::mask_modality(toy(200, 1), 0.3, 2);
  auto val = toy(90, 5);
  train::TrainConfig cfg;
  cfg.method = train::Method::lower;
  cfg.iterations = 40;
  auto state = train::train_baseline(train, cfg);
  const auto full = predict(state.model, nullptr, val, {.pattern = Pattern::full});
  const auto img = predict(state.model, nullptr, val, {.pattern = Pattern::image_only});
  REQUIRE(full.labels.size() == val.size());
  CHECK(full.labels == img.labels);
}

TEST_CASE("multi-label evaluation reports both F1 scores") {
  auto train = data::mask_modality(toy(300, 1, true), 0.5, 2);
  auto val = toy(90, 5, true);
  train::TrainConfig cfg;
  cfg.iterations = 50;
  cfg.num_priors = 4;
  auto state = train::train_smil(train, cfg);
  const auto m = evaluate(state.model, &*state.priors, val);
  REQUIRE(m.f1_micro);
  REQUIRE(m.f1_samples);
  CHECK(*m.f1_micro >= 0.0);
  CHECK(*m.f1_samples <= 1.0);
}

TEST_CASE("pattern names") {
  CHECK(parse_pattern("full") == Pattern::full);
  CHECK(parse_pattern(pattern_name(Pattern::image_only)) == Pattern::image_only);
  CHECK_THROWS_AS(parse_pattern("audio-only"), Error);
}
