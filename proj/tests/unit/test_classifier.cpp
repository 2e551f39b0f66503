#include <doctest.h>

#include <cmath>

#include "bridge.hpp"
#include "emocolor/classifier.hpp"
#include "emocolor/error.hpp"
#include "emocolor/synthetic.hpp"

using namespace emocolor;

TEST_CASE("similarity_classify picks the emotion of the most similar color") {
  CHECK(similarity_classify({0.9, 0.1, 0.1, 0.1, 0.1}).emotion == Emotion::kAnger);
  CHECK_FALSE(similarity_classify({0.9, 0.1, 0.1, 0.1, 0.1}).tie);
  CHECK(similarity_classify({0, 0, 0, 0.8, 0}).emotion == Emotion::kFear);
  const auto tie = similarity_classify({0.5, 0.5, 0.1, 0.1, 0.1});
  CHECK(tie.emotion == Emotion::kAnger);
  CHECK(tie.tie);

  Rng rng(51);
  for (int t = 0; t < 200; ++t) {
    ColorRow row;
    for (auto& x : row) x = rng.uniform();
    ColorRow scaled;
    const double lambda = rng.uniform(0.1, 10.0);
    for (std::size_t j = 0; j < kNumColors; ++j) scaled[j] = row[j] * lambda;
    CHECK(similarity_classify(scaled).emotion == similarity_classify(row).emotion);
  }
}

TEST_CASE("head_forward") {
  const std::vector<double> x = {0.3, -1.2, 2.0};
  for (double p : head_forward(MlpHead::zeros(3, 4), x)) CHECK(p == doctest::Approx(0.2));

  MlpHead h = MlpHead::initialize(3, 4, 8);
  for (auto& b : h.b1) b = 0.05;
  const ColorRow p = head_forward(h, x);
  MlpHead shifted = h;
  for (auto& b : shifted.b2) b += 3.7;
  const ColorRow q = head_forward(shifted, x);
  double sum = 0.0;
  const auto want = oracle::head_probs(oracle::to_head(h), x);
  for (std::size_t j = 0; j < kNumColors; ++j) {
    CHECK(p[j] == doctest::Approx(q[j]).epsilon(1e-12));
    CHECK(std::abs(p[j] - want[j]) <= 1e-6);
    sum += p[j];
  }
  CHECK(std::abs(sum - 1.0) <= 1e-9);
}

TEST_CASE("head gradient matches central differences") {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 25 && seed < 200; ++seed) {
    const auto p = oracle::random_head_problem(seed);
    if (!oracle::head_away_from_kink(p, 1e-2)) continue;
    CAPTURE(seed);
    CHECK(oracle::head_gradient_error(p, 1e-4) <= 1e-4);
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("train_head separates two classes in 2-D") {
  Rng rng(52);
  Matrix x(20, 2);
  std::vector<Emotion> labels;
  for (std::size_t i = 0; i < 20; ++i) {
    const bool positive = i % 2 == 0;
    x(i, 0) = (positive ? 2.0 : -2.0) + 0.3 * rng.normal();
    x(i, 1) = 0.3 * rng.normal();
    labels.push_back(positive ? Emotion::kHappiness : Emotion::kSadness);
  }
  HeadConfig cfg;
  cfg.hidden = 8;
  cfg.learning_rate = 0.05;
  cfg.seed = 2;
  const auto r = train_head(x, labels, cfg);
  CHECK(r.loss_history.size() == 16);
  CHECK(r.loss_history.back() < r.loss_history.front());
  std::vector<Emotion> preds;
  for (std::size_t i = 0; i < 20; ++i) preds.push_back(head_classify(r.head, x.row(i)).emotion);
  CHECK(accuracy(preds, labels) == 100.0);

  const auto again = train_head(x, labels, cfg);
  CHECK(again.head.w1 == r.head.w1);
  CHECK(again.head.b2 == r.head.b2);

  cfg.epochs = 0;
  const auto untouched = train_head(x, labels, cfg);
  const auto init = MlpHead::initialize(2, 8, cfg.seed);
  CHECK(untouched.head.w1 == init.w1);
  CHECK(untouched.head.w2 == init.w2);
}

TEST_CASE("accuracy") {
  using E = Emotion;
  const std::vector<E> a = {E::kAnger, E::kFear, E::kSadness, E::kDisgust, E::kHappiness};
  CHECK(accuracy(a, a) == 100.0);
  const std::vector<E> none = {E::kFear, E::kAnger, E::kDisgust, E::kSadness, E::kAnger};
  CHECK(accuracy(none, a) == 0.0);
  const std::vector<E> two = {E::kAnger, E::kFear, E::kAnger, E::kAnger, E::kAnger};
  CHECK(accuracy(two, a) == 40.0);
  CHECK_THROWS_AS(accuracy(two, std::vector<E>{E::kAnger}), Error);
}

TEST_CASE("chance baseline converges to 20 percent") {
  const std::vector<Emotion> truth(50, Emotion::kFear);
  const auto c = chance_baseline(truth, 4000, 3);
  const double binomial_sd = std::sqrt(50 * 0.2 * 0.8) / 50 * 100;  // one run, in percent
  CHECK(std::abs(c.mean - 20.0) <= 3 * binomial_sd / std::sqrt(4000.0));
  CHECK(c.stddev == doctest::Approx(binomial_sd).epsilon(0.05));
  CHECK(c.runs == 4000);
  CHECK(chance_baseline(truth, 10, 3).mean == chance_baseline(truth, 10, 3).mean);
}

TEST_CASE("classify modes parse and round trip") {
  for (auto m : {ClassifyMode::kRaw, ClassifyMode::kTransformed, ClassifyMode::kHeadHuman,
                 ClassifyMode::kHeadActual}) {
    CHECK(parse_classify_mode(to_string(m)) == m);
  }
  CHECK(to_string(ClassifyMode::kHeadHuman) == "head-human");
  CHECK_THROWS_AS(parse_classify_mode("svm"), Error);
}

TEST_CASE("prototype task: similarity and head both reach 100 percent") {
  synthetic::PrototypeConfig pc;
  pc.spread = 0.5;
  const auto in = synthetic::make_prototype_task(pc);
  REQUIRE(in.actual_labels.has_value());
  const auto& actual = *in.actual_labels;

  std::vector<Emotion> sim;
  for (std::size_t i = 0; i < in.data.stimulus_features.rows(); ++i) {
    ColorRow row;
    for (std::size_t j = 0; j < kNumColors; ++j) {
      row[j] = oracle::cosine(oracle::Vec(in.data.stimulus_features.row(i).begin(),
                                          in.data.stimulus_features.row(i).end()),
                              oracle::Vec(in.data.color_features.row(j).begin(),
                                          in.data.color_features.row(j).end()));
    }
    sim.push_back(similarity_classify(row).emotion);
  }
  CHECK(accuracy(sim, actual) == 100.0);

  HeadConfig cfg;
  const auto head = train_head(in.data.stimulus_features, actual, cfg).head;
  std::vector<Emotion> preds;
  for (std::size_t i = 0; i < in.data.stimulus_features.rows(); ++i) {
    preds.push_back(head_classify(head, in.data.stimulus_features.row(i)).emotion);
  }
  CHECK(accuracy(preds, actual) == 100.0);
}

TEST_CASE("run_classification") {
  synthetic::PrototypeConfig pc;
  pc.spread = 2.0;
  const auto in = synthetic::make_prototype_task(pc);
  ClassificationConfig cfg;
  cfg.trials = 3;
  cfg.transform.k = 16;
  cfg.transform.epochs = 5;
  cfg.head.epochs = 5;

  const auto raw = run_classification(in, ClassifyMode::kRaw, cfg);
  CHECK(raw.trials == 1);
  CHECK(raw.vs_human.stddev == 0.0);
  CHECK(raw.predictions.size() == 50);
  REQUIRE(raw.vs_actual.has_value());

  const auto a = run_classification(in, ClassifyMode::kTransformed, cfg);
  const auto b = run_classification(in, ClassifyMode::kTransformed, cfg);
  CHECK(a.vs_human.per_trial == b.vs_human.per_trial);
  CHECK(a.vs_human.per_trial.size() == 3);
  for (double acc : a.vs_human.per_trial) {
    CHECK(acc >= 0.0);
    CHECK(acc <= 100.0);
  }

  auto no_actual = in;
  no_actual.actual_labels.reset();
  CHECK_THROWS_AS(run_classification(no_actual, ClassifyMode::kHeadActual, cfg), Error);
  CHECK_FALSE(run_classification(no_actual, ClassifyMode::kHeadHuman, cfg).vs_actual.has_value());
}
