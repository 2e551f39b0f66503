#include <doctest.h>

#include <cmath>
#include <set>

#include "bridge.hpp"
#include "emocolor/error.hpp"
#include "emocolor/synthetic.hpp"
#include "emocolor/transform.hpp"
#include "test_support.hpp"

using namespace emocolor;

namespace {

std::vector<double> v2(double a, double b) { return {a, b}; }

}  // namespace

TEST_CASE("forward with the identity transform") {
  const Matrix id = LinearTransform::identity(2).weights;
  CHECK(forward(id, v2(1, 2), v2(1, 2)).similarity == doctest::Approx(1.0));
  CHECK(forward(id, v2(1, 0), v2(0, 1)).similarity == 0.0);
  const auto opposite = forward(id, v2(1, 0), v2(-1, 0));
  CHECK(opposite.similarity == 0.0);
  CHECK(opposite.cosine == doctest::Approx(-1.0));
  const auto zero = forward(id, v2(0, 0), v2(1, 0));
  CHECK(zero.degenerate);
  CHECK(zero.similarity == 0.0);
}

TEST_CASE("loss examples") {
  CHECK(loss(0.5, 0.5) == 0.0);
  CHECK(loss(1.0, 0.0) == 1.0);
  CHECK(loss(0.3, 0.7) == doctest::Approx(0.16));
}

TEST_CASE("forward output stays in [0, 1] and is scale invariant") {
  Rng rng(41);
  for (int t = 0; t < 100; ++t) {
    Matrix w(6, 4);
    for (auto& x : w.values()) x = rng.normal();
    std::vector<double> a(6), b(6);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    const auto r = forward(w, a, b);
    CHECK(r.similarity >= 0.0);
    CHECK(r.similarity <= 1.0);
    const double lambda = rng.uniform(0.1, 50.0);
    for (auto& x : a) x *= lambda;
    CHECK(forward(w, a, b).similarity == doctest::Approx(r.similarity).epsilon(1e-12));
  }
}

TEST_CASE("gradient is zero at the L2 minimum and in the relu dead zone") {
  auto p = oracle::random_transform_problem(42);
  for (std::size_t i = 0; i < p.data.pairs.size(); ++i) {
    const std::size_t idx[] = {i};
    p.data.pairs[i].target = predict(p.weights, p.data, idx)[0].similarity;
  }
  const auto at_min = gradient(p.weights, p.data, p.batch);
  for (double g : at_min.grad.values()) CHECK(g == 0.0);
  CHECK(at_min.loss == 0.0);

  // A pair whose transformed cosine is negative contributes nothing.
  PairDataset dead;
  dead.stimulus_features = Matrix(1, 2);
  dead.stimulus_features(0, 0) = 1.0;
  dead.color_features = Matrix(kNumColors, 2, 1.0);
  dead.color_features(0, 0) = -1.0;
  dead.color_features(0, 1) = 0.0;
  dead.stimulus_ids = {"s"};
  dead.pairs = {{0, Color::kRed, 0.9}};
  const std::size_t batch[] = {0};
  const auto g = gradient(LinearTransform::identity(2).weights, dead, batch);
  for (double x : g.grad.values()) CHECK(x == 0.0);
  CHECK(g.loss == doctest::Approx(0.81));
}

TEST_CASE("analytic gradient matches central differences") {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 25 && seed < 200; ++seed) {
    const auto p = oracle::random_transform_problem(seed);
    if (!oracle::away_from_kink(p, 1e-2)) continue;
    CAPTURE(seed);
    CHECK(oracle::transform_gradient_error(p, 1e-4) <= 1e-4);
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("parallel and reference gradients are bitwise equal") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto p = oracle::random_transform_problem(seed);
    const auto a = gradient(p.weights, p.data, p.batch, Backend::kParallel);
    const auto b = gradient(p.weights, p.data, p.batch, Backend::kReference);
    CHECK(a.grad == b.grad);
    CHECK(a.loss == b.loss);
  }
}

TEST_CASE("kfold_split partitions indices") {
  const auto f = kfold_split(250, 5, 7);
  for (std::size_t k = 0; k < 5; ++k) CHECK(f.members(k).size() == 50);
  std::multiset<std::size_t> seen;
  for (std::size_t k = 0; k < 5; ++k) {
    for (auto i : f.members(k)) seen.insert(i);
    CHECK(f.members(k).size() + f.complement(k).size() == 250);
  }
  CHECK(seen.size() == 250);
  for (std::size_t i = 0; i < 250; ++i) CHECK(seen.count(i) == 1);

  const auto single = kfold_split(5, 5, 1);
  for (std::size_t k = 0; k < 5; ++k) CHECK(single.members(k).size() == 1);
  CHECK(kfold_split(250, 5, 7).fold_of == f.fold_of);
  CHECK(kfold_split(250, 5, 8).fold_of != f.fold_of);

  const auto uneven = kfold_split(7, 3, 2);
  CHECK(uneven.members(0).size() == 3);
  CHECK(uneven.members(1).size() == 2);
  CHECK(uneven.members(2).size() == 2);
  CHECK_THROWS_AS(kfold_split(3, 5, 0), Error);
}

TEST_CASE("training at a perfect fit stays at zero loss") {
  const std::size_t d = 6;
  TrainConfig cfg;
  cfg.k = 4;
  cfg.seed = 3;
  cfg.epochs = 5;
  auto p = oracle::random_transform_problem(43);
  PairDataset data;
  data.stimulus_features = Matrix(p.data.stimulus_features.rows(), d);
  Rng rng(44);
  for (auto& x : data.stimulus_features.values()) x = std::abs(rng.normal());
  data.color_features = Matrix(kNumColors, d);
  for (auto& x : data.color_features.values()) x = std::abs(rng.normal());
  data.stimulus_ids = p.data.stimulus_ids;
  data.pairs = p.data.pairs;
  const Matrix w0 = LinearTransform::initialize(d, cfg.k, cfg.seed).weights;
  const auto preds = predict(w0, data);
  for (std::size_t i = 0; i < data.pairs.size(); ++i) data.pairs[i].target = preds[i].similarity;

  const auto r = train(data, cfg);
  CHECK(r.loss_history.size() == cfg.epochs + 1);
  CHECK(r.loss_history.front() == 0.0);
  CHECK(r.loss_history.back() == 0.0);
  CHECK(r.transform.weights == w0);
}

TEST_CASE("initialization is Glorot-uniform and seeded") {
  const auto t = LinearTransform::initialize(30, 20, 5);
  const double limit = std::sqrt(6.0 / 50.0);
  for (double x : t.weights.values()) CHECK(std::abs(x) <= limit);
  CHECK(LinearTransform::initialize(30, 20, 5).weights == t.weights);
  CHECK(LinearTransform::initialize(30, 20, 6).weights != t.weights);
}

TEST_CASE("planted transform is recovered") {
  synthetic::PlantedConfig pc;
  pc.n_stimuli = 40;  // 200 pairs
  pc.seed = 11;
  const auto task = synthetic::make_planted_task(pc);
  REQUIRE(task.data.size() == 200);
  TrainConfig cfg;
  cfg.seed = 11;
  const auto cv = cross_validate(task.data, cfg, 5);
  double mse = 0.0;
  for (std::size_t i = 0; i < task.data.size(); ++i) {
    mse += loss(cv.predictions[i], task.data.pairs[i].target);
  }
  mse /= static_cast<double>(task.data.size());
  CHECK(mse <= 0.01);
  for (const auto& h : cv.loss_histories) {
    for (std::size_t e = 1; e < h.size(); ++e) CHECK(h[e] <= 1.05 * h[e - 1]);
  }
}

TEST_CASE("training is bitwise deterministic") {
  synthetic::PlantedConfig pc;
  pc.n_stimuli = 20;
  const auto task = synthetic::make_planted_task(pc);
  TrainConfig cfg;
  cfg.k = 16;
  cfg.epochs = 5;
  cfg.seed = 9;
  const auto a = train(task.data, cfg);
  const auto b = train(task.data, cfg);
  CHECK(a.transform.weights == b.transform.weights);
  CHECK(a.loss_history == b.loss_history);
  cfg.seed = 10;
  CHECK(train(task.data, cfg).transform.weights != a.transform.weights);
}

TEST_CASE("cross_validate predicts every pair from the fold that excludes it") {
  synthetic::PlantedConfig pc;
  const auto task = synthetic::make_planted_task(pc);
  REQUIRE(task.data.size() == 250);
  TrainConfig cfg;
  cfg.k = 12;
  cfg.epochs = 3;
  for (auto grouping : {FoldGrouping::kPairs, FoldGrouping::kStimuli}) {
    const auto cv = cross_validate(task.data, cfg, 5, grouping);
    CHECK(cv.predictions.size() == 250);
    CHECK(cv.loss_histories.size() == 5);
    std::vector<std::size_t> count(5, 0);
    for (auto f : cv.fold_of) ++count[f];
    for (auto c : count) CHECK(c == 50);
    if (grouping == FoldGrouping::kStimuli) {
      for (std::size_t i = 0; i < 250; ++i) {
        CHECK(cv.fold_of[i] == cv.fold_of[(i / kNumColors) * kNumColors]);
      }
    }
    // Each held-out prediction equals the fold model's prediction.
    const auto again = cross_validate(task.data, cfg, 5, grouping);
    CHECK(again.predictions == cv.predictions);
  }
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.k = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.learning_rate = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("transform save/load round trip") {
  TempDir dir;
  auto t = LinearTransform::initialize(7, 3, 2);
  t.model_id = "m";
  t.layer_name = "l";
  save_transform(dir / "t", t);
  const auto back = load_transform(dir / "t");
  CHECK(back.d_in() == 7);
  CHECK(back.k() == 3);
  CHECK(back.model_id == "m");
  CHECK(back.layer_name == "l");
  CHECK(back.seed == 2);
  for (std::size_t i = 0; i < t.weights.size(); ++i) {
    CHECK(back.weights.values()[i] == static_cast<double>(static_cast<float>(t.weights.values()[i])));
  }
}
