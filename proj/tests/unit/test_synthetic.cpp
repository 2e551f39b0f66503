#include <doctest.h>

#include <cmath>
#include <set>

#include "emocolor/synthetic.hpp"

using namespace emocolor;

TEST_CASE("random_orthonormal has orthonormal columns") {
  Rng rng(81);
  const Matrix q = synthetic::random_orthonormal(20, 6, rng);
  for (std::size_t a = 0; a < 6; ++a) {
    for (std::size_t b = 0; b < 6; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < 20; ++i) dot += q(i, a) * q(i, b);
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("planted task shape and targets") {
  synthetic::PlantedConfig pc;
  const auto task = synthetic::make_planted_task(pc);
  CHECK(task.data.size() == 250);
  CHECK(task.data.dim() == 32);
  CHECK(task.hidden.cols() == 8);
  for (const auto& p : task.data.pairs) {
    CHECK(p.target >= 0.0);
    CHECK(p.target <= 1.0);
  }
  CHECK(synthetic::make_planted_task(pc).data.pairs[17].target == task.data.pairs[17].target);
  pc.k_star = 40;
  CHECK_THROWS(synthetic::make_planted_task(pc));
}

TEST_CASE("simulated participants answer every stimulus once") {
  synthetic::ImageSetConfig ic;
  ic.per_class = 2;
  ic.size = 16;
  const StimulusSet set = synthetic::make_stimulus_images(ic);
  CHECK(set.size() == 10);
  synthetic::ParticipantConfig pc;
  pc.participants = 30;
  pc.association = 1.0;
  const auto trials = synthetic::simulate_participants(set, pc);
  CHECK(trials.size() == 300);
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& t : trials) {
    CHECK(keys.emplace(t.participant_id, t.image_id).second);
    std::set<Color> order(t.presented_order.begin(), t.presented_order.end());
    CHECK(order.size() == kNumColors);
    // With association 1 every choice is the class color.
    CHECK(t.chosen == color_for_emotion(*set.find(t.image_id)->true_emotion));
  }
}
