#include <doctest.h>

#include <cmath>
#include <limits>

#include "emocolor/error.hpp"
#include "emocolor/optimizer.hpp"
#include "emocolor/random.hpp"
#include "oracles.hpp"

using namespace emocolor;

TEST_CASE("zero gradient leaves weights unchanged and advances t") {
  std::vector<double> w = {1.0, -2.0};
  const std::vector<double> g = {0.0, 0.0};
  AdamState s(2);
  adam_step(w, g, s, {});
  CHECK(w == std::vector<double>{1.0, -2.0});
  CHECK(s.t == 1);
}

TEST_CASE("first scalar step moves by about the learning rate") {
  std::vector<double> w = {1.0};
  AdamState s(1);
  adam_step(w, std::vector<double>{1.0}, s, {});
  CHECK(w[0] == doctest::Approx(0.999).epsilon(1e-6));
}

TEST_CASE("two constant-gradient steps match the scalar reference") {
  std::vector<double> w = {0.5};
  AdamState s(1);
  oracle::ScalarAdam ref;
  double rw = 0.5;
  for (int i = 0; i < 2; ++i) {
    adam_step(w, std::vector<double>{0.3}, s, {});
    rw = ref.step(rw, 0.3);
  }
  CHECK(std::abs(w[0] - rw) <= 1e-10);
}

TEST_CASE("non-finite gradients abort without touching state") {
  std::vector<double> w = {1.0, 2.0};
  AdamState s(2);
  adam_step(w, std::vector<double>{0.1, 0.1}, s, {});
  const auto w_before = w;
  const auto m_before = s.m;
  CHECK_THROWS_AS(adam_step(w, std::vector<double>{0.1, std::numeric_limits<double>::quiet_NaN()}, s, {}),
                  Error);
  CHECK(w == w_before);
  CHECK(s.m == m_before);
  CHECK(s.t == 1);
}

TEST_CASE("state invariants hold over random steps") {
  Rng rng(31);
  std::vector<double> w(10, 0.0);
  AdamState s(10);
  for (int step = 0; step < 50; ++step) {
    std::vector<double> g(10);
    for (auto& x : g) x = rng.normal();
    adam_step(w, g, s, {});
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(std::isfinite(s.m[i]));
      CHECK(s.v[i] >= 0.0);
    }
  }
  CHECK(s.t == 50);
}
