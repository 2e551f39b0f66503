#include <doctest.h>

#include <cmath>

#include "emocolor/error.hpp"
#include "emocolor/features.hpp"
#include "emocolor/random.hpp"
#include "emocolor/synthetic.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace emocolor;

TEST_CASE("preprocess applies channel order, mean and scale") {
  ModelSpec spec;
  spec.layer_name = "out";
  spec.input_size = 2;

  SUBCASE("zero image, zero mean") {
    const auto t = preprocess(RgbImage(2, 2, {0, 0, 0}), spec);
    CHECK(t.shape == std::vector<std::int64_t>{1, 3, 2, 2});
    for (float v : t.f) CHECK(v == 0.0f);
  }
  SUBCASE("mean subtraction") {
    spec.mean = {128, 128, 128};
    for (float v : preprocess(RgbImage(2, 2, {128, 128, 128}), spec).f) CHECK(v == 0.0f);
  }
  SUBCASE("bgr reorders channels before normalization") {
    spec.input_size = 1;
    spec.channel_order = ChannelOrder::kBgr;
    CHECK(preprocess(RgbImage(1, 1, {10, 20, 30}), spec).f == std::vector<float>{30, 20, 10});
    spec.mean = {1, 2, 3};
    spec.scale = {2, 2, 2};
    CHECK(preprocess(RgbImage(1, 1, {10, 20, 30}), spec).f == std::vector<float>{58, 36, 14});
  }
  SUBCASE("nhwc layout interleaves channels") {
    spec.input_size = 1;
    spec.layout = TensorLayout::kNhwc;
    const auto t = preprocess(RgbImage(1, 1, {1, 2, 3}), spec);
    CHECK(t.shape == std::vector<std::int64_t>{1, 1, 1, 3});
    CHECK(t.f == std::vector<float>{1, 2, 3});
  }
}

TEST_CASE("identity fixture returns the preprocessed pixels in NCHW order") {
  TempDir dir;
  const ModelSpec spec = synthetic::write_identity_fixture(dir / "identity.onnx");
  const FeatureExtractor ex(ModelSpec::load(dir / "identity.onnx"));
  RgbImage img(2, 2);
  img.set(0, 0, {1, 2, 3});
  img.set(1, 0, {4, 5, 6});
  img.set(0, 1, {7, 8, 9});
  img.set(1, 1, {10, 11, 12});
  const FeatureVector fv = ex.extract(img, "known");
  CHECK(fv.values == std::vector<float>{1, 4, 7, 10, 2, 5, 8, 11, 3, 6, 9, 12});
  CHECK(fv.model_id == "identity-fixture");
  CHECK(fv.layer_name == "flat");
  CHECK(fv.source_id == "known");
  CHECK(ex.extract(img, "again").values == fv.values);
}

TEST_CASE("pooling fixture layers match block-average oracles") {
  TempDir dir;
  synthetic::write_pooling_fixture(dir / "pool.onnx");
  Rng rng(3);
  RgbImage img(32, 32);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));

  ModelSpec spec = ModelSpec::load(dir / "pool.onnx");
  const auto grid = FeatureExtractor(spec).extract(img, "x").values;
  REQUIRE(grid.size() == 48);
  for (int c = 0; c < 3; ++c) {
    for (int by = 0; by < 4; ++by) {
      for (int bx = 0; bx < 4; ++bx) {
        const double want = oracle::block_mean(img.data, 32, c, bx * 8, by * 8, 8, 127.5, 1 / 127.5);
        CHECK(grid[c * 16 + by * 4 + bx] == doctest::Approx(want).epsilon(1e-5));
      }
    }
  }
  spec.layer_name = "global";
  const auto global = FeatureExtractor(spec).extract(img, "x").values;
  REQUIRE(global.size() == 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(global[c] == doctest::Approx(oracle::block_mean(img.data, 32, c, 0, 0, 32, 127.5, 1 / 127.5))
                           .epsilon(1e-5));
  }
  spec.layer_name = "constant";
  for (float v : FeatureExtractor(spec).extract(img, "x").values) CHECK(v == 1.0f);
  spec.layer_name = "fc";
  const auto fc = FeatureExtractor(spec).extract(img, "x").values;
  CHECK(fc.size() == 16);
  for (float v : fc) CHECK(v >= 0.0f);
}

TEST_CASE("extract resizes to the model input size") {
  TempDir dir;
  synthetic::write_pooling_fixture(dir / "pool.onnx");
  const FeatureExtractor ex(ModelSpec::load(dir / "pool.onnx"));
  const auto small = ex.extract(RgbImage(64, 64, {200, 100, 50}), "a").values;
  const auto exact = ex.extract(RgbImage(32, 32, {200, 100, 50}), "b").values;
  CHECK(small == exact);
}

TEST_CASE("unknown layers and missing sidecars are errors") {
  TempDir dir;
  ModelSpec spec = synthetic::write_pooling_fixture(dir / "pool.onnx");
  spec.layer_name = "no_such_tensor";
  CHECK_THROWS_AS(FeatureExtractor{spec}, Error);
  CHECK_THROWS_AS(ModelSpec::load(dir / "missing.onnx"), Error);
}

TEST_CASE("extract_batch preserves order and ids") {
  TempDir dir;
  const FeatureExtractor ex(synthetic::write_pooling_fixture(dir / "pool.onnx"));
  CHECK(ex.extract_batch(StimulusSet{}).empty());

  synthetic::ImageSetConfig cfg;
  const StimulusSet stimuli = synthetic::make_stimulus_images(cfg);
  std::vector<StimulusEntry> all = stimuli.entries();
  const StimulusSet patches = color_patch_set(32);
  for (const auto& e : patches.entries()) all.push_back(e);
  const StimulusSet set(all);
  const auto vectors = ex.extract_batch(set);
  REQUIRE(vectors.size() == 55);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    CHECK(vectors[i].source_id == set.entries()[i].image_id);
    CHECK(vectors[i].values == ex.extract(set.entries()[i].image, "").values);
    CHECK(vectors[i].dim() == 48);
  }
}

TEST_CASE("feature store round trip is exact") {
  TempDir dir;
  std::vector<FeatureVector> v(3);
  Rng rng(9);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i].source_id = "s" + std::to_string(i);
    v[i].model_id = "m";
    v[i].layer_name = "l";
    for (int j = 0; j < 7; ++j) v[i].values.push_back(static_cast<float>(rng.normal()));
  }
  FeatureStore::save(dir / "feat", v);
  for (const auto& path : {dir / "feat", dir / "feat.features.json", dir / "feat.features.bin"}) {
    const auto back = FeatureStore::load(path);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back[i].values == v[i].values);
      CHECK(back[i].source_id == v[i].source_id);
      CHECK(back[i].model_id == "m");
      CHECK(back[i].layer_name == "l");
    }
  }
  const Matrix m = to_matrix(v);
  CHECK(m.rows() == 3);
  CHECK(m(2, 6) == static_cast<double>(v[2].values[6]));
}
