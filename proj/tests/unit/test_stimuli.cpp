#include <doctest.h>

#include "emocolor/error.hpp"
#include "emocolor/stimuli.hpp"
#include "test_support.hpp"

using namespace emocolor;

TEST_CASE("color and emotion indices form the fixed bijection") {
  const char* colors[] = {"red", "green", "blue", "black", "yellow"};
  const char* emotions[] = {"anger", "disgust", "sadness", "fear", "happiness"};
  for (std::size_t i = 0; i < kNumColors; ++i) {
    const Color c = color_from_index(i);
    CHECK(index_of(c) == i);
    CHECK(name_of(c) == colors[i]);
    CHECK(parse_color(colors[i]) == c);
    const Emotion e = emotion_from_index(i);
    CHECK(name_of(e) == emotions[i]);
    CHECK(parse_emotion(emotions[i]) == e);
    CHECK(color_for_emotion(emotion_for_color(c)) == c);
  }
  CHECK(emotion_for_color(Color::kRed) == Emotion::kAnger);
  CHECK(emotion_for_color(Color::kBlack) == Emotion::kFear);
  CHECK_FALSE(parse_color("purple").has_value());
  CHECK_THROWS_AS(color_from_index(5), Error);
}

TEST_CASE("grayscale uses BT.601 luma") {
  RgbImage img(3, 1);
  img.set(0, 0, {255, 255, 255});
  img.set(1, 0, {0, 0, 0});
  img.set(2, 0, {255, 0, 0});
  const RgbImage g = to_grayscale(img);
  CHECK(g.at(0, 0) == Rgb{255, 255, 255});
  CHECK(g.at(1, 0) == Rgb{0, 0, 0});
  CHECK(g.at(2, 0) == Rgb{76, 76, 76});
}

TEST_CASE("grayscale is idempotent") {
  RgbImage img(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      img.set(x, y, {static_cast<std::uint8_t>(x * 16), static_cast<std::uint8_t>(y * 16),
                     static_cast<std::uint8_t>((x * y) % 256)});
    }
  }
  const RgbImage once = to_grayscale(img);
  CHECK(to_grayscale(once) == once);
}

TEST_CASE("bilinear resize") {
  SUBCASE("identity size") {
    RgbImage img(224, 224);
    for (int i = 0; i < 224; ++i) img.set(i, i, {1, 2, 3});
    CHECK(resize_224(img) == img);
  }
  SUBCASE("uniform gray downsample") {
    const RgbImage gray(448, 448, {128, 128, 128});
    const RgbImage out = resize_224(gray);
    CHECK(out.width == 224);
    CHECK(out == RgbImage(224, 224, {128, 128, 128}));
  }
  SUBCASE("checkerboard corners keep their values") {
    RgbImage board(2, 2);
    board.set(0, 0, {0, 0, 0});
    board.set(1, 0, {255, 255, 255});
    board.set(0, 1, {255, 255, 255});
    board.set(1, 1, {0, 0, 0});
    const RgbImage out = resize_224(board);
    CHECK(out.at(0, 0) == Rgb{0, 0, 0});
    CHECK(out.at(223, 0) == Rgb{255, 255, 255});
    CHECK(out.at(0, 223) == Rgb{255, 255, 255});
    CHECK(out.at(223, 223) == Rgb{0, 0, 0});
  }
  SUBCASE("zero-dimension input") { CHECK_THROWS_AS(resize_224(RgbImage{}), Error); }
}

TEST_CASE("color patches are constant swatches") {
  CHECK(make_color_patch(Color::kBlack, 8) == RgbImage(8, 8, {0, 0, 0}));
  CHECK(make_color_patch(Color::kRed, 8) == RgbImage(8, 8, {255, 0, 0}));
  CHECK(make_color_patch(Color::kYellow, 8) == RgbImage(8, 8, {255, 255, 0}));
  CHECK(make_color_patch(Color::kRed).width == kModelInputSize);
  CHECK(to_grayscale(make_color_patch(Color::kBlack, 4)) == RgbImage(4, 4, {0, 0, 0}));
}

TEST_CASE("PNG round trip and manifest save/load") {
  TempDir dir;
  RgbImage img(5, 3);
  img.set(2, 1, {10, 200, 30});
  CHECK(decode_image(std::span<const std::uint8_t>(
            reinterpret_cast<const std::uint8_t*>(encode_png(img).data()), encode_png(img).size())) ==
        img);

  std::vector<StimulusEntry> entries;
  entries.push_back({"a", "a.png", img, Emotion::kFear});
  entries.push_back({"b", "b.png", RgbImage(2, 2, {9, 9, 9}), std::nullopt});
  StimulusSet(entries).save(dir / "manifest.json");
  const StimulusSet loaded = StimulusSet::load_manifest(dir / "manifest.json");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.ids() == std::vector<std::string>{"a", "b"});
  CHECK(loaded.find("a")->image == img);
  CHECK(loaded.find("a")->true_emotion == Emotion::kFear);
  CHECK_FALSE(loaded.find("b")->true_emotion.has_value());
  CHECK(loaded.find("zzz") == nullptr);
}

TEST_CASE("stimulus sets reject duplicate or empty ids") {
  CHECK_THROWS_AS(StimulusSet({{"x", "x.png", RgbImage(1, 1), {}}, {"x", "y.png", RgbImage(1, 1), {}}}),
                  Error);
  CHECK_THROWS_AS(StimulusSet({{"", "x.png", RgbImage(1, 1), {}}}), Error);
  CHECK_THROWS_AS(StimulusSet::load_manifest("/nonexistent/manifest.json"), Error);
}

TEST_CASE("color patch set has one entry per color in index order") {
  const StimulusSet set = color_patch_set(4);
  REQUIRE(set.size() == kNumColors);
  for (std::size_t i = 0; i < kNumColors; ++i) {
    CHECK(set.entries()[i].image_id == name_of(color_from_index(i)));
    CHECK(set.entries()[i].image == make_color_patch(color_from_index(i), 4));
  }
}
