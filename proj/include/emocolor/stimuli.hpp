#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emocolor {

inline constexpr std::size_t kNumColors = 5;
inline constexpr int kModelInputSize = 224;

/// The five response swatches. Index order is fixed and shared with every
/// table, CSV column and permutation sequence in the project.
enum class Color : std::uint8_t { kRed = 0, kGreen = 1, kBlue = 2, kBlack = 3, kYellow = 4 };

/// Emotions paired one-to-one with colors; the enum value equals the index of
/// the associated color.
enum class Emotion : std::uint8_t {
  kAnger = 0,
  kDisgust = 1,
  kSadness = 2,
  kFear = 3,
  kHappiness = 4,
};

inline constexpr std::array<Color, kNumColors> kAllColors = {
    Color::kRed, Color::kGreen, Color::kBlue, Color::kBlack, Color::kYellow};
inline constexpr std::array<Emotion, kNumColors> kAllEmotions = {
    Emotion::kAnger, Emotion::kDisgust, Emotion::kSadness, Emotion::kFear,
    Emotion::kHappiness};

constexpr std::size_t index_of(Color c) { return static_cast<std::size_t>(c); }
constexpr std::size_t index_of(Emotion e) { return static_cast<std::size_t>(e); }

Color color_from_index(std::size_t index);
Emotion emotion_from_index(std::size_t index);

std::string_view name_of(Color c);
std::string_view name_of(Emotion e);
std::optional<Color> parse_color(std::string_view name);
std::optional<Emotion> parse_emotion(std::string_view name);

constexpr Emotion emotion_for_color(Color c) { return static_cast<Emotion>(index_of(c)); }
constexpr Color color_for_emotion(Emotion e) { return static_cast<Color>(index_of(e)); }

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Full-saturation swatch color used for patches and for the experiment UI.
Rgb swatch_rgb(Color c);

/// 8-bit RGB image, row-major, three interleaved channels.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {});

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb p);
  bool valid() const {
    return width > 0 && height > 0 &&
           data.size() == static_cast<std::size_t>(width) * height * 3;
  }
  bool operator==(const RgbImage&) const = default;
};

/// BT.601 luma replicated into all three channels.
RgbImage to_grayscale(const RgbImage& img);

/// Bilinear resize with half-pixel centres and edge clamping.
RgbImage resize_bilinear(const RgbImage& img, int width, int height);
inline RgbImage resize_224(const RgbImage& img) {
  return resize_bilinear(img, kModelInputSize, kModelInputSize);
}

RgbImage make_color_patch(Color c, int size = kModelInputSize);

RgbImage read_image(const std::filesystem::path& path);
RgbImage decode_image(std::span<const std::uint8_t> bytes);
std::string encode_png(const RgbImage& img);
void write_png(const RgbImage& img, const std::filesystem::path& path);

struct StimulusEntry {
  std::string image_id;
  std::filesystem::path file;  // relative to the manifest directory
  RgbImage image;
  std::optional<Emotion> true_emotion;
};

/// Stimulus images plus optional ground-truth emotions, loaded from a JSON
/// manifest: {"stimuli": [{"image_id", "file", "emotion"?}, ...]}.
class StimulusSet {
 public:
  StimulusSet() = default;
  explicit StimulusSet(std::vector<StimulusEntry> entries);

  static StimulusSet load_manifest(const std::filesystem::path& manifest_path,
                                   bool load_images = true);
  /// Writes images as PNG next to the manifest and the manifest itself.
  void save(const std::filesystem::path& manifest_path) const;

  const std::vector<StimulusEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> ids() const;
  const StimulusEntry* find(std::string_view image_id) const;

 private:
  std::vector<StimulusEntry> entries_;
};

/// The five color patches as a stimulus set with image ids equal to color
/// names, in color index order.
StimulusSet color_patch_set(int size = kModelInputSize);

}  // namespace emocolor
