#include "emocolor/stimuli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "emocolor/error.hpp"

namespace emocolor {

namespace {

constexpr std::array<std::string_view, kNumColors> kColorNames = {"red", "green", "blue",
                                                                 "black", "yellow"};
constexpr std::array<std::string_view, kNumColors> kEmotionNames = {
    "anger", "disgust", "sadness", "fear", "happiness"};

std::uint8_t clamp_round(double v) {
  const long r = std::lround(v);
  return static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
}

RgbImage from_mat(const cv::Mat& bgr) {
  RgbImage img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.set(x, y, {row[x][2], row[x][1], row[x][0]});
    }
  }
  return img;
}

cv::Mat to_mat(const RgbImage& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      const Rgb p = img.at(x, y);
      row[x] = cv::Vec3b(p.b, p.g, p.r);
    }
  }
  return bgr;
}

cv::Mat normalize_channels(const cv::Mat& m) {
  cv::Mat out;
  if (m.depth() != CV_8U) {
    double scale = m.depth() == CV_16U ? 1.0 / 257.0 : 1.0;
    m.convertTo(out, CV_8U, scale);
  } else {
    out = m;
  }
  if (out.channels() == 1) {
    cv::Mat merged;
    cv::Mat planes[] = {out, out, out};
    cv::merge(planes, 3, merged);
    return merged;
  }
  if (out.channels() == 4) {
    // Drop alpha.
    cv::Mat bgr(out.rows, out.cols, CV_8UC3);
    int from_to[] = {0, 0, 1, 1, 2, 2};
    cv::mixChannels(&out, 1, &bgr, 1, from_to, 3);
    return bgr;
  }
  return out;
}

}  // namespace

Color color_from_index(std::size_t index) {
  if (index >= kNumColors) {
    fail(ErrorKind::kInvalidArgument, "color index out of range: " + std::to_string(index));
  }
  return static_cast<Color>(index);
}

Emotion emotion_from_index(std::size_t index) {
  if (index >= kNumColors) {
    fail(ErrorKind::kInvalidArgument, "emotion index out of range: " + std::to_string(index));
  }
  return static_cast<Emotion>(index);
}

std::string_view name_of(Color c) { return kColorNames[index_of(c)]; }
std::string_view name_of(Emotion e) { return kEmotionNames[index_of(e)]; }

std::optional<Color> parse_color(std::string_view name) {
  for (std::size_t i = 0; i < kNumColors; ++i) {
    if (kColorNames[i] == name) return static_cast<Color>(i);
  }
  return std::nullopt;
}

std::optional<Emotion> parse_emotion(std::string_view name) {
  for (std::size_t i = 0; i < kNumColors; ++i) {
    if (kEmotionNames[i] == name) return static_cast<Emotion>(i);
  }
  return std::nullopt;
}

Rgb swatch_rgb(Color c) {
  switch (c) {
    case Color::kRed: return {255, 0, 0};
    case Color::kGreen: return {0, 255, 0};
    case Color::kBlue: return {0, 0, 255};
    case Color::kBlack: return {0, 0, 0};
    case Color::kYellow: return {255, 255, 0};
  }
  return {};
}

RgbImage::RgbImage(int w, int h, Rgb fill) : width(w), height(h) {
  if (w < 0 || h < 0) fail(ErrorKind::kInvalidArgument, "negative image dimensions");
  data.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < data.size(); i += 3) {
    data[i] = fill.r;
    data[i + 1] = fill.g;
    data[i + 2] = fill.b;
  }
}

Rgb RgbImage::at(int x, int y) const {
  const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
  return {data[o], data[o + 1], data[o + 2]};
}

void RgbImage::set(int x, int y, Rgb p) {
  const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
  data[o] = p.r;
  data[o + 1] = p.g;
  data[o + 2] = p.b;
}

RgbImage to_grayscale(const RgbImage& img) {
  RgbImage out = img;
  for (std::size_t i = 0; i + 2 < out.data.size(); i += 3) {
    const double luma = 0.299 * img.data[i] + 0.587 * img.data[i + 1] + 0.114 * img.data[i + 2];
    const std::uint8_t g = clamp_round(luma);
    out.data[i] = out.data[i + 1] = out.data[i + 2] = g;
  }
  return out;
}

RgbImage resize_bilinear(const RgbImage& img, int width, int height) {
  if (!img.valid()) fail(ErrorKind::kInvalidArgument, "resize: input image has zero dimension");
  if (width <= 0 || height <= 0) fail(ErrorKind::kInvalidArgument, "resize: zero target size");
  if (width == img.width && height == img.height) return img;

  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  RgbImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const Rgb p00 = img.at(x0, y0), p01 = img.at(x1, y0);
      const Rgb p10 = img.at(x0, y1), p11 = img.at(x1, y1);
      auto mix = [&](std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
        const double top = a + (b - a) * wx;
        const double bottom = c + (d - c) * wx;
        return clamp_round(top + (bottom - top) * wy);
      };
      out.set(x, y,
              {mix(p00.r, p01.r, p10.r, p11.r), mix(p00.g, p01.g, p10.g, p11.g),
               mix(p00.b, p01.b, p10.b, p11.b)});
    }
  }
  return out;
}

RgbImage make_color_patch(Color c, int size) { return RgbImage(size, size, swatch_rgb(c)); }

RgbImage read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorKind::kNotFound, "image not found: " + path.string());
  }
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) fail(ErrorKind::kFormat, "cannot decode image: " + path.string());
  return from_mat(normalize_channels(m));
}

RgbImage decode_image(std::span<const std::uint8_t> bytes) {
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1,
                    const_cast<std::uint8_t*>(bytes.data()));
  const cv::Mat m = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  if (m.empty()) fail(ErrorKind::kFormat, "cannot decode image bytes");
  return from_mat(normalize_channels(m));
}

std::string encode_png(const RgbImage& img) {
  if (!img.valid()) fail(ErrorKind::kInvalidArgument, "cannot encode an empty image");
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", to_mat(img), buf)) fail(ErrorKind::kIo, "PNG encoding failed");
  return {buf.begin(), buf.end()};
}

void write_png(const RgbImage& img, const std::filesystem::path& path) {
  const std::string bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

StimulusSet::StimulusSet(std::vector<StimulusEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) fail(ErrorKind::kInvalidArgument, "stimulus set is empty");
  std::set<std::string_view> seen;
  for (const auto& e : entries_) {
    if (e.image_id.empty()) fail(ErrorKind::kInvalidArgument, "empty image_id in stimulus set");
    if (!seen.insert(e.image_id).second) {
      fail(ErrorKind::kInvalidArgument, "duplicate image_id: " + e.image_id);
    }
  }
}

StimulusSet StimulusSet::load_manifest(const std::filesystem::path& manifest_path,
                                       bool load_images) {
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::kNotFound, "manifest not found: " + manifest_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!doc.contains("stimuli") || !doc["stimuli"].is_array()) {
    fail(ErrorKind::kFormat, "manifest lacks a \"stimuli\" array: " + manifest_path.string());
  }
  const auto base = manifest_path.parent_path();
  std::vector<StimulusEntry> entries;
  for (const auto& item : doc["stimuli"]) {
    StimulusEntry entry;
    try {
      entry.image_id = item.at("image_id").get<std::string>();
      entry.file = item.at("file").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, "manifest entry: " + std::string(e.what()));
    }
    if (item.contains("emotion") && !item["emotion"].is_null()) {
      const auto name = item["emotion"].get<std::string>();
      entry.true_emotion = parse_emotion(name);
      if (!entry.true_emotion) {
        fail(ErrorKind::kFormat, "unknown emotion '" + name + "' for " + entry.image_id);
      }
    }
    if (load_images) entry.image = read_image(base / entry.file);
    entries.push_back(std::move(entry));
  }
  return StimulusSet(std::move(entries));
}

void StimulusSet::save(const std::filesystem::path& manifest_path) const {
  const auto base = manifest_path.parent_path();
  if (!base.empty()) std::filesystem::create_directories(base);
  nlohmann::json items = nlohmann::json::array();
  for (const auto& e : entries_) {
    write_png(e.image, base / e.file);
    nlohmann::json item = {{"image_id", e.image_id}, {"file", e.file.generic_string()}};
    if (e.true_emotion) item["emotion"] = name_of(*e.true_emotion);
    items.push_back(std::move(item));
  }
  std::ofstream out(manifest_path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + manifest_path.string());
  out << nlohmann::json{{"stimuli", items}}.dump(2) << '\n';
}

std::vector<std::string> StimulusSet::ids() const {
  std::vector<std::string> ids;
  ids.reserve(entries_.size());
  for (const auto& e : entries_) ids.push_back(e.image_id);
  return ids;
}

const StimulusEntry* StimulusSet::find(std::string_view image_id) const {
  for (const auto& e : entries_) {
    if (e.image_id == image_id) return &e;
  }
  return nullptr;
}

StimulusSet color_patch_set(int size) {
  std::vector<StimulusEntry> entries;
  for (Color c : kAllColors) {
    entries.push_back({std::string(name_of(c)), std::string(name_of(c)) + ".png",
                       make_color_patch(c, size), std::nullopt});
  }
  return StimulusSet(std::move(entries));
}

}  // namespace emocolor
