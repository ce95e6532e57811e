#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dnet/tensor.hpp"

namespace dnet {

// Single-channel image with pixels nominally in [0,1], row-major.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;
  std::optional<std::string> source;
  int bit_depth = 8;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::size_t size() const { return pixels.size(); }
  // File stem of the source path, or an empty string.
  std::string id() const;
};

// ITU-R BT.601 luma on [0,1] channels.
inline double bt601_luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// PNG (gray, gray+alpha, RGB, RGBA, palette; 8 or 16 bit) or binary PGM (P5).
GrayImage load_image(const std::filesystem::path& path);

// Clamps to [0,1], quantizes with round-half-away-from-zero to 8 bits and
// writes PNG or PGM depending on the extension.
void save_image(const GrayImage& img, const std::filesystem::path& path);

// Sorted list of loadable images (.png/.pgm) in a directory.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);
std::vector<GrayImage> load_directory(const std::filesystem::path& dir);

// [0,1] -> [-0.5,0.5]; result has shape (1,h,w,1).
Tensor to_net_range(const GrayImage& img);
// Shifts back by +0.5 and clamps to [0,1]. Requires shape (1,h,w,1).
GrayImage from_net_range(const Tensor& t);

// Same as to_net_range but without any range assumption (used for noisy inputs).
Tensor image_to_tensor(const GrayImage& img, double shift = 0.0);

GrayImage clamp01(const GrayImage& img);

}  // namespace dnet

namespace dnet {

struct LabeledImage {
  GrayImage image;
  std::size_t label = 0;
};

// Images grouped by class; class_names[i] names label i.
struct LabeledCorpus {
  std::vector<std::string> class_names;
  std::vector<LabeledImage> items;

  std::size_t count_of(std::size_t label) const;
};

// Directory-per-class layout: root/<class name>/*.png|*.pgm. Classes are
// ordered by name.
LabeledCorpus load_labeled_directory(const std::filesystem::path& root);

}  // namespace dnet
