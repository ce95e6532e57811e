#include "dnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace dnet {
namespace fs = std::filesystem;

namespace {

double coverage(double signed_distance) { return std::clamp(0.5 + signed_distance, 0.0, 1.0); }

std::string indexed_id(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu", prefix, i);
  return buf;
}

}  // namespace

GrayImage synth_scene(std::size_t height, std::size_t width, SeededRng& rng) {
  GrayImage img(height, width);
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  const double base = 0.25 + 0.5 * rng.uniform();
  const double gx = (rng.uniform() - 0.5) * 0.4 / w;
  const double gy = (rng.uniform() - 0.5) * 0.4 / h;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) img.at(y, x) = base + gx * static_cast<double>(x) + gy * static_cast<double>(y);
  }

  const std::size_t shapes = 6 + rng.uniform_index(8);
  const double scale = std::min(h, w);
  for (std::size_t s = 0; s < shapes; ++s) {
    const bool ellipse = rng.bernoulli(0.5);
    const double cx = rng.uniform() * w;
    const double cy = rng.uniform() * h;
    const double ra = scale * (0.06 + 0.25 * rng.uniform());
    const double rb = scale * (0.06 + 0.25 * rng.uniform());
    const double angle = rng.uniform() * std::numbers::pi;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double level = 0.05 + 0.9 * rng.uniform();
    const double shade = (rng.uniform() - 0.5) * 0.3 / std::max(ra, rb);
    const bool textured = rng.bernoulli(0.3);
    const double tex_amp = 0.04 + 0.1 * rng.uniform();
    const double tex_freq = 2.0 * std::numbers::pi / (4.0 + 12.0 * rng.uniform());
    const double tex_dir = rng.uniform() * std::numbers::pi;
    const double tdx = std::cos(tex_dir), tdy = std::sin(tex_dir);

    const double reach = std::max(ra, rb) + 2.0;
    const auto y0 = static_cast<std::size_t>(std::clamp(cy - reach, 0.0, h));
    const auto y1 = static_cast<std::size_t>(std::clamp(cy + reach, 0.0, h));
    const auto x0 = static_cast<std::size_t>(std::clamp(cx - reach, 0.0, w));
    const auto x1 = static_cast<std::size_t>(std::clamp(cx + reach, 0.0, w));
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double dy = static_cast<double>(y) + 0.5 - cy;
        const double u = ca * dx + sa * dy;
        const double v = -sa * dx + ca * dy;
        double sd;
        if (ellipse) {
          const double r = std::hypot(u / ra, v / rb);
          sd = (1.0 - r) * std::min(ra, rb);
        } else {
          sd = std::min(ra - std::fabs(u), rb - std::fabs(v));
        }
        const double a = coverage(sd);
        if (a <= 0.0) continue;
        double value = level + shade * u;
        if (textured) value += tex_amp * std::sin(tex_freq * (tdx * dx + tdy * dy));
        img.at(y, x) = (1.0 - a) * img.at(y, x) + a * value;
      }
    }
  }
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

GrayImage synth_texture(TextureKind kind, std::size_t height, std::size_t width, SeededRng& rng) {
  GrayImage img(height, width);
  const double mean = 0.4 + 0.2 * rng.uniform();
  const double contrast = 0.3 + 0.3 * rng.uniform();
  const double period = 12.0 + 12.0 * rng.uniform();
  const double phase_x = rng.uniform() * period;
  const double phase_y = rng.uniform() * period;
  const bool vertical = rng.bernoulli(0.5);
  const double gx = (rng.uniform() - 0.5) * 0.3 / static_cast<double>(width);
  const double gy = (rng.uniform() - 0.5) * 0.3 / static_cast<double>(height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) + phase_x;
      const double fy = static_cast<double>(y) + phase_y;
      double v = mean;
      switch (kind) {
        case TextureKind::Stripes: {
          const double t = vertical ? fx : fy;
          v += (std::fmod(t, period) < period / 2 ? 0.5 : -0.5) * contrast;
          break;
        }
        case TextureKind::Checks: {
          const bool a = std::fmod(fx, period) < period / 2;
          const bool b = std::fmod(fy, period) < period / 2;
          v += (a == b ? 0.5 : -0.5) * contrast;
          break;
        }
        case TextureKind::Flat:
          v += gx * static_cast<double>(x) + gy * static_cast<double>(y);
          break;
      }
      img.at(y, x) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

std::vector<GrayImage> synth_scene_corpus(std::size_t count, std::size_t height, std::size_t width,
                                          std::uint64_t seed) {
  std::vector<GrayImage> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SeededRng rng = SeededRng::stream(seed, i, 0x5CE7E);
    GrayImage img = synth_scene(height, width, rng);
    img.source = indexed_id("scene", i) + ".png";
    out.push_back(std::move(img));
  }
  return out;
}

LabeledCorpus synth_texture_corpus(std::size_t per_class, std::size_t side, std::uint64_t seed) {
  LabeledCorpus corpus;
  corpus.class_names = {"checks", "flat", "stripes"};
  const TextureKind kinds[] = {TextureKind::Checks, TextureKind::Flat, TextureKind::Stripes};
  for (std::size_t label = 0; label < 3; ++label) {
    for (std::size_t i = 0; i < per_class; ++i) {
      SeededRng rng = SeededRng::stream(seed, label * 1000003 + i, 0x7E47);
      GrayImage img = synth_texture(kinds[label], side, side, rng);
      img.source = corpus.class_names[label] + "/" + indexed_id(corpus.class_names[label].c_str(), i) + ".png";
      corpus.items.push_back({std::move(img), label});
    }
  }
  return corpus;
}

void write_corpus(const std::vector<GrayImage>& images, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::string id = images[i].id();
    if (id.empty()) id = indexed_id("image", i);
    save_image(images[i], dir / (id + ".png"));
  }
}

void write_corpus(const LabeledCorpus& corpus, const fs::path& dir) {
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    const auto& item = corpus.items[i];
    const fs::path class_dir = dir / corpus.class_names.at(item.label);
    fs::create_directories(class_dir);
    std::string id = item.image.id();
    if (id.empty()) id = indexed_id("image", i);
    save_image(item.image, class_dir / (id + ".png"));
  }
}

}  // namespace dnet
