#include "dnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

#include "dnet/error.hpp"

namespace dnet {
namespace fs = std::filesystem;

std::string GrayImage::id() const {
  if (!source) return {};
  return fs::path(*source).stem().string();
}

namespace {

std::string lower_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

GrayImage load_png(const fs::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw ImageError(ImageError::Kind::Unreadable, "cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ImageError(ImageError::Kind::UnsupportedFormat, path.string() + " is not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageError(ImageError::Kind::Unreadable, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageError(ImageError::Kind::Unreadable, "libpng init failed");
  }

  GrayImage img;
  std::vector<unsigned char> buffer;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError(ImageError::Kind::Unreadable, "corrupt PNG data in " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int out_depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  if (width == 0 || height == 0) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError(ImageError::Kind::EmptyImage, path.string() + " has zero size");
  }
  buffer.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = GrayImage(height, width);
  img.bit_depth = out_depth == 16 ? 16 : 8;
  const double scale = out_depth == 16 ? 65535.0 : 255.0;
  const std::size_t bytes = out_depth == 16 ? 2 : 1;
  for (std::size_t y = 0; y < height; ++y) {
    const unsigned char* row = rows[y];
    for (std::size_t x = 0; x < width; ++x) {
      double ch[3] = {0, 0, 0};
      for (int c = 0; c < channels && c < 3; ++c) {
        const unsigned char* p = row + (x * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)) * bytes;
        const unsigned v = bytes == 2 ? (static_cast<unsigned>(p[0]) << 8) | p[1] : p[0];
        ch[c] = v / scale;
      }
      img.at(y, x) = channels >= 3 ? bt601_luma(ch[0], ch[1], ch[2]) : ch[0];
    }
  }
  return img;
}

// Reads the next whitespace-delimited PNM header token, skipping comments.
bool next_token(std::istream& in, std::string& token) {
  token.clear();
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (!std::isspace(c)) break;
  }
  if (c == EOF) return false;
  token.push_back(static_cast<char>(c));
  while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#') token.push_back(static_cast<char>(in.get()));
  return true;
}

GrayImage load_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError(ImageError::Kind::Unreadable, "cannot open " + path.string());
  std::string magic, ws, hs, ms;
  if (!next_token(in, magic) || magic != "P5") {
    throw ImageError(ImageError::Kind::UnsupportedFormat, path.string() + " is not a binary PGM (P5)");
  }
  if (!next_token(in, ws) || !next_token(in, hs) || !next_token(in, ms)) {
    throw ImageError(ImageError::Kind::Unreadable, "truncated PGM header in " + path.string());
  }
  unsigned long width = 0, height = 0, maxval = 0;
  try {
    width = std::stoul(ws);
    height = std::stoul(hs);
    maxval = std::stoul(ms);
  } catch (const std::exception&) {
    throw ImageError(ImageError::Kind::Unreadable, "malformed PGM header in " + path.string());
  }
  if (width == 0 || height == 0) throw ImageError(ImageError::Kind::EmptyImage, path.string() + " has zero size");
  if (maxval == 0 || maxval > 65535) {
    throw ImageError(ImageError::Kind::UnsupportedFormat, "unsupported PGM maxval in " + path.string());
  }
  in.get();  // single whitespace after maxval
  const std::size_t bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(width * height * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw ImageError(ImageError::Kind::Unreadable, "truncated PGM data in " + path.string());
  }
  GrayImage img(height, width);
  img.bit_depth = bytes == 2 ? 16 : 8;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const unsigned v = bytes == 2 ? (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
    img.pixels[i] = std::min(1.0, v / static_cast<double>(maxval));
  }
  return img;
}

std::vector<unsigned char> quantize(const GrayImage& img) {
  std::vector<unsigned char> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    out[i] = static_cast<unsigned char>(std::round(v * 255.0));
  }
  return out;
}

void save_png(const GrayImage& img, const fs::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw ImageError(ImageError::Kind::WriteFailed, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageError(ImageError::Kind::WriteFailed, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageError(ImageError::Kind::WriteFailed, "libpng init failed");
  }
  std::vector<unsigned char> bytes = quantize(img);
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = bytes.data() + y * img.width;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageError(ImageError::Kind::WriteFailed, "PNG encoding failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void save_pgm(const GrayImage& img, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError(ImageError::Kind::WriteFailed, "cannot write " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  const std::vector<unsigned char> bytes = quantize(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError(ImageError::Kind::WriteFailed, "short write to " + path.string());
}

}  // namespace

GrayImage load_image(const fs::path& path) {
  if (!fs::exists(path)) throw ImageError(ImageError::Kind::Unreadable, "no such file: " + path.string());
  const std::string ext = lower_extension(path);
  GrayImage img;
  if (ext == ".png") {
    img = load_png(path);
  } else if (ext == ".pgm") {
    img = load_pgm(path);
  } else {
    throw ImageError(ImageError::Kind::UnsupportedFormat, "unsupported image extension '" + ext + "'");
  }
  img.source = path.string();
  return img;
}

void save_image(const GrayImage& img, const fs::path& path) {
  if (img.height == 0 || img.width == 0 || img.pixels.size() != img.height * img.width) {
    throw ImageError(ImageError::Kind::EmptyImage, "refusing to save an empty image");
  }
  for (double v : img.pixels) {
    if (!std::isfinite(v)) throw NumericError("cannot save image with non-finite pixels");
  }
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    save_png(img, path);
  } else if (ext == ".pgm") {
    save_pgm(img, path);
  } else {
    throw ImageError(ImageError::Kind::UnsupportedFormat, "unsupported output extension '" + ext + "'");
  }
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ImageError(ImageError::Kind::Unreadable, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lower_extension(entry.path());
    if (ext == ".png" || ext == ".pgm") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<GrayImage> load_directory(const fs::path& dir) {
  std::vector<GrayImage> images;
  for (const auto& p : list_images(dir)) images.push_back(load_image(p));
  return images;
}

Tensor image_to_tensor(const GrayImage& img, double shift) {
  Tensor t(Shape{1, img.height, img.width, 1});
  for (std::size_t i = 0; i < img.size(); ++i) t[i] = img.pixels[i] + shift;
  return t;
}

Tensor to_net_range(const GrayImage& img) { return image_to_tensor(img, -0.5); }

GrayImage from_net_range(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("from_net_range expects (1,h,w,1), got " + s.str());
  GrayImage img(s.h, s.w);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = std::clamp(t[i] + 0.5, 0.0, 1.0);
  return img;
}

GrayImage clamp01(const GrayImage& img) {
  GrayImage out = img;
  for (double& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace dnet

namespace dnet {

std::size_t LabeledCorpus::count_of(std::size_t label) const {
  std::size_t n = 0;
  for (const auto& item : items) n += item.label == label ? 1 : 0;
  return n;
}

LabeledCorpus load_labeled_directory(const fs::path& root) {
  if (!fs::is_directory(root)) throw ImageError(ImageError::Kind::Unreadable, "not a directory: " + root.string());
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  LabeledCorpus corpus;
  for (const auto& dir : class_dirs) {
    const std::size_t label = corpus.class_names.size();
    corpus.class_names.push_back(dir.filename().string());
    for (const auto& p : list_images(dir)) corpus.items.push_back({load_image(p), label});
  }
  return corpus;
}

}  // namespace dnet
