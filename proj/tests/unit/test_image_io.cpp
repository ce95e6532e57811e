#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "dnet/error.hpp"
#include "dnet/image_io.hpp"
#include "dnet/noise.hpp"
#include "helpers.hpp"

using namespace dnet;
namespace fs = std::filesystem;

namespace {

GrayImage random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  SeededRng rng(seed);
  GrayImage img(h, w);
  for (auto& p : img.pixels) p = rng.uniform();
  return img;
}

// Writes an 8-bit RGB PNG straight through libpng.
void write_rgb_png(const fs::path& path, std::size_t h, std::size_t w, const std::vector<unsigned char>& rgb) {
  FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + y * w * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

}  // namespace

TEST_CASE("PNG and PGM round trips stay within half a quantization step") {
  testutil::TempDir dir("img");
  const GrayImage img = random_image(17, 23, 1);
  for (const char* name : {"a.png", "a.pgm", "A.PNG"}) {
    save_image(img, dir / name);
    const GrayImage back = load_image(dir / name);
    REQUIRE(back.height == 17);
    REQUIRE(back.width == 23);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 1.0 / 510 + 1e-12);
  }
}

TEST_CASE("saving clamps out-of-range pixels and rejects non-finite ones") {
  testutil::TempDir dir("img");
  GrayImage img(2, 2);
  img.pixels = {-0.3, 1.7, 0.5, 1.0};
  save_image(img, dir / "c.png");
  const GrayImage back = load_image(dir / "c.png");
  CHECK(back.pixels[0] == 0.0);
  CHECK(back.pixels[1] == 1.0);
  CHECK(back.pixels[2] == doctest::Approx(128.0 / 255.0));
  img.pixels[0] = std::nan("");
  CHECK_THROWS_AS(save_image(img, dir / "n.png"), NumericError);
}

TEST_CASE("RGB PNG is converted to BT.601 luma") {
  testutil::TempDir dir("img");
  const std::vector<unsigned char> rgb = {255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 200, 90};
  write_rgb_png(dir / "rgb.png", 2, 2, rgb);
  const GrayImage img = load_image(dir / "rgb.png");
  REQUIRE(img.height == 2);
  REQUIRE(img.width == 2);
  CHECK(img.pixels[0] == doctest::Approx(0.299));
  CHECK(img.pixels[1] == doctest::Approx(0.587));
  CHECK(img.pixels[2] == doctest::Approx(0.114));
  CHECK(img.pixels[3] == doctest::Approx(bt601_luma(10 / 255.0, 200 / 255.0, 90 / 255.0)));
  CHECK(img.id() == "rgb");
}

TEST_CASE("16-bit PGM with a comment in the header") {
  testutil::TempDir dir("img");
  {
    std::ofstream out(dir / "deep.pgm", std::ios::binary);
    out << "P5\n# made by hand\n2 1\n65535\n";
    const unsigned char data[4] = {0xFF, 0xFF, 0x80, 0x00};
    out.write(reinterpret_cast<const char*>(data), 4);
  }
  const GrayImage img = load_image(dir / "deep.pgm");
  CHECK(img.bit_depth == 16);
  CHECK(img.pixels[0] == 1.0);
  CHECK(img.pixels[1] == doctest::Approx(32768.0 / 65535.0));
}

TEST_CASE("image loading errors carry a kind") {
  testutil::TempDir dir("img");
  auto kind_of = [](const fs::path& p) {
    try {
      load_image(p);
    } catch (const ImageError& e) {
      return e.kind();
    }
    FAIL("expected ImageError");
    return ImageError::Kind::WriteFailed;
  };
  CHECK(kind_of(dir / "missing.png") == ImageError::Kind::Unreadable);
  { std::ofstream(dir / "x.bmp") << "BM"; }
  CHECK(kind_of(dir / "x.bmp") == ImageError::Kind::UnsupportedFormat);
  { std::ofstream(dir / "fake.png") << "definitely not a png"; }
  CHECK(kind_of(dir / "fake.png") == ImageError::Kind::UnsupportedFormat);
  { std::ofstream(dir / "p2.pgm") << "P2\n1 1\n255\n0\n"; }
  CHECK(kind_of(dir / "p2.pgm") == ImageError::Kind::UnsupportedFormat);
  { std::ofstream(dir / "short.pgm", std::ios::binary) << "P5\n4 4\n255\nab"; }
  CHECK(kind_of(dir / "short.pgm") == ImageError::Kind::Unreadable);
  { std::ofstream(dir / "zero.pgm", std::ios::binary) << "P5\n0 4\n255\n"; }
  CHECK(kind_of(dir / "zero.pgm") == ImageError::Kind::EmptyImage);
  CHECK_THROWS_AS(save_image(GrayImage{}, dir / "e.png"), ImageError);
}

TEST_CASE("network range mapping") {
  GrayImage img(1, 3);
  img.pixels = {0.0, 0.25, 1.0};
  const Tensor t = to_net_range(img);
  CHECK(t.shape() == Shape{1, 1, 3, 1});
  CHECK(t[0] == -0.5);
  CHECK(t[1] == -0.25);
  CHECK(t[2] == 0.5);
  CHECK(from_net_range(t).pixels == img.pixels);
  const Tensor wild({1, 1, 2, 1}, std::vector<double>{-0.9, 0.8});
  CHECK(from_net_range(wild).pixels == std::vector<double>{0.0, 1.0});
  CHECK_THROWS_AS(from_net_range(Tensor({1, 2, 2, 2})), ShapeError);
  const GrayImage r = random_image(5, 4, 9);
  const GrayImage back = from_net_range(to_net_range(r));
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(back.pixels[i] == doctest::Approx(r.pixels[i]).epsilon(1e-15));
}

TEST_CASE("directory listing is sorted and filtered") {
  testutil::TempDir dir("img");
  const GrayImage img = random_image(4, 4, 2);
  save_image(img, dir / "b.png");
  save_image(img, dir / "a.pgm");
  { std::ofstream(dir / "notes.txt") << "x"; }
  const auto files = list_images(dir.path());
  REQUIRE(files.size() == 2);
  CHECK(files[0].filename() == "a.pgm");
  CHECK(files[1].filename() == "b.png");
  const auto imgs = load_directory(dir.path());
  CHECK(imgs[0].id() == "a");
  CHECK(imgs[1].id() == "b");
}

TEST_CASE("labeled directory orders classes by name") {
  testutil::TempDir dir("img");
  const GrayImage img = random_image(4, 4, 3);
  fs::create_directories(dir / "zebra");
  fs::create_directories(dir / "apple");
  save_image(img, dir / "zebra" / "z1.png");
  save_image(img, dir / "apple" / "a1.png");
  save_image(img, dir / "apple" / "a2.png");
  const LabeledCorpus c = load_labeled_directory(dir.path());
  REQUIRE(c.class_names == std::vector<std::string>{"apple", "zebra"});
  CHECK(c.items.size() == 3);
  CHECK(c.count_of(0) == 2);
  CHECK(c.count_of(1) == 1);
}
