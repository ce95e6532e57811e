#include <cstring>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dnet/container.hpp"
#include "dnet/error.hpp"
#include "dnet/model_io.hpp"
#include "helpers.hpp"

using namespace dnet;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t le32(const std::string& bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(i)]);
  return v;
}

DenoiseModel small_model(bool skip) {
  NetworkConfig c;
  c.depth = 3;
  c.feed_channels = 4;
  c.skip_connections = skip;
  c.seed = 9;
  return DenoiseModel{c, init_weights(c), NoiseSpec::poisson(4), {{"note", "unit"}}};
}

}  // namespace

TEST_CASE("crc32 of the standard check string") {
  const char* s = "123456789";
  CHECK(crc32_bytes({reinterpret_cast<const unsigned char*>(s), 9}) == 0xCBF43926u);
}

TEST_CASE("container section round trip and errors") {
  ContainerSection sec{"TEST", 3, {{"k", 1}}, {1.5, -2.25, 1e300}};
  std::stringstream ss;
  write_section(ss, sec);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "TEST");
  CHECK(le32(bytes, 4) == 3);
  std::stringstream in(bytes);
  const ContainerSection back = read_section(in, "TEST", 3);
  CHECK(back.values == sec.values);
  CHECK(back.meta.at("k") == 1);

  std::stringstream wrong_magic(bytes);
  CHECK_THROWS_AS(read_section(wrong_magic, "NOPE", 3), FormatError);
  std::stringstream wrong_version(bytes);
  CHECK_THROWS_AS(read_section(wrong_version, "TEST", 4), FormatError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 6));
  CHECK_THROWS_AS(read_section(truncated, "TEST", 3), FormatError);
  std::string flipped = bytes;
  flipped[bytes.size() - 10] ^= 0x01;
  std::stringstream corrupt(flipped);
  CHECK_THROWS_AS(read_section(corrupt, "TEST", 3), ChecksumError);
}

TEST_CASE("model round trip is bit-exact") {
  testutil::TempDir dir("model");
  for (bool skip : {true, false}) {
    const DenoiseModel m = small_model(skip);
    save_model(m, dir / "m.dnet");
    const DenoiseModel back = load_model(dir / "m.dnet");
    CHECK(back.config == m.config);
    CHECK(back.noise == m.noise);
    CHECK(back.weights == m.weights);
    CHECK(back.training.at("note") == "unit");
    const Tensor in = testutil::random_tensor({1, 9, 9, 1}, 1);
    CHECK(forward(in, back.weights, back.config).output == forward(in, m.weights, m.config).output);
  }
}

TEST_CASE("corrupted or truncated model files are rejected") {
  testutil::TempDir dir("model");
  save_model(small_model(true), dir / "m.dnet");
  const std::string bytes = slurp(dir / "m.dnet");
  std::string bad = bytes;
  bad[bad.size() - 100] ^= 0x40;
  spit(dir / "bad.dnet", bad);
  CHECK_THROWS_AS(load_model(dir / "bad.dnet"), ChecksumError);
  spit(dir / "short.dnet", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_model(dir / "short.dnet"), FormatError);
  std::string magic = bytes;
  magic[0] = 'X';
  spit(dir / "magic.dnet", magic);
  CHECK_THROWS_AS(load_model(dir / "magic.dnet"), FormatError);
  std::string version = bytes;
  version[4] = 9;
  spit(dir / "version.dnet", version);
  CHECK_THROWS_AS(load_model(dir / "version.dnet"), FormatError);
  CHECK_THROWS_AS(load_model(dir / "missing.dnet"), FormatError);
}

TEST_CASE("default model file size is header plus 8 bytes per parameter plus checksum") {
  testutil::TempDir dir("model");
  const NetworkConfig c;
  save_model(zero_weights(c), c, NoiseSpec::gaussian(25), dir / "d.dnet");
  const std::string bytes = slurp(dir / "d.dnet");
  const std::uint32_t json_len = le32(bytes, 8);
  CHECK(bytes.size() == 12 + json_len + 691328 * 8 + 4);
  const auto meta = nlohmann::json::parse(bytes.substr(12, json_len));
  CHECK(meta.at("parameter_count") == 691328);
  CHECK(meta.at("noise_spec").at("type") == "gaussian");
}

TEST_CASE("weight values are stored little-endian in serialization order") {
  DenoiseModel m = small_model(true);
  const std::vector<double> flat = flatten_weights(m.weights);
  CHECK(flat.size() == parameter_count(m.config));
  CHECK(flat[0] == m.weights.layers[0].feed.weights[0]);
  const std::string bytes = serialize_model(m);
  const std::uint32_t json_len = le32(bytes, 8);
  double first = 0;
  std::memcpy(&first, bytes.data() + 12 + json_len, 8);  // host is little-endian
  CHECK(first == flat[0]);
  CHECK(unflatten_weights(flat, m.config) == m.weights);
  CHECK_THROWS_AS(unflatten_weights(std::vector<double>(3), m.config), FormatError);
}

TEST_CASE("saving replaces files atomically") {
  testutil::TempDir dir("model");
  write_file_atomically((dir / "f.bin").string(), "first");
  write_file_atomically((dir / "f.bin").string(), "second");
  CHECK(slurp(dir / "f.bin") == "second");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++entries;
  CHECK(entries == 1);
}
