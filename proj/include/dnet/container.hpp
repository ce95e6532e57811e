#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace dnet {

// One section of the binary container used for models, checkpoints and
// classifiers:
//
//   magic    4 bytes
//   version  u32 little-endian
//   json_len u32 little-endian
//   json     UTF-8 metadata; "value_count" gives the number of doubles
//   values   value_count x f64 little-endian
//   crc32    u32 little-endian, over the value bytes
struct ContainerSection {
  std::string magic;
  std::uint32_t version = 1;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<double> values;
};

void write_section(std::ostream& out, const ContainerSection& section);

// Throws FormatError on magic/version mismatch or truncation and
// ChecksumError when the stored CRC does not match.
ContainerSection read_section(std::istream& in, const std::string& expected_magic, std::uint32_t expected_version);

std::uint32_t crc32_bytes(std::span<const unsigned char> bytes);

// Writes via a temporary file and rename so readers never see a partial file.
void write_file_atomically(const std::string& path, const std::string& bytes);

}  // namespace dnet
