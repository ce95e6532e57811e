#include "dnet/container.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

#include "dnet/error.hpp"

namespace dnet {
namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void read_exact(std::istream& in, unsigned char* dst, std::size_t n, const char* what) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError(std::string("truncated container: ") + what);
}

}  // namespace

std::uint32_t crc32_bytes(std::span<const unsigned char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void write_section(std::ostream& out, const ContainerSection& section) {
  if (section.magic.size() != 4) throw InvalidArgument("container magic must be 4 bytes");
  nlohmann::json meta = section.meta;
  meta["value_count"] = section.values.size();
  const std::string json = meta.dump();

  std::string buf;
  buf.reserve(16 + json.size() + section.values.size() * 8);
  buf += section.magic;
  put_u32(buf, section.version);
  put_u32(buf, static_cast<std::uint32_t>(json.size()));
  buf += json;
  const std::size_t values_offset = buf.size();
  for (double v : section.values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  const auto* value_bytes = reinterpret_cast<const unsigned char*>(buf.data() + values_offset);
  put_u32(buf, crc32_bytes({value_bytes, section.values.size() * 8}));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

ContainerSection read_section(std::istream& in, const std::string& expected_magic, std::uint32_t expected_version) {
  unsigned char header[12];
  read_exact(in, header, sizeof(header), "header");
  ContainerSection section;
  section.magic.assign(reinterpret_cast<const char*>(header), 4);
  if (section.magic != expected_magic) {
    throw FormatError("bad magic '" + section.magic + "', expected '" + expected_magic + "'");
  }
  section.version = get_u32(header + 4);
  if (section.version != expected_version) {
    throw FormatError("unsupported " + expected_magic + " version " + std::to_string(section.version));
  }
  const std::uint32_t json_len = get_u32(header + 8);
  std::string json(json_len, '\0');
  read_exact(in, reinterpret_cast<unsigned char*>(json.data()), json_len, "metadata");
  try {
    section.meta = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed container metadata: ") + e.what());
  }
  if (!section.meta.contains("value_count")) throw FormatError("container metadata lacks value_count");
  const auto count = section.meta.at("value_count").get<std::size_t>();
  section.meta.erase("value_count");

  std::vector<unsigned char> raw(count * 8);
  read_exact(in, raw.data(), raw.size(), "values");
  unsigned char crc_bytes[4];
  read_exact(in, crc_bytes, 4, "checksum");
  if (get_u32(crc_bytes) != crc32_bytes(raw)) throw ChecksumError("container checksum mismatch");

  section.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(raw[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
    section.values[i] = std::bit_cast<double>(bits);
  }
  return section;
}

void write_file_atomically(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error("write to " + tmp + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

}  // namespace dnet
