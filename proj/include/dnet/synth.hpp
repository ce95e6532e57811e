#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dnet/image_io.hpp"
#include "dnet/noise.hpp"

namespace dnet {

// Piecewise-smooth grayscale scene: shaded background, anti-aliased
// ellipses and rotated rectangles, some carrying a sinusoidal texture.
GrayImage synth_scene(std::size_t height, std::size_t width, SeededRng& rng);

enum class TextureKind { Checks, Flat, Stripes };

GrayImage synth_texture(TextureKind kind, std::size_t height, std::size_t width, SeededRng& rng);

// count scenes from per-index streams of seed; ids are scene_000, scene_001, ...
std::vector<GrayImage> synth_scene_corpus(std::size_t count, std::size_t height, std::size_t width,
                                          std::uint64_t seed);

// Three classes named "checks", "flat", "stripes".
LabeledCorpus synth_texture_corpus(std::size_t per_class, std::size_t side, std::uint64_t seed);

// Writes images as PNG (<dir>/<id>.png, or <dir>/<class>/<id>.png for labeled corpora).
void write_corpus(const std::vector<GrayImage>& images, const std::filesystem::path& dir);
void write_corpus(const LabeledCorpus& corpus, const std::filesystem::path& dir);

}  // namespace dnet
