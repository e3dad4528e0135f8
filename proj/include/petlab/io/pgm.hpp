#pragma once

#include <filesystem>

#include "petlab/image.hpp"

namespace petlab::io {

/// Binary 16-bit PGM (P5, maxval 65535, big-endian samples). Values are
/// mapped linearly from [lo, hi] and clipped.
void write_pgm16(const std::filesystem::path& path, const Image& image, float lo, float hi);
/// Window [0, max(image)].
void write_pgm16(const std::filesystem::path& path, const Image& image);

/// 16-bit samples of a P5 file; for tests and tooling.
std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, std::size_t& height, std::size_t& width);

/// |x - reference| per pixel.
Image error_map(const Image& x, const Image& reference);

} // namespace petlab::io
