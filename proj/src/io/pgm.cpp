#include "petlab/io/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "petlab/errors.hpp"

namespace petlab::io {

void write_pgm16(const std::filesystem::path& path, const Image& image, float lo, float hi) {
  if (!(hi > lo)) hi = lo + 1.0f;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << image.width << " " << image.height << "\n65535\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(image.size() * 2);
  for (float v : image.pixels) {
    const double t = std::clamp((static_cast<double>(v) - lo) / (hi - lo), 0.0, 1.0);
    const auto s = static_cast<std::uint16_t>(std::lround(t * 65535.0));
    bytes.push_back(static_cast<unsigned char>(s >> 8));
    bytes.push_back(static_cast<unsigned char>(s & 0xff));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

void write_pgm16(const std::filesystem::path& path, const Image& image) {
  const float hi = image.pixels.empty() ? 1.0f : *std::max_element(image.pixels.begin(), image.pixels.end());
  write_pgm16(path, image, 0.0f, hi);
}

std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, std::size_t& height, std::size_t& width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string magic;
  unsigned maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (magic != "P5" || maxval != 65535) throw DataError(path.string() + ": not a 16-bit P5 image");
  in.get();
  std::vector<unsigned char> bytes(width * height * 2);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw DataError(path.string() + ": truncated");
  std::vector<std::uint16_t> out(width * height);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint16_t>(bytes[2 * i] << 8 | bytes[2 * i + 1]);
  return out;
}

Image error_map(const Image& x, const Image& reference) {
  if (!x.same_shape(reference)) throw ShapeError("error_map: shapes differ");
  Image out(x.height, x.width);
  for (std::size_t i = 0; i < x.size(); ++i) out.pixels[i] = std::abs(x.pixels[i] - reference.pixels[i]);
  return out;
}

} // namespace petlab::io
