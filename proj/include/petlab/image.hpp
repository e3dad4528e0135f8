#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "petlab/errors.hpp"

namespace petlab {

/// Row-major single-channel 2-D image.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w, fill) {}
  Image(std::size_t h, std::size_t w, std::vector<float> values)
      : height(h), width(w), pixels(std::move(values)) {
    if (pixels.size() != h * w) throw ShapeError("image data does not match " + std::to_string(h) + "x" + std::to_string(w));
  }

  std::size_t size() const { return pixels.size(); }
  float& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

/// Row-major [depth, height, width] volume; slices are contiguous.
struct Volume {
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> voxels;

  Volume() = default;
  Volume(std::size_t d, std::size_t h, std::size_t w, float fill = 0.0f)
      : depth(d), height(h), width(w), voxels(d * h * w, fill) {}

  std::size_t slice_size() const { return height * width; }
  std::span<float> slice_view(std::size_t z) { return {voxels.data() + z * slice_size(), slice_size()}; }
  std::span<const float> slice_view(std::size_t z) const {
    return {voxels.data() + z * slice_size(), slice_size()};
  }
  Image slice(std::size_t z) const {
    auto v = slice_view(z);
    return Image(height, width, std::vector<float>(v.begin(), v.end()));
  }
  void set_slice(std::size_t z, const Image& img) {
    if (img.height != height || img.width != width) throw ShapeError("slice shape does not match volume");
    std::copy(img.pixels.begin(), img.pixels.end(), slice_view(z).begin());
  }
  float& at(std::size_t z, std::size_t y, std::size_t x) { return voxels[(z * height + y) * width + x]; }
  float at(std::size_t z, std::size_t y, std::size_t x) const { return voxels[(z * height + y) * width + x]; }
  bool same_shape(const Volume& o) const { return depth == o.depth && height == o.height && width == o.width; }
};

} // namespace petlab
