#pragma once

#include <cstddef>
#include <cstdint>

#include "petlab/image.hpp"

namespace petlab::sim {

/// Outer head ellipsoid in normalised coordinates: in-plane positions are
/// scaled by W/2 and H/2 about the image centre, axial by D/2.
struct HeadEllipsoid {
  double semi_x = 0.0;
  double semi_y = 0.0;
  double semi_z = 0.0;
  double rotation = 0.0; // in-plane, radians

  /// Whether voxel centre (z, y, x) of a D x H x W grid lies inside.
  bool contains(std::size_t z, std::size_t y, std::size_t x, std::size_t d, std::size_t h,
                std::size_t w) const;
};

struct PhantomVolume {
  Volume activity; // nonnegative, arbitrary activity units
  double voxel_size = 1.0;
  std::uint64_t seed = 0;
  HeadEllipsoid head;

  /// Number of voxels of slice z that lie inside the head ellipsoid.
  std::size_t head_area(std::size_t z) const;
};

/// Synthetic brain-like activity volume: cortex ring, deep nuclei, ventricles,
/// slow multiplicative texture and `n_lesions` hyperintense ellipsoids.
/// Zero outside the head ellipsoid; the first and last slices fall outside it.
PhantomVolume generate_phantom(std::uint64_t seed, std::size_t depth, std::size_t height,
                               std::size_t width, std::size_t n_lesions);

} // namespace petlab::sim
