#pragma once

#include <cstdint>

#include "blockforge/raster.hpp"

namespace blockforge {

struct SyntheticScene {
  ImageRaster image;
  LabelMap labels;
};

struct VoronoiParams {
  int width = 64;
  int height = 64;
  int num_classes = 5;
  int num_sites = 24;
  /// Per-cell colour offset (uniform, +/- this many 8-bit levels) around the
  /// class's base colour.
  double cell_jitter = 40.0;
  /// Per-pixel Gaussian noise, as a fraction of full scale.
  double noise_sigma = 10.0 / 255.0;
};

/// Random Voronoi partition; each cell gets a random class and is painted
/// with that class's base colour plus a per-cell offset and pixel noise.
SyntheticScene voronoi_scene(const VoronoiParams& params, std::uint64_t seed);

/// Base colour of a class (distinct for the first eight classes).
void class_color(int class_id, std::uint8_t out[3]);

}  // namespace blockforge
