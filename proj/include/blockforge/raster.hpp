#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "blockforge/error.hpp"

namespace blockforge {

using ClassId = std::uint8_t;

inline constexpr ClassId kVoid = 255;
inline constexpr int kMaxClasses = 255;

/// 8-bit RGB image, row-major, interleaved.
struct ImageRaster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  ImageRaster() = default;
  ImageRaster(int w, int h);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  std::uint8_t* pixel(int x, int y) {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

struct ClassInfo {
  int id = 0;
  std::string name;

  bool operator==(const ClassInfo&) const = default;
};

/// Ordered class list. Ids are dense in [0, size()); 255 is reserved for void.
class Palette {
 public:
  Palette() = default;
  explicit Palette(std::vector<ClassInfo> classes);

  /// Convenience palette with names "class0".."class{k-1}".
  static Palette with_classes(int k);

  int size() const { return static_cast<int>(classes_.size()); }
  const std::vector<ClassInfo>& classes() const { return classes_; }
  bool contains(int id) const { return id >= 0 && id < size(); }
  const std::string& name(int id) const;

  bool operator==(const Palette&) const = default;

 private:
  std::vector<ClassInfo> classes_;
};

/// Per-pixel class raster; kVoid marks unlabelled pixels.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<ClassId> labels;

  LabelMap() = default;
  LabelMap(int w, int h, ClassId fill = kVoid);

  std::size_t pixel_count() const { return labels.size(); }
  ClassId at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  ClassId& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t labelled_count() const;

  bool operator==(const LabelMap&) const = default;
};

/// Boolean raster stored as bytes (0/1).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h, bool fill = false);

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;

  bool operator==(const Mask&) const = default;
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long area() const { return static_cast<long long>(width()) * height(); }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

  bool operator==(const Rect&) const = default;
};

struct BlockRef {
  int row = 0;
  int col = 0;

  auto operator<=>(const BlockRef&) const = default;
};

/// R x C decomposition of a width x height image. Block (r, c) spans
/// columns [floor(c*w/cols), floor((c+1)*w/cols)) and rows analogously.
class BlockGrid {
 public:
  BlockGrid() = default;

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int width() const { return width_; }
  int height() const { return height_; }
  int block_count() const { return rows_ * cols_; }
  long long image_area() const { return static_cast<long long>(width_) * height_; }

  bool contains(BlockRef b) const {
    return b.row >= 0 && b.row < rows_ && b.col >= 0 && b.col < cols_;
  }
  Rect block_rect(BlockRef b) const;
  Rect block_rect(int row, int col) const { return block_rect(BlockRef{row, col}); }

  /// Block containing pixel (x, y).
  BlockRef block_at(int x, int y) const;

  bool operator==(const BlockGrid&) const = default;

 private:
  friend BlockGrid decompose_grid(int width, int height, int rows, int cols);

  int rows_ = 1;
  int cols_ = 1;
  int width_ = 1;
  int height_ = 1;
};

struct Point2d {
  double x = 0;
  double y = 0;

  bool operator==(const Point2d&) const = default;
};

struct PolygonAnnotation {
  std::vector<Point2d> vertices;
  int class_id = 0;
  long long z_order = 0;

  bool operator==(const PolygonAnnotation&) const = default;
};

/// Throws kDimensionTooSmall when cols > width or rows > height.
BlockGrid decompose_grid(int width, int height, int rows, int cols);

/// Even-odd scanline fill sampled at pixel centres. Polygons are painted in
/// ascending z_order (stable), so later submissions win overlaps.
LabelMap rasterize(std::span<const PolygonAnnotation> polygons, int width, int height,
                   const Palette& palette);

/// Same as rasterize() but only pixels inside clip are painted.
LabelMap rasterize_clipped(std::span<const PolygonAnnotation> polygons, int width, int height,
                           const Palette& palette, const Rect& clip);

struct Components {
  int width = 0;
  int height = 0;
  std::vector<int> ids;  // -1 for void
  int count = 0;
};

/// 4-connected components of equal non-void labels.
Components connected_components(const LabelMap& map);

/// Masked pixels become void.
LabelMap apply_void_mask(const LabelMap& map, const Mask& mask);

/// Copy of map restricted to rect; pixels outside become void.
LabelMap restrict_to_rect(const LabelMap& map, const Rect& rect);

}  // namespace blockforge
