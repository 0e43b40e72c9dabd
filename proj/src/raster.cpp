#include "blockforge/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace blockforge {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kDimensionTooSmall: return "dimension_too_small";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kDegeneratePolygon: return "degenerate_polygon";
    case ErrorCode::kPaletteMismatch: return "palette_mismatch";
    case ErrorCode::kDecodeFailed: return "decode_failed";
    case ErrorCode::kEmptyEvaluation: return "empty_evaluation";
    case ErrorCode::kNoQualifyingRegions: return "no_qualifying_regions";
    case ErrorCode::kNoFeasibleGrid: return "no_feasible_grid";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kStateViolation: return "state_violation";
    case ErrorCode::kSchemaViolation: return "schema_violation";
    case ErrorCode::kIoError: return "io_error";
    case ErrorCode::kSupportViolation: return "support_violation";
    case ErrorCode::kInvalidDistribution: return "invalid_distribution";
  }
  return "unknown";
}

ImageRaster::ImageRaster(int w, int h)
    : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

Palette::Palette(std::vector<ClassInfo> classes) : classes_(std::move(classes)) {
  if (static_cast<int>(classes_.size()) > kMaxClasses) {
    throw Error(ErrorCode::kInvalidArgument, "palette holds more than 255 classes");
  }
  for (int i = 0; i < size(); ++i) {
    if (classes_[i].id != i) {
      throw Error(ErrorCode::kInvalidArgument,
                  "palette ids must be dense and ordered; expected " + std::to_string(i) +
                      " got " + std::to_string(classes_[i].id));
    }
    for (int j = 0; j < i; ++j) {
      if (classes_[j].name == classes_[i].name) {
        throw Error(ErrorCode::kInvalidArgument, "duplicate class name: " + classes_[i].name);
      }
    }
  }
}

Palette Palette::with_classes(int k) {
  std::vector<ClassInfo> classes;
  classes.reserve(k);
  for (int i = 0; i < k; ++i) classes.push_back({i, "class" + std::to_string(i)});
  return Palette(std::move(classes));
}

const std::string& Palette::name(int id) const {
  if (!contains(id)) throw Error(ErrorCode::kPaletteMismatch, "class id not in palette");
  return classes_[id].name;
}

LabelMap::LabelMap(int w, int h, ClassId fill)
    : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}

std::size_t LabelMap::labelled_count() const {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](ClassId v) { return v != kVoid; }));
}

Mask::Mask(int w, int h, bool fill)
    : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

BlockGrid decompose_grid(int width, int height, int rows, int cols) {
  if (rows < 1 || cols < 1) {
    throw Error(ErrorCode::kInvalidArgument, "grid needs at least one row and column");
  }
  if (cols > width || rows > height) {
    throw Error(ErrorCode::kDimensionTooSmall,
                "image " + std::to_string(width) + "x" + std::to_string(height) +
                    " too small for " + std::to_string(rows) + "x" + std::to_string(cols) +
                    " grid");
  }
  BlockGrid grid;
  grid.rows_ = rows;
  grid.cols_ = cols;
  grid.width_ = width;
  grid.height_ = height;
  return grid;
}

Rect BlockGrid::block_rect(BlockRef b) const {
  if (!contains(b)) throw Error(ErrorCode::kInvalidArgument, "block outside grid");
  auto edge = [](long long i, long long extent, long long n) {
    return static_cast<int>(i * extent / n);
  };
  return Rect{edge(b.col, width_, cols_), edge(b.row, height_, rows_),
              edge(b.col + 1, width_, cols_), edge(b.row + 1, height_, rows_)};
}

BlockRef BlockGrid::block_at(int x, int y) const {
  // x lies in block c iff c*w < (x+1)*n <= (c+1)*w.
  auto index = [](long long p, long long extent, long long n) {
    return static_cast<int>(((p + 1) * n + extent - 1) / extent - 1);
  };
  return BlockRef{index(y, height_, rows_), index(x, width_, cols_)};
}

namespace {

void paint_polygon(const PolygonAnnotation& poly, LabelMap& out, const Rect& clip) {
  const auto& v = poly.vertices;
  const std::size_t n = v.size();
  double min_y = v[0].y, max_y = v[0].y;
  for (const auto& p : v) {
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const int row_begin = std::max(clip.y0, static_cast<int>(std::ceil(min_y - 0.5)));
  const int row_end = std::min(clip.y1, static_cast<int>(std::ceil(max_y - 0.5)) + 1);

  std::vector<double> xs;
  for (int y = row_begin; y < row_end; ++y) {
    const double yc = y + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2d& a = v[i];
      const Point2d& b = v[(i + 1) % n];
      if ((a.y > yc) != (b.y > yc)) {
        xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
      // pixel centres x + 0.5 in [xs[i], xs[i+1])
      int x_begin = static_cast<int>(std::ceil(xs[i] - 0.5));
      int x_end = static_cast<int>(std::ceil(xs[i + 1] - 0.5));
      x_begin = std::max(x_begin, clip.x0);
      x_end = std::min(x_end, clip.x1);
      for (int x = x_begin; x < x_end; ++x) out.at(x, y) = static_cast<ClassId>(poly.class_id);
    }
  }
}

}  // namespace

LabelMap rasterize_clipped(std::span<const PolygonAnnotation> polygons, int width, int height,
                           const Palette& palette, const Rect& clip) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kInvalidArgument, "raster dimensions must be positive");
  }
  std::vector<const PolygonAnnotation*> order;
  order.reserve(polygons.size());
  for (const auto& p : polygons) {
    if (p.vertices.size() < 3) {
      throw Error(ErrorCode::kDegeneratePolygon, "polygon has fewer than 3 vertices");
    }
    if (!palette.contains(p.class_id)) {
      throw Error(ErrorCode::kPaletteMismatch,
                  "polygon class " + std::to_string(p.class_id) + " not in palette");
    }
    order.push_back(&p);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->z_order < b->z_order; });

  const Rect bounded{std::max(0, clip.x0), std::max(0, clip.y0), std::min(width, clip.x1),
                     std::min(height, clip.y1)};
  LabelMap out(width, height);
  if (bounded.width() <= 0 || bounded.height() <= 0) return out;
  for (const auto* p : order) paint_polygon(*p, out, bounded);
  return out;
}

LabelMap rasterize(std::span<const PolygonAnnotation> polygons, int width, int height,
                   const Palette& palette) {
  return rasterize_clipped(polygons, width, height, palette, Rect{0, 0, width, height});
}

Components connected_components(const LabelMap& map) {
  Components cc;
  cc.width = map.width;
  cc.height = map.height;
  cc.ids.assign(map.pixel_count(), -1);
  std::vector<int> stack;
  const int w = map.width;
  const int h = map.height;
  for (int start = 0; start < static_cast<int>(map.pixel_count()); ++start) {
    if (map.labels[start] == kVoid || cc.ids[start] != -1) continue;
    const ClassId label = map.labels[start];
    const int id = cc.count++;
    cc.ids[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int x = p % w;
      const int y = p / w;
      auto visit = [&](int q) {
        if (cc.ids[q] == -1 && map.labels[q] == label) {
          cc.ids[q] = id;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
    }
  }
  return cc;
}

LabelMap apply_void_mask(const LabelMap& map, const Mask& mask) {
  if (mask.width != map.width || mask.height != map.height) {
    throw Error(ErrorCode::kDimensionMismatch, "void mask dimensions differ from label map");
  }
  LabelMap out = map;
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    if (mask.bits[i]) out.labels[i] = kVoid;
  }
  return out;
}

LabelMap restrict_to_rect(const LabelMap& map, const Rect& rect) {
  LabelMap out(map.width, map.height);
  const int x0 = std::max(0, rect.x0), x1 = std::min(map.width, rect.x1);
  const int y0 = std::max(0, rect.y0), y1 = std::min(map.height, rect.y1);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) out.at(x, y) = map.at(x, y);
  }
  return out;
}

}  // namespace blockforge
