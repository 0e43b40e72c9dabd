#include "blockforge/block_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace blockforge {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kCheckerboard: return "checkerboard";
    case Strategy::kPseudoCheckerboard: return "pseudo-checkerboard";
    case Strategy::kRandom: return "random";
    case Strategy::kAll: return "all";
    case Strategy::kNone: return "none";
  }
  return "none";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "checkerboard") return Strategy::kCheckerboard;
  if (name == "pseudo-checkerboard" || name == "pseudo_checkerboard") {
    return Strategy::kPseudoCheckerboard;
  }
  if (name == "random") return Strategy::kRandom;
  if (name == "all") return Strategy::kAll;
  if (name == "none") return Strategy::kNone;
  throw Error(ErrorCode::kInvalidArgument, "unknown selection strategy: " + name);
}

bool SelectionPlan::contains(BlockRef b) const {
  return std::binary_search(selected.begin(), selected.end(), b);
}

Mask SelectionPlan::mask() const {
  Mask m(grid.width(), grid.height());
  for (const BlockRef b : selected) {
    const Rect r = grid.block_rect(b);
    for (int y = r.y0; y < r.y1; ++y) {
      std::fill_n(m.bits.begin() + static_cast<std::ptrdiff_t>(y) * m.width + r.x0, r.width(),
                  std::uint8_t{1});
    }
  }
  return m;
}

int blocks_for_fraction(double fraction, int block_count) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "budget fraction must lie in [0, 1]");
  }
  // Nudge absorbs representation error such as 0.12 * 100 = 12.000000000000002
  // or 0.35 * 10 = 3.4999999999999996.
  const double scaled = fraction * block_count;
  const int n = static_cast<int>(std::floor(scaled + 0.5 + 1e-9));
  return std::clamp(n, 0, block_count);
}

int serpentine_index(const BlockGrid& grid, BlockRef b) {
  const int offset = (b.row % 2 == 0) ? b.col : grid.cols() - 1 - b.col;
  return b.row * grid.cols() + offset;
}

BlockRef serpentine_block(const BlockGrid& grid, int index) {
  const int row = index / grid.cols();
  const int offset = index % grid.cols();
  return BlockRef{row, (row % 2 == 0) ? offset : grid.cols() - 1 - offset};
}

namespace {

SelectionPlan base_plan(const BlockGrid& grid, Strategy s, std::vector<BlockRef> selected) {
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
  SelectionPlan plan;
  plan.grid = grid;
  plan.strategy = s;
  plan.selected = std::move(selected);
  plan.budget_fraction =
      static_cast<double>(plan.selected.size()) / static_cast<double>(grid.block_count());
  return plan;
}

}  // namespace

SelectionPlan checkerboard(const BlockGrid& grid, int parity) {
  if (parity != 0 && parity != 1) throw Error(ErrorCode::kInvalidArgument, "parity must be 0 or 1");
  std::vector<BlockRef> sel;
  for (int r = 0; r < grid.rows(); ++r) {
    for (int c = 0; c < grid.cols(); ++c) {
      if ((r + c) % 2 == parity) sel.push_back({r, c});
    }
  }
  SelectionPlan plan = base_plan(grid, Strategy::kCheckerboard, std::move(sel));
  plan.phase = parity;
  return plan;
}

SelectionPlan pseudo_checkerboard(const BlockGrid& grid, double budget_fraction, int phase) {
  const int m = grid.block_count();
  const int n = blocks_for_fraction(budget_fraction, m);
  std::vector<BlockRef> sel;
  sel.reserve(n);
  const long long shift = ((phase % m) + m) % m;
  for (long long k = 0; k < n; ++k) {
    const long long idx = (shift + k * m / n) % m;
    sel.push_back(serpentine_block(grid, static_cast<int>(idx)));
  }
  SelectionPlan plan = base_plan(grid, Strategy::kPseudoCheckerboard, std::move(sel));
  plan.budget_fraction = budget_fraction;
  plan.phase = phase;
  return plan;
}

SelectionPlan random_blocks(const BlockGrid& grid, double budget_fraction, std::uint64_t seed) {
  const int m = grid.block_count();
  const int n = blocks_for_fraction(budget_fraction, m);
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first n slots are a uniform sample.
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<int> pick(i, m - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<BlockRef> sel;
  sel.reserve(n);
  for (int i = 0; i < n; ++i) sel.push_back({order[i] / grid.cols(), order[i] % grid.cols()});
  SelectionPlan plan = base_plan(grid, Strategy::kRandom, std::move(sel));
  plan.budget_fraction = budget_fraction;
  plan.seed = seed;
  return plan;
}

SelectionPlan all_blocks(const BlockGrid& grid) {
  std::vector<BlockRef> sel;
  for (int r = 0; r < grid.rows(); ++r) {
    for (int c = 0; c < grid.cols(); ++c) sel.push_back({r, c});
  }
  return base_plan(grid, Strategy::kAll, std::move(sel));
}

SelectionPlan no_blocks(const BlockGrid& grid) { return base_plan(grid, Strategy::kNone, {}); }

SelectionPlan make_plan(const BlockGrid& grid, Strategy strategy, double budget_fraction,
                        int phase, std::uint64_t seed) {
  switch (strategy) {
    case Strategy::kCheckerboard: return checkerboard(grid, ((phase % 2) + 2) % 2);
    case Strategy::kPseudoCheckerboard: return pseudo_checkerboard(grid, budget_fraction, phase);
    case Strategy::kRandom: return random_blocks(grid, budget_fraction, seed);
    case Strategy::kAll: return all_blocks(grid);
    case Strategy::kNone: return no_blocks(grid);
  }
  return no_blocks(grid);
}

Mask boundary_band_mask(const LabelMap& map, const SelectionPlan& plan, int band) {
  if (map.width != plan.grid.width() || map.height != plan.grid.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "label map does not match plan grid");
  }
  if (band < 0) throw Error(ErrorCode::kInvalidArgument, "band must be nonnegative");
  Mask out(map.width, map.height);
  std::vector<ClassId> row_min, row_max;
  for (const BlockRef b : plan.selected) {
    const Rect r = plan.grid.block_rect(b);
    const int bw = r.width();
    const int bh = r.height();
    // The window around a pixel holds a different label iff its min or max
    // differs from the pixel's own label. Square windows are separable.
    row_min.assign(static_cast<std::size_t>(bw) * bh, 0);
    row_max.assign(static_cast<std::size_t>(bw) * bh, 0);
    for (int y = 0; y < bh; ++y) {
      for (int x = 0; x < bw; ++x) {
        ClassId lo = 255, hi = 0;
        for (int xx = std::max(0, x - band); xx <= std::min(bw - 1, x + band); ++xx) {
          const ClassId v = map.at(r.x0 + xx, r.y0 + y);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        row_min[static_cast<std::size_t>(y) * bw + x] = lo;
        row_max[static_cast<std::size_t>(y) * bw + x] = hi;
      }
    }
    for (int y = 0; y < bh; ++y) {
      for (int x = 0; x < bw; ++x) {
        ClassId lo = 255, hi = 0;
        for (int yy = std::max(0, y - band); yy <= std::min(bh - 1, y + band); ++yy) {
          lo = std::min(lo, row_min[static_cast<std::size_t>(yy) * bw + x]);
          hi = std::max(hi, row_max[static_cast<std::size_t>(yy) * bw + x]);
        }
        const ClassId own = map.at(r.x0 + x, r.y0 + y);
        if (lo != own || hi != own) out.set(r.x0 + x, r.y0 + y, true);
      }
    }
  }
  return out;
}

PixelBudget realized_budget(const SelectionPlan& plan) {
  long long area = 0;
  for (const BlockRef b : plan.selected) area += plan.grid.block_rect(b).area();
  return PixelBudget{static_cast<double>(area) / static_cast<double>(plan.grid.image_area())};
}

LabelMap degrade(const LabelMap& gt, const SelectionPlan& plan) {
  if (gt.width != plan.grid.width() || gt.height != plan.grid.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "ground truth does not match plan grid");
  }
  const Mask keep = plan.mask();
  LabelMap out = gt;
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    if (!keep.bits[i]) out.labels[i] = kVoid;
  }
  return out;
}

namespace {

struct SampleComponents {
  const LabelMap* map;
  Components cc;
};

double mean_segments(std::span<const SampleComponents> samples, int rows, int cols) {
  long long touched = 0;
  long long blocks = 0;
  std::vector<int> stamp;
  int epoch = 0;
  for (const auto& s : samples) {
    const BlockGrid grid = decompose_grid(s.map->width, s.map->height, rows, cols);
    stamp.assign(static_cast<std::size_t>(s.cc.count), -1);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const Rect rect = grid.block_rect(r, c);
        ++epoch;
        for (int y = rect.y0; y < rect.y1; ++y) {
          for (int x = rect.x0; x < rect.x1; ++x) {
            const int id = s.cc.ids[static_cast<std::size_t>(y) * s.map->width + x];
            if (id >= 0 && stamp[id] != epoch) {
              stamp[id] = epoch;
              ++touched;
            }
          }
        }
        ++blocks;
      }
    }
  }
  return static_cast<double>(touched) / static_cast<double>(blocks);
}

std::vector<SampleComponents> label_samples(std::span<const LabelMap> maps) {
  std::vector<SampleComponents> samples;
  samples.reserve(maps.size());
  for (const auto& m : maps) samples.push_back({&m, connected_components(m)});
  return samples;
}

}  // namespace

double mean_segments_per_block(std::span<const LabelMap> maps, int rows, int cols) {
  if (maps.empty()) throw Error(ErrorCode::kInvalidArgument, "no sample maps");
  const auto samples = label_samples(maps);
  return mean_segments(samples, rows, cols);
}

GridShape recommend_block_size(std::span<const LabelMap> sample_maps,
                               double target_segments_per_block) {
  constexpr double kComfortMin = 3.0;
  constexpr double kComfortMax = 6.0;
  constexpr int kMaxSide = 64;
  if (sample_maps.empty()) throw Error(ErrorCode::kInvalidArgument, "no sample maps");

  int max_rows = kMaxSide;
  int max_cols = kMaxSide;
  for (const auto& m : sample_maps) {
    max_rows = std::min(max_rows, m.height);
    max_cols = std::min(max_cols, m.width);
  }
  const auto samples = label_samples(sample_maps);

  std::vector<GridShape> candidates;
  for (int n = 1; n <= std::max(max_rows, max_cols); ++n) {
    for (auto [r, c] : {std::pair{n, n}, std::pair{n, n + 1}, std::pair{n + 1, n}}) {
      if (r > max_rows || c > max_cols) continue;
      candidates.push_back({r, c, mean_segments(samples, r, c)});
    }
  }
  if (candidates.empty() || candidates.front().mean_segments_per_block < kComfortMin) {
    throw Error(ErrorCode::kNoFeasibleGrid,
                "images hold fewer than 3 segments even as a single block");
  }

  auto in_comfort = [&](const GridShape& g) {
    return g.mean_segments_per_block >= kComfortMin && g.mean_segments_per_block <= kComfortMax;
  };
  const bool any_comfortable = std::any_of(candidates.begin(), candidates.end(), in_comfort);
  const GridShape* best = nullptr;
  auto better = [&](const GridShape& a, const GridShape& b) {
    const double da = std::abs(a.mean_segments_per_block - target_segments_per_block);
    const double db = std::abs(b.mean_segments_per_block - target_segments_per_block);
    if (std::abs(da - db) > 1e-12) return da < db;
    const bool sa = a.rows == a.cols, sb = b.rows == b.cols;
    if (sa != sb) return sa;
    return a.rows * a.cols < b.rows * b.cols;
  };
  for (const auto& g : candidates) {
    if (any_comfortable && !in_comfort(g)) continue;
    if (!best || better(g, *best)) best = &g;
  }
  return *best;
}

nlohmann::json plan_to_json(const SelectionPlan& plan) {
  nlohmann::json selected = nlohmann::json::array();
  for (const BlockRef b : plan.selected) selected.push_back({b.row, b.col});
  return {
      {"grid",
       {{"rows", plan.grid.rows()},
        {"cols", plan.grid.cols()},
        {"width", plan.grid.width()},
        {"height", plan.grid.height()}}},
      {"strategy", to_string(plan.strategy)},
      {"budget_fraction", plan.budget_fraction},
      {"phase", plan.phase},
      {"seed", plan.seed},
      {"selected", std::move(selected)},
  };
}

SelectionPlan plan_from_json(const nlohmann::json& j) {
  try {
    const auto& g = j.at("grid");
    SelectionPlan plan;
    plan.grid = decompose_grid(g.at("width").get<int>(), g.at("height").get<int>(),
                               g.at("rows").get<int>(), g.at("cols").get<int>());
    plan.strategy = parse_strategy(j.at("strategy").get<std::string>());
    plan.budget_fraction = j.at("budget_fraction").get<double>();
    plan.phase = j.value("phase", 0);
    plan.seed = j.value("seed", std::uint64_t{0});
    for (const auto& rc : j.at("selected")) {
      const BlockRef b{rc.at(0).get<int>(), rc.at(1).get<int>()};
      if (!plan.grid.contains(b)) throw Error(ErrorCode::kSchemaViolation, "block outside grid");
      plan.selected.push_back(b);
    }
    std::sort(plan.selected.begin(), plan.selected.end());
    plan.selected.erase(std::unique(plan.selected.begin(), plan.selected.end()),
                        plan.selected.end());
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("malformed plan: ") + e.what());
  }
}

}  // namespace blockforge
