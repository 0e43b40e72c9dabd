#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockforge/raster.hpp"

namespace blockforge {

enum class Strategy { kCheckerboard, kPseudoCheckerboard, kRandom, kAll, kNone };

std::string to_string(Strategy s);
/// Accepts "checkerboard", "pseudo-checkerboard" (or "pseudo_checkerboard"),
/// "random", "all", "none".
Strategy parse_strategy(const std::string& name);

struct PixelBudget {
  double fraction = 0.0;
};

/// Which blocks of one image carry labels. `selected` is kept sorted
/// row-major and duplicate-free.
struct SelectionPlan {
  BlockGrid grid;
  std::vector<BlockRef> selected;
  Strategy strategy = Strategy::kNone;
  double budget_fraction = 0.0;
  int phase = 0;
  std::uint64_t seed = 0;

  bool contains(BlockRef b) const;
  /// Pixel mask of the selected blocks.
  Mask mask() const;

  bool operator==(const SelectionPlan&) const = default;
};

/// round-half-up(fraction * block_count), clamped to [0, block_count].
int blocks_for_fraction(double fraction, int block_count);

/// Position of block (r, c) along the boustrophedon traversal: even rows run
/// left to right, odd rows right to left.
int serpentine_index(const BlockGrid& grid, BlockRef b);
BlockRef serpentine_block(const BlockGrid& grid, int index);

SelectionPlan checkerboard(const BlockGrid& grid, int parity);

/// Evenly spaced blocks along the serpentine order:
/// {(phase + floor(k*M/n)) mod M : k < n}, n = round(fraction*M).
SelectionPlan pseudo_checkerboard(const BlockGrid& grid, double budget_fraction, int phase = 0);

SelectionPlan random_blocks(const BlockGrid& grid, double budget_fraction, std::uint64_t seed);
SelectionPlan all_blocks(const BlockGrid& grid);
SelectionPlan no_blocks(const BlockGrid& grid);

/// Dispatches on strategy. For kCheckerboard, phase selects the parity.
SelectionPlan make_plan(const BlockGrid& grid, Strategy strategy, double budget_fraction,
                        int phase = 0, std::uint64_t seed = 0);

/// Pixels of selected blocks whose Chebyshev distance to a differently
/// labelled pixel of the same block is at most `band`.
Mask boundary_band_mask(const LabelMap& map, const SelectionPlan& plan, int band = 10);

PixelBudget realized_budget(const SelectionPlan& plan);

/// Ground truth with every pixel outside the selected blocks voided.
LabelMap degrade(const LabelMap& gt, const SelectionPlan& plan);

struct GridShape {
  int rows = 1;
  int cols = 1;
  double mean_segments_per_block = 0.0;

  bool operator==(const GridShape& o) const { return rows == o.rows && cols == o.cols; }
};

/// Mean number of distinct segments touching each block (segments split
/// across blocks count once per block).
double mean_segments_per_block(std::span<const LabelMap> maps, int rows, int cols);

/// Square-ish grid (|rows - cols| <= 1) whose mean segments per block is
/// nearest to target, preferring grids inside [3, 6]. Throws kNoFeasibleGrid
/// when even a 1x1 grid holds fewer than 3 segments on average.
GridShape recommend_block_size(std::span<const LabelMap> sample_maps,
                               double target_segments_per_block = 4.5);

nlohmann::json plan_to_json(const SelectionPlan& plan);
SelectionPlan plan_from_json(const nlohmann::json& j);

}  // namespace blockforge
