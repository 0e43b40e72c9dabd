#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <vector>

#include "blockforge/block_select.hpp"
#include "blockforge/raster.hpp"

namespace blockforge {

/// h x w x K one-hot known-label tensor; all-zero columns where unknown.
struct HintVolume {
  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::vector<std::uint8_t> values;  // ((y * w) + x) * K + k

  std::uint8_t at(int x, int y, int k) const {
    return values[(static_cast<std::size_t>(y) * width + x) * num_classes + k];
  }
  /// Known class at (x, y), or kVoid.
  ClassId known(int x, int y) const;
  bool hinted(int x, int y) const { return known(x, y) != kVoid; }
  std::size_t hinted_count() const;
};

/// h x w x K per-pixel class distribution.
struct ProbField {
  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::vector<double> values;

  ProbField() = default;
  ProbField(int w, int h, int k, double fill = 0.0);

  std::span<const double> pixel(std::size_t i) const {
    return {values.data() + i * num_classes, static_cast<std::size_t>(num_classes)};
  }
  std::span<double> pixel(std::size_t i) {
    return {values.data() + i * num_classes, static_cast<std::size_t>(num_classes)};
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

/// Throws kInvalidDistribution unless each pixel is nonnegative and sums to
/// 1 within tolerance.
void check_distribution(const ProbField& field, double tolerance = 1e-6);

struct SamplerConfig {
  int g = 8;
  std::uint64_t seed = 0;
  double rho = 0.5;
};

/// Stochastic label predictor. Same inputs and trial seed must give the same
/// field; different trial seeds may differ.
using Predictor =
    std::function<ProbField(const ImageRaster&, const HintVolume&, std::uint64_t trial_seed)>;

struct UncertaintyResult {
  ProbField mu;     // mean distribution over trials
  ProbField u_vec;  // per-class sample standard deviation (divisor g - 1)
  std::vector<double> u;  // u_vec at argmax of mu, per pixel
  LabelMap predicted;     // argmax of mu, lowest class wins ties
};

/// Throws kPaletteMismatch when a label is >= num_classes.
HintVolume build_hint_volume(const LabelMap& partial, int num_classes);

/// Uniform random floor(n/2)-subset of the annotated blocks, used as hints
/// during training; every annotated block remains a target.
std::set<BlockRef> sample_training_hints(const std::set<BlockRef>& annotated_blocks,
                                         std::uint64_t seed);

/// Seed of trial t, a hash of (seed, t).
std::uint64_t trial_seed(std::uint64_t seed, int trial);

/// Mean, per-class sample deviation and predicted-class deviation of g >= 2
/// fields.
UncertaintyResult reduce_trials(std::span<const ProbField> trials);

/// Runs g predictor trials (concurrently where possible) and reduces them in
/// trial order.
UncertaintyResult estimate_uncertainty(const ImageRaster& image, const HintVolume& hints,
                                       const Predictor& predictor, const SamplerConfig& cfg);

struct ThresholdResult {
  LabelMap labels;
  double coverage = 0.0;           // kept / all pixels
  double coverage_unhinted = 1.0;  // kept / unhinted pixels
  double u_max = 0.0;              // normalization basis
};

/// Keeps pixels with u <= rel_threshold * max(u); max is taken over
/// unhinted pixels when a hint mask is given. If the max is zero every pixel
/// is kept.
ThresholdResult threshold_labels(const UncertaintyResult& res, double rel_threshold,
                                 const Mask* hinted = nullptr);

struct InpaintResult {
  LabelMap labels;
  double coverage = 0.0;
  double coverage_unhinted = 1.0;
  std::vector<double> u;
  double u_max = 0.0;
  UncertaintyResult uncertainty;
};

/// Hinted pixels are copied verbatim; others receive thresholded
/// predictions. Throws kSupportViolation if the partial map labels pixels
/// outside the plan's selected blocks.
InpaintResult inpaint_image(const ImageRaster& image, const LabelMap& partial,
                            const SelectionPlan& plan, int num_classes,
                            const Predictor& predictor, const SamplerConfig& cfg,
                            double rel_threshold);

struct ReferencePredictorParams {
  int k = 9;
  double rho = 0.5;
  double weight_xy = 1.0;
  double weight_rgb = 1.0;
  double max_weight = 1e6;
};

/// k-nearest-neighbour label propagation in (x/w, y/h, r, g, b) feature
/// space. Each trial keeps every hinted pixel independently with
/// probability rho, then gives each pixel the inverse-distance-weighted
/// vote of its k nearest kept hints. A trial with no kept hints yields the
/// uniform distribution.
Predictor reference_predictor(const ReferencePredictorParams& params);

/// Uint16 export of u scaled by u_max (0 when u_max is 0).
std::vector<std::uint16_t> quantize_uncertainty(std::span<const double> u, double u_max);

}  // namespace blockforge
