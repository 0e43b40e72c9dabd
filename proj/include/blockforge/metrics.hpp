#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "blockforge/raster.hpp"

namespace blockforge {

/// K x K pixel counts; entry (g, p) counts pixels with ground truth g and
/// prediction p. Pixels void in either map are never counted.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = 0);

  int num_classes() const { return k_; }
  std::uint64_t at(int gt, int pred) const { return counts_[index(gt, pred)]; }
  void add(int gt, int pred, std::uint64_t n = 1) { counts_[index(gt, pred)] += n; }
  std::uint64_t total() const;

  std::uint64_t true_positives(int c) const { return at(c, c); }
  std::uint64_t false_positives(int c) const;
  std::uint64_t false_negatives(int c) const;
  /// A class is evaluated when it appears in the ground truth or prediction.
  bool evaluated(int c) const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t index(int gt, int pred) const { return static_cast<std::size_t>(gt) * k_ + pred; }

  int k_ = 0;
  std::vector<std::uint64_t> counts_;
};

/// Throws kDimensionMismatch, or kPaletteMismatch for non-void labels >= num_classes.
ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int num_classes);

/// Per-class IoU; nullopt for classes absent from both maps.
std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm);

/// Mean IoU over evaluated classes. Throws kEmptyEvaluation if none.
double miou(const ConfusionMatrix& cm);

/// Class-balanced error rate: mean over evaluated classes of
/// (FP + FN) / (TP + FP + FN). Equals 1 - miou(cm).
double class_balanced_error(const ConfusionMatrix& cm);

/// Fraction of mutually non-void pixels with equal labels.
double pixel_agreement(const LabelMap& pred, const LabelMap& gt);

/// Class-balanced error over pixels of ground-truth components smaller than
/// area_threshold_fraction of the image. Throws kNoQualifyingRegions.
double small_region_error(const LabelMap& pred, const LabelMap& gt, int num_classes,
                          double area_threshold_fraction = 0.005);

/// Confusion matrix restricted to small ground-truth components.
ConfusionMatrix small_region_confusion(const LabelMap& pred, const LabelMap& gt, int num_classes,
                                       double area_threshold_fraction = 0.005);

/// components(submission) / components(gt). Throws kEmptyEvaluation when gt
/// has no segments.
double segment_count_ratio(const LabelMap& submission, const LabelMap& gt);

struct MetricReport {
  double miou = 0.0;
  double class_balanced_error = 1.0;
  double pixel_agreement = 0.0;
  std::vector<std::optional<double>> per_class_iou;
  std::optional<double> small_region_error;
  int pred_segments = 0;
  int gt_segments = 0;
};

/// Full report for one prediction. small_region_error is empty when no
/// ground-truth region qualifies.
MetricReport evaluate(const LabelMap& pred, const LabelMap& gt, int num_classes);

/// Report built from an accumulated confusion matrix (dataset aggregate).
MetricReport report_from_confusion(const ConfusionMatrix& cm);

struct ErrorDelta {
  double absolute = 0.0;  // candidate - baseline
  double relative = 0.0;  // (candidate - baseline) / baseline
};

ErrorDelta compare_errors(double baseline, double candidate);

nlohmann::json to_json(const MetricReport& report);

}  // namespace blockforge
