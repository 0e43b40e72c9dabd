#include "blockforge/metrics.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace blockforge {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 0 || num_classes > kMaxClasses) {
    throw Error(ErrorCode::kInvalidArgument, "class count out of range");
  }
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::false_positives(int c) const {
  std::uint64_t n = 0;
  for (int g = 0; g < k_; ++g) {
    if (g != c) n += at(g, c);
  }
  return n;
}

std::uint64_t ConfusionMatrix::false_negatives(int c) const {
  std::uint64_t n = 0;
  for (int p = 0; p < k_; ++p) {
    if (p != c) n += at(c, p);
  }
  return n;
}

bool ConfusionMatrix::evaluated(int c) const {
  return true_positives(c) + false_positives(c) + false_negatives(c) > 0;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw Error(ErrorCode::kPaletteMismatch, "confusion matrix size mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

namespace {

void require_same_shape(const LabelMap& a, const LabelMap& b) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::kDimensionMismatch,
                "label maps differ in size: " + std::to_string(a.width) + "x" +
                    std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                    std::to_string(b.height));
  }
}

void check_label(ClassId v, int num_classes) {
  if (v != kVoid && v >= num_classes) {
    throw Error(ErrorCode::kPaletteMismatch,
                "label " + std::to_string(v) + " outside palette of " +
                    std::to_string(num_classes) + " classes");
  }
}

}  // namespace

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int num_classes) {
  require_same_shape(pred, gt);
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const ClassId g = gt.labels[i];
    const ClassId p = pred.labels[i];
    check_label(g, num_classes);
    check_label(p, num_classes);
    if (g == kVoid || p == kVoid) continue;
    cm.add(g, p);
  }
  return cm;
}

std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> iou(cm.num_classes());
  for (int c = 0; c < cm.num_classes(); ++c) {
    if (!cm.evaluated(c)) continue;
    const double tp = static_cast<double>(cm.true_positives(c));
    const double denom = tp + static_cast<double>(cm.false_positives(c) + cm.false_negatives(c));
    iou[c] = tp / denom;
  }
  return iou;
}

double miou(const ConfusionMatrix& cm) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : per_class_iou(cm)) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::kEmptyEvaluation, "no class evaluated");
  return sum / n;
}

double class_balanced_error(const ConfusionMatrix& cm) {
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < cm.num_classes(); ++c) {
    if (!cm.evaluated(c)) continue;
    const double wrong = static_cast<double>(cm.false_positives(c) + cm.false_negatives(c));
    sum += wrong / (static_cast<double>(cm.true_positives(c)) + wrong);
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::kEmptyEvaluation, "no class evaluated");
  return sum / n;
}

double pixel_agreement(const LabelMap& pred, const LabelMap& gt) {
  require_same_shape(pred, gt);
  std::size_t both = 0;
  std::size_t equal = 0;
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    if (gt.labels[i] == kVoid || pred.labels[i] == kVoid) continue;
    ++both;
    if (gt.labels[i] == pred.labels[i]) ++equal;
  }
  if (both == 0) throw Error(ErrorCode::kEmptyEvaluation, "no mutually labelled pixels");
  return static_cast<double>(equal) / static_cast<double>(both);
}

ConfusionMatrix small_region_confusion(const LabelMap& pred, const LabelMap& gt, int num_classes,
                                       double area_threshold_fraction) {
  require_same_shape(pred, gt);
  const Components cc = connected_components(gt);
  std::vector<std::size_t> area(static_cast<std::size_t>(cc.count), 0);
  for (int id : cc.ids) {
    if (id >= 0) ++area[id];
  }
  const double limit = area_threshold_fraction * static_cast<double>(gt.pixel_count());
  bool any = false;
  for (std::size_t a : area) any = any || static_cast<double>(a) < limit;
  if (!any) {
    throw Error(ErrorCode::kNoQualifyingRegions, "no ground-truth region below area threshold");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    check_label(gt.labels[i], num_classes);
    check_label(pred.labels[i], num_classes);
    const int id = cc.ids[i];
    if (id < 0 || static_cast<double>(area[id]) >= limit) continue;
    if (pred.labels[i] == kVoid) continue;
    cm.add(gt.labels[i], pred.labels[i]);
  }
  return cm;
}

double small_region_error(const LabelMap& pred, const LabelMap& gt, int num_classes,
                          double area_threshold_fraction) {
  const ConfusionMatrix cm = small_region_confusion(pred, gt, num_classes, area_threshold_fraction);
  if (cm.total() == 0) {
    throw Error(ErrorCode::kEmptyEvaluation, "small regions are entirely unlabelled in prediction");
  }
  return class_balanced_error(cm);
}

double segment_count_ratio(const LabelMap& submission, const LabelMap& gt) {
  require_same_shape(submission, gt);
  const int gt_count = connected_components(gt).count;
  if (gt_count == 0) throw Error(ErrorCode::kEmptyEvaluation, "ground truth has no segments");
  return static_cast<double>(connected_components(submission).count) / gt_count;
}

MetricReport report_from_confusion(const ConfusionMatrix& cm) {
  MetricReport r;
  r.per_class_iou = per_class_iou(cm);
  r.miou = miou(cm);
  r.class_balanced_error = class_balanced_error(cm);
  std::uint64_t diag = 0;
  for (int c = 0; c < cm.num_classes(); ++c) diag += cm.at(c, c);
  r.pixel_agreement = static_cast<double>(diag) / static_cast<double>(cm.total());
  return r;
}

MetricReport evaluate(const LabelMap& pred, const LabelMap& gt, int num_classes) {
  MetricReport r = report_from_confusion(confusion(pred, gt, num_classes));
  try {
    r.small_region_error = small_region_error(pred, gt, num_classes);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoQualifyingRegions && e.code() != ErrorCode::kEmptyEvaluation) {
      throw;
    }
  }
  r.pred_segments = connected_components(pred).count;
  r.gt_segments = connected_components(gt).count;
  return r;
}

ErrorDelta compare_errors(double baseline, double candidate) {
  ErrorDelta d;
  d.absolute = candidate - baseline;
  d.relative = baseline != 0.0 ? d.absolute / baseline : std::nan("");
  return d;
}

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& v : report.per_class_iou) {
    per_class.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  }
  return {
      {"miou", report.miou},
      {"class_balanced_error", report.class_balanced_error},
      {"pixel_agreement", report.pixel_agreement},
      {"per_class_iou", std::move(per_class)},
      {"small_region_error", report.small_region_error ? nlohmann::json(*report.small_region_error)
                                                       : nlohmann::json(nullptr)},
      {"segment_counts", {{"pred", report.pred_segments}, {"gt", report.gt_segments}}},
  };
}

}  // namespace blockforge
