#include "blockforge/inpaint.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <random>

namespace blockforge {

ClassId HintVolume::known(int x, int y) const {
  const std::size_t base = (static_cast<std::size_t>(y) * width + x) * num_classes;
  for (int k = 0; k < num_classes; ++k) {
    if (values[base + k]) return static_cast<ClassId>(k);
  }
  return kVoid;
}

std::size_t HintVolume::hinted_count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

ProbField::ProbField(int w, int h, int k, double fill)
    : width(w), height(h), num_classes(k),
      values(static_cast<std::size_t>(w) * h * k, fill) {}

void check_distribution(const ProbField& field, double tolerance) {
  if (field.values.size() != field.pixel_count() * field.num_classes) {
    throw Error(ErrorCode::kInvalidDistribution, "probability field has wrong size");
  }
  for (std::size_t i = 0; i < field.pixel_count(); ++i) {
    double sum = 0.0;
    for (double v : field.pixel(i)) {
      if (!(v >= 0.0)) {
        throw Error(ErrorCode::kInvalidDistribution,
                    "negative or NaN probability at pixel " + std::to_string(i));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tolerance) {
      throw Error(ErrorCode::kInvalidDistribution,
                  "distribution at pixel " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
}

HintVolume build_hint_volume(const LabelMap& partial, int num_classes) {
  if (num_classes < 1 || num_classes > kMaxClasses) {
    throw Error(ErrorCode::kInvalidArgument, "class count out of range");
  }
  HintVolume hv;
  hv.width = partial.width;
  hv.height = partial.height;
  hv.num_classes = num_classes;
  hv.values.assign(partial.pixel_count() * num_classes, 0);
  for (std::size_t i = 0; i < partial.labels.size(); ++i) {
    const ClassId v = partial.labels[i];
    if (v == kVoid) continue;
    if (v >= num_classes) {
      throw Error(ErrorCode::kPaletteMismatch,
                  "hint label " + std::to_string(v) + " >= K=" + std::to_string(num_classes));
    }
    hv.values[i * num_classes + v] = 1;
  }
  return hv;
}

std::set<BlockRef> sample_training_hints(const std::set<BlockRef>& annotated_blocks,
                                         std::uint64_t seed) {
  if (annotated_blocks.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no annotated blocks to sample hints from");
  }
  std::vector<BlockRef> pool(annotated_blocks.begin(), annotated_blocks.end());
  const std::size_t n = pool.size() / 2;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  return std::set<BlockRef>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
}

std::uint64_t trial_seed(std::uint64_t seed, int trial) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(trial) + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

UncertaintyResult reduce_trials(std::span<const ProbField> trials) {
  if (trials.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "at least two trials are needed for a sample deviation");
  }
  const ProbField& first = trials.front();
  for (const auto& t : trials) {
    if (t.width != first.width || t.height != first.height || t.num_classes != first.num_classes) {
      throw Error(ErrorCode::kDimensionMismatch, "trial fields differ in shape");
    }
  }
  for (const auto& t : trials) check_distribution(t);
  const double g = static_cast<double>(trials.size());
  UncertaintyResult res;
  res.mu = ProbField(first.width, first.height, first.num_classes);
  res.u_vec = ProbField(first.width, first.height, first.num_classes);
  for (const auto& t : trials) {
    for (std::size_t i = 0; i < t.values.size(); ++i) res.mu.values[i] += t.values[i];
  }
  for (double& v : res.mu.values) v /= g;
  // Entries where every trial agrees get zero spread, not rounding residue from the mean.
  std::vector<char> constant(first.values.size(), 1);
  for (const auto& t : trials) {
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      if (t.values[i] != first.values[i]) constant[i] = 0;
      const double d = t.values[i] - res.mu.values[i];
      res.u_vec.values[i] += d * d;
    }
  }
  for (std::size_t i = 0; i < res.u_vec.values.size(); ++i) {
    res.u_vec.values[i] = constant[i] ? 0.0 : std::sqrt(res.u_vec.values[i] / (g - 1.0));
  }

  const std::size_t n = first.pixel_count();
  res.u.assign(n, 0.0);
  res.predicted = LabelMap(first.width, first.height);
  for (std::size_t i = 0; i < n; ++i) {
    const auto mu = res.mu.pixel(i);
    const auto best = static_cast<std::size_t>(std::max_element(mu.begin(), mu.end()) - mu.begin());
    res.predicted.labels[i] = static_cast<ClassId>(best);
    res.u[i] = res.u_vec.pixel(i)[best];
  }
  return res;
}

UncertaintyResult estimate_uncertainty(const ImageRaster& image, const HintVolume& hints,
                                       const Predictor& predictor, const SamplerConfig& cfg) {
  if (cfg.g < 2) throw Error(ErrorCode::kInvalidArgument, "g must be at least 2");
  if (image.width != hints.width || image.height != hints.height) {
    throw Error(ErrorCode::kDimensionMismatch, "image and hint volume differ in size");
  }
  std::vector<std::future<ProbField>> pending;
  pending.reserve(cfg.g);
  for (int t = 0; t < cfg.g; ++t) {
    pending.push_back(std::async(std::launch::async, [&, t] {
      return predictor(image, hints, trial_seed(cfg.seed, t));
    }));
  }
  std::vector<ProbField> trials;
  trials.reserve(cfg.g);
  for (auto& f : pending) trials.push_back(f.get());
  for (const auto& t : trials) {
    if (t.width != image.width || t.height != image.height ||
        t.num_classes != hints.num_classes) {
      throw Error(ErrorCode::kInvalidDistribution, "predictor returned a field of wrong shape");
    }
  }
  return reduce_trials(trials);
}

ThresholdResult threshold_labels(const UncertaintyResult& res, double rel_threshold,
                                 const Mask* hinted) {
  if (!(rel_threshold >= 0.0 && rel_threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "relative threshold must lie in [0, 1]");
  }
  const LabelMap& pred = res.predicted;
  if (hinted && (hinted->width != pred.width || hinted->height != pred.height)) {
    throw Error(ErrorCode::kDimensionMismatch, "hint mask differs in size");
  }
  const std::size_t n = res.u.size();
  ThresholdResult out;
  for (std::size_t i = 0; i < n; ++i) {
    if (hinted && hinted->bits[i]) continue;
    out.u_max = std::max(out.u_max, res.u[i]);
  }
  out.labels = LabelMap(pred.width, pred.height);
  const double limit = rel_threshold * out.u_max;
  std::size_t kept = 0, kept_unhinted = 0, unhinted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool is_hint = hinted && hinted->bits[i];
    if (!is_hint) ++unhinted;
    if (out.u_max == 0.0 || res.u[i] <= limit) {
      out.labels.labels[i] = pred.labels[i];
      ++kept;
      if (!is_hint) ++kept_unhinted;
    }
  }
  out.coverage = n ? static_cast<double>(kept) / static_cast<double>(n) : 0.0;
  out.coverage_unhinted =
      unhinted ? static_cast<double>(kept_unhinted) / static_cast<double>(unhinted) : 1.0;
  return out;
}

InpaintResult inpaint_image(const ImageRaster& image, const LabelMap& partial,
                            const SelectionPlan& plan, int num_classes,
                            const Predictor& predictor, const SamplerConfig& cfg,
                            double rel_threshold) {
  if (partial.width != image.width || partial.height != image.height ||
      plan.grid.width() != image.width || plan.grid.height() != image.height) {
    throw Error(ErrorCode::kDimensionMismatch, "image, partial map and plan differ in size");
  }
  const Mask support = plan.mask();
  Mask hinted(partial.width, partial.height);
  for (std::size_t i = 0; i < partial.labels.size(); ++i) {
    if (partial.labels[i] == kVoid) continue;
    if (!support.bits[i]) {
      throw Error(ErrorCode::kSupportViolation,
                  "partial map labels pixel " + std::to_string(i) + " outside selected blocks");
    }
    hinted.bits[i] = 1;
  }

  const HintVolume hints = build_hint_volume(partial, num_classes);
  InpaintResult out;
  out.uncertainty = estimate_uncertainty(image, hints, predictor, cfg);
  const ThresholdResult th = threshold_labels(out.uncertainty, rel_threshold, &hinted);
  out.labels = th.labels;
  for (std::size_t i = 0; i < partial.labels.size(); ++i) {
    if (hinted.bits[i]) out.labels.labels[i] = partial.labels[i];
  }
  out.coverage = static_cast<double>(out.labels.labelled_count()) /
                 static_cast<double>(out.labels.pixel_count());
  out.coverage_unhinted = th.coverage_unhinted;
  out.u = out.uncertainty.u;
  out.u_max = th.u_max;
  return out;
}

namespace {

struct KeptHint {
  std::array<float, 5> feature;
  ClassId label;
};

std::array<float, 5> feature_of(const ImageRaster& image, int x, int y,
                                const ReferencePredictorParams& p) {
  const std::uint8_t* px = image.pixel(x, y);
  const double sx = p.weight_xy / image.width;
  const double sy = p.weight_xy / image.height;
  const double sc = p.weight_rgb / 255.0;
  return {static_cast<float>(x * sx), static_cast<float>(y * sy), static_cast<float>(px[0] * sc),
          static_cast<float>(px[1] * sc), static_cast<float>(px[2] * sc)};
}

ProbField knn_trial(const ImageRaster& image, const HintVolume& hints, std::uint64_t seed,
                    const ReferencePredictorParams& params) {
  const int w = image.width;
  const int h = image.height;
  const int kc = hints.num_classes;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(std::clamp(params.rho, 0.0, 1.0));

  std::vector<KeptHint> kept;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const ClassId c = hints.known(x, y);
      if (c == kVoid) continue;
      if (params.rho >= 1.0 || keep(rng)) kept.push_back({feature_of(image, x, y, params), c});
    }
  }

  ProbField out(w, h, kc, kept.empty() ? 1.0 / kc : 0.0);
  if (kept.empty()) return out;

  const int k = std::max(1, std::min<int>(params.k, static_cast<int>(kept.size())));
  std::vector<std::pair<float, ClassId>> best(k);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto f = feature_of(image, x, y, params);
      int filled = 0;
      for (const auto& hint : kept) {
        float d2 = 0.0f;
        for (int j = 0; j < 5; ++j) {
          const float d = f[j] - hint.feature[j];
          d2 += d * d;
        }
        if (filled == k && d2 >= best[k - 1].first) continue;
        int pos = filled < k ? filled++ : k - 1;
        while (pos > 0 && best[pos - 1].first > d2) {
          best[pos] = best[pos - 1];
          --pos;
        }
        best[pos] = {d2, hint.label};
      }
      auto px = out.pixel(static_cast<std::size_t>(y) * w + x);
      double total = 0.0;
      for (int i = 0; i < filled; ++i) {
        const double d = std::sqrt(static_cast<double>(best[i].first));
        const double weight = d > 0.0 ? std::min(1.0 / d, params.max_weight) : params.max_weight;
        px[best[i].second] += weight;
        total += weight;
      }
      for (double& v : px) v /= total;
    }
  }
  return out;
}

}  // namespace

Predictor reference_predictor(const ReferencePredictorParams& params) {
  if (params.k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be positive");
  if (!(params.rho > 0.0 && params.rho <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "rho must lie in (0, 1]");
  }
  return [params](const ImageRaster& image, const HintVolume& hints, std::uint64_t seed) {
    if (image.width != hints.width || image.height != hints.height) {
      throw Error(ErrorCode::kDimensionMismatch, "image and hint volume differ in size");
    }
    return knn_trial(image, hints, seed, params);
  };
}

std::vector<std::uint16_t> quantize_uncertainty(std::span<const double> u, double u_max) {
  std::vector<std::uint16_t> out(u.size(), 0);
  if (u_max <= 0.0) return out;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double scaled = std::clamp(u[i] / u_max, 0.0, 1.0) * 65535.0;
    out[i] = static_cast<std::uint16_t>(std::lround(scaled));
  }
  return out;
}

}  // namespace blockforge
