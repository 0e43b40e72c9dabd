#include "blockforge/annotation_flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace blockforge {

std::string to_string(TaskState s) {
  switch (s) {
    case TaskState::kOpen: return "open";
    case TaskState::kAssigned: return "assigned";
    case TaskState::kSubmitted: return "submitted";
    case TaskState::kAccepted: return "accepted";
    case TaskState::kRejected: return "rejected";
  }
  return "open";
}

std::string to_string(TaskKind k) { return k == TaskKind::kFull ? "full" : "block"; }

TaskState parse_task_state(const std::string& s) {
  if (s == "open") return TaskState::kOpen;
  if (s == "assigned") return TaskState::kAssigned;
  if (s == "submitted") return TaskState::kSubmitted;
  if (s == "accepted") return TaskState::kAccepted;
  if (s == "rejected") return TaskState::kRejected;
  throw Error(ErrorCode::kSchemaViolation, "unknown task state: " + s);
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "block") return TaskKind::kBlock;
  if (s == "full") return TaskKind::kFull;
  throw Error(ErrorCode::kSchemaViolation, "unknown task kind: " + s);
}

std::string to_string(RejectReason r) {
  return r == RejectReason::kTooFast ? "too_fast" : "too_few_segments";
}

PayoutPolicy PayoutPolicy::cityscapes_block() { return PayoutPolicy{0.06, 5.0, 0.24, std::nullopt}; }

PayoutPolicy PayoutPolicy::suncg_block() { return PayoutPolicy{0.06, 4.0, std::nullopt, 1.5}; }

PayoutPolicy PayoutPolicy::suncg_full() { return PayoutPolicy{0.96, 4.0, std::nullopt, 1.5}; }

double PayoutPolicy::max_bonus(double base) const {
  double cap = std::numeric_limits<double>::infinity();
  if (bonus_cap) cap = std::min(cap, *bonus_cap);
  if (bonus_multiplier_cap) cap = std::min(cap, (*bonus_multiplier_cap - 1.0) * base);
  return std::max(cap, 0.0);
}

std::vector<AnnotationTask> create_tasks(std::span<const std::string> image_ids,
                                         const std::map<std::string, SelectionPlan>& plans,
                                         TaskId first_id) {
  const std::set<std::string> known(image_ids.begin(), image_ids.end());
  for (const auto& [image_id, plan] : plans) {
    if (!known.count(image_id)) throw Error(ErrorCode::kNotFound, "unknown image id: " + image_id);
  }
  std::vector<AnnotationTask> tasks;
  TaskId next = first_id;
  // Follow the dataset's image order so ids are reproducible.
  for (const auto& image_id : image_ids) {
    const auto it = plans.find(image_id);
    if (it == plans.end()) continue;
    const SelectionPlan& plan = it->second;
    const bool full = plan.grid.block_count() == 1;
    for (const BlockRef b : plan.selected) {
      AnnotationTask t;
      t.task_id = next++;
      t.image_id = image_id;
      t.grid = plan.grid;
      t.block = b;
      t.kind = full ? TaskKind::kFull : TaskKind::kBlock;
      tasks.push_back(std::move(t));
    }
  }
  return tasks;
}

int submission_segment_count(const AnnotationTask& task, const Submission& submission,
                             const Palette& palette) {
  const LabelMap raster = rasterize_clipped(submission.polygons, task.grid.width(),
                                            task.grid.height(), palette, task.rect());
  return connected_components(raster).count;
}

Verdict validate_submission(const AnnotationTask& task, const Submission& submission,
                            std::optional<int> gt_segment_count, const QcPolicy& qc,
                            const Palette& palette) {
  if (task.state != TaskState::kAssigned) {
    throw Error(ErrorCode::kStateViolation,
                "task " + std::to_string(task.task_id) + " is " + to_string(task.state) +
                    ", not assigned");
  }
  if (submission.active_seconds < qc.min_seconds(task.kind)) {
    return Verdict::reject(RejectReason::kTooFast);
  }
  if (gt_segment_count) {
    const int segments = submission_segment_count(task, submission, palette);
    if (!(segments > qc.min_segment_ratio * *gt_segment_count)) {
      return Verdict::reject(RejectReason::kTooFewSegments);
    }
  }
  return Verdict::accept();
}

Payout compute_payout(const PayoutPolicy& policy, double active_seconds,
                      std::optional<double> base_pay_override) {
  if (!(active_seconds >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "active time must be nonnegative");
  }
  Payout p;
  p.base = base_pay_override.value_or(policy.base_pay);
  const double owed = policy.target_wage * active_seconds / 3600.0;
  p.bonus = std::clamp(owed - p.base, 0.0, policy.max_bonus(p.base));
  return p;
}

LabelMap merge_blocks(int width, int height, std::span<const MergeInput> submissions,
                      const Palette& palette) {
  std::vector<const MergeInput*> order;
  order.reserve(submissions.size());
  for (const auto& s : submissions) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const MergeInput* a, const MergeInput* b) {
    const double ta = a->task.submitted_at.value_or(0.0);
    const double tb = b->task.submitted_at.value_or(0.0);
    if (ta != tb) return ta < tb;
    return a->task.task_id < b->task.task_id;
  });

  std::vector<LabelMap> layers;
  layers.reserve(order.size());
  for (const auto* s : order) {
    if (s->task.grid.width() != width || s->task.grid.height() != height) {
      throw Error(ErrorCode::kDimensionMismatch, "submission grid does not match image");
    }
    layers.push_back(
        rasterize_clipped(s->submission.polygons, width, height, palette, s->task.rect()));
  }

  LabelMap out(width, height);
  std::vector<int> votes(static_cast<std::size_t>(palette.size()), 0);
  std::vector<ClassId> seen;
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    seen.clear();
    for (const auto& layer : layers) {
      const ClassId v = layer.labels[i];
      if (v == kVoid) continue;
      if (votes[v]++ == 0) seen.push_back(v);
    }
    if (seen.empty()) continue;
    // seen is in earliest-first order, so the first maximum wins ties.
    ClassId best = seen.front();
    for (const ClassId v : seen) {
      if (votes[v] > votes[best]) best = v;
    }
    out.labels[i] = best;
    for (const ClassId v : seen) votes[v] = 0;
  }
  return out;
}

int time_to_blocks(double annotation_seconds, double full_image_seconds, const BlockGrid& grid) {
  if (!(annotation_seconds > 0.0) || !(full_image_seconds > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "annotation times must be positive");
  }
  if (grid.rows() != 10 || grid.cols() != 10) {
    throw Error(ErrorCode::kInvalidArgument,
                "time conversion constant assumes a 10x10 grid (100 blocks at 2.2x overhead)");
  }
  const double blocks = annotation_seconds / (0.022 * full_image_seconds);
  // Tolerate representation error at the defining point T = 2.2F.
  const double rounded = std::floor(blocks + 0.5 + 1e-9);
  return static_cast<int>(std::clamp(rounded, 0.0, 100.0));
}

namespace {

template <typename T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

nlohmann::json to_json(const AnnotationTask& t) {
  return {
      {"task_id", t.task_id},
      {"image_id", t.image_id},
      {"grid",
       {{"rows", t.grid.rows()},
        {"cols", t.grid.cols()},
        {"width", t.grid.width()},
        {"height", t.grid.height()}}},
      {"block", {t.block.row, t.block.col}},
      {"kind", to_string(t.kind)},
      {"state", to_string(t.state)},
      {"worker_id", optional_json(t.worker_id)},
      {"assigned_at", optional_json(t.assigned_at)},
      {"submitted_at", optional_json(t.submitted_at)},
      {"respawn_of", optional_json(t.respawn_of)},
  };
}

AnnotationTask task_from_json(const nlohmann::json& j) {
  AnnotationTask t;
  t.task_id = j.at("task_id").get<TaskId>();
  t.image_id = j.at("image_id").get<std::string>();
  const auto& g = j.at("grid");
  t.grid = decompose_grid(g.at("width").get<int>(), g.at("height").get<int>(),
                          g.at("rows").get<int>(), g.at("cols").get<int>());
  t.block = BlockRef{j.at("block").at(0).get<int>(), j.at("block").at(1).get<int>()};
  t.kind = parse_task_kind(j.at("kind").get<std::string>());
  t.state = parse_task_state(j.at("state").get<std::string>());
  t.worker_id = optional_from<std::string>(j, "worker_id");
  t.assigned_at = optional_from<double>(j, "assigned_at");
  t.submitted_at = optional_from<double>(j, "submitted_at");
  t.respawn_of = optional_from<TaskId>(j, "respawn_of");
  return t;
}

nlohmann::json to_json(const PolygonAnnotation& p) {
  nlohmann::json verts = nlohmann::json::array();
  for (const auto& v : p.vertices) verts.push_back({v.x, v.y});
  return {{"class_id", p.class_id}, {"vertices", std::move(verts)}, {"z_order", p.z_order}};
}

PolygonAnnotation polygon_from_json(const nlohmann::json& j) {
  PolygonAnnotation p;
  p.class_id = j.at("class_id").get<int>();
  p.z_order = j.value("z_order", 0LL);
  for (const auto& v : j.at("vertices")) {
    if (!v.is_array() || v.size() != 2) {
      throw Error(ErrorCode::kSchemaViolation, "vertex must be an [x, y] pair");
    }
    p.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
  }
  return p;
}

nlohmann::json to_json(const Submission& s) {
  nlohmann::json polys = nlohmann::json::array();
  for (const auto& p : s.polygons) polys.push_back(to_json(p));
  return {{"task_id", s.task_id},
          {"worker_id", s.worker_id},
          {"active_seconds", s.active_seconds},
          {"polygons", std::move(polys)}};
}

Submission submission_from_json(const nlohmann::json& j) {
  Submission s;
  s.task_id = j.at("task_id").get<TaskId>();
  s.worker_id = j.value("worker_id", std::string{});
  s.active_seconds = j.at("active_seconds").get<double>();
  for (const auto& p : j.at("polygons")) s.polygons.push_back(polygon_from_json(p));
  return s;
}

nlohmann::json to_json(const Verdict& v) {
  nlohmann::json j = {{"accepted", v.accepted}};
  j["verdict"] = v.accepted ? "accepted" : "rejected";
  j["reason"] = v.reason ? nlohmann::json(to_string(*v.reason)) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const Payout& p) {
  return {{"base", p.base}, {"bonus", p.bonus}, {"total", p.total()}};
}

}  // namespace blockforge
