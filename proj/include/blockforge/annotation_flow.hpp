#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockforge/block_select.hpp"
#include "blockforge/raster.hpp"

namespace blockforge {

using TaskId = std::uint64_t;

enum class TaskState { kOpen, kAssigned, kSubmitted, kAccepted, kRejected };
enum class TaskKind { kBlock, kFull };

std::string to_string(TaskState s);
std::string to_string(TaskKind k);
TaskState parse_task_state(const std::string& s);
TaskKind parse_task_kind(const std::string& s);

/// One block (or a whole image) to be annotated by one worker.
struct AnnotationTask {
  TaskId task_id = 0;
  std::string image_id;
  BlockGrid grid;
  BlockRef block;
  TaskKind kind = TaskKind::kBlock;
  TaskState state = TaskState::kOpen;
  std::optional<std::string> worker_id;
  std::optional<double> assigned_at;
  std::optional<double> submitted_at;
  std::optional<TaskId> respawn_of;

  Rect rect() const { return grid.block_rect(block); }

  bool operator==(const AnnotationTask&) const = default;
};

struct Submission {
  TaskId task_id = 0;
  std::vector<PolygonAnnotation> polygons;
  double active_seconds = 0.0;
  std::string worker_id;

  bool operator==(const Submission&) const = default;
};

/// Bonus = min(target_wage * hours - base_pay, bonus_cap,
///             (bonus_multiplier_cap - 1) * base_pay), floored at zero.
/// Either cap may be absent.
struct PayoutPolicy {
  double base_pay = 0.06;
  double target_wage = 5.0;  // per hour
  std::optional<double> bonus_cap = 0.24;
  std::optional<double> bonus_multiplier_cap;

  /// $0.06 per block, $5/hr target, bonus capped at $0.24.
  static PayoutPolicy cityscapes_block();
  /// $0.06 per block, $4/hr target, total pay capped at 1.5x base.
  static PayoutPolicy suncg_block();
  /// $0.96 per full image, $4/hr target, total pay capped at 1.5x base.
  static PayoutPolicy suncg_full();

  /// Largest bonus the policy can ever pay (infinity when uncapped).
  double max_bonus(double base) const;
};

struct QcPolicy {
  double min_segment_ratio = 0.25;
  double min_seconds_block = 10.0;
  double min_seconds_full = 180.0;

  double min_seconds(TaskKind kind) const {
    return kind == TaskKind::kFull ? min_seconds_full : min_seconds_block;
  }
};

enum class RejectReason { kTooFast, kTooFewSegments };
std::string to_string(RejectReason r);

struct Verdict {
  bool accepted = false;
  std::optional<RejectReason> reason;

  static Verdict accept() { return {true, std::nullopt}; }
  static Verdict reject(RejectReason r) { return {false, r}; }
  bool operator==(const Verdict&) const = default;
};

struct Payout {
  double base = 0.0;
  double bonus = 0.0;
  double total() const { return base + bonus; }
};

/// One open task per selected block. Plans keyed by image id; each key must
/// name one of image_ids. Ids are assigned sequentially from first_id.
std::vector<AnnotationTask> create_tasks(std::span<const std::string> image_ids,
                                         const std::map<std::string, SelectionPlan>& plans,
                                         TaskId first_id = 1);

/// Segments the submission produces once clipped to the task's block.
int submission_segment_count(const AnnotationTask& task, const Submission& submission,
                             const Palette& palette);

/// QC: reject when active time is below the kind's minimum, or when the
/// segment count is not strictly greater than min_segment_ratio * gt.
/// Throws kStateViolation unless the task is assigned.
Verdict validate_submission(const AnnotationTask& task, const Submission& submission,
                            std::optional<int> gt_segment_count, const QcPolicy& qc,
                            const Palette& palette);

/// Throws kInvalidArgument for a negative duration.
Payout compute_payout(const PayoutPolicy& policy, double active_seconds,
                      std::optional<double> base_pay_override = std::nullopt);

struct MergeInput {
  AnnotationTask task;
  Submission submission;
};

/// Rasterizes each submission clipped to its block and takes a per-pixel
/// majority vote over non-void labels. Ties go to the earliest submission
/// (submitted_at, then task id). Uncovered pixels stay void.
LabelMap merge_blocks(int width, int height, std::span<const MergeInput> submissions,
                      const Palette& palette);

/// Number of 10x10-grid blocks annotatable in time T given full-image time F:
/// round(T / (0.022 F)), clamped to [0, 100].
int time_to_blocks(double annotation_seconds, double full_image_seconds, const BlockGrid& grid);

nlohmann::json to_json(const AnnotationTask& task);
AnnotationTask task_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PolygonAnnotation& p);
PolygonAnnotation polygon_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Submission& s);
Submission submission_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Verdict& v);
nlohmann::json to_json(const Payout& p);

}  // namespace blockforge
