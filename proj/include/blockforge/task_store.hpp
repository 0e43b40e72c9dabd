#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockforge/annotation_flow.hpp"

namespace blockforge {

/// Append-only JSON-lines log. Every event carries a monotonically
/// increasing "seq". Optionally mirrored to a file, flushed per line.
class EventLog {
 public:
  EventLog() = default;
  /// Opens path for append; existing events are loaded first.
  explicit EventLog(const std::filesystem::path& path);

  void append(const nlohmann::json& event);
  std::vector<nlohmann::json> events() const;
  std::size_t size() const;

  static std::vector<nlohmann::json> read(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  std::vector<nlohmann::json> events_;
  std::ofstream file_;
};

struct StoreConfig {
  Palette palette;
  QcPolicy qc;
  PayoutPolicy block_payout = PayoutPolicy::cityscapes_block();
  PayoutPolicy full_payout = PayoutPolicy::suncg_full();
  double lease_seconds = 30.0 * 60.0;
  std::uint64_t seed = 0;
};

struct StatusCounts {
  std::size_t created = 0;
  std::size_t open = 0;
  std::size_t assigned = 0;
  std::size_t submitted = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t workers = 0;
  double total_base = 0.0;
  double total_bonus = 0.0;

  bool operator==(const StatusCounts&) const = default;
};

nlohmann::json to_json(const StatusCounts& s);

struct SubmissionOutcome {
  Verdict verdict;
  std::optional<Payout> payout;
  double effective_seconds = 0.0;
  std::optional<TaskId> respawned_task;
};

/// Ground-truth segment count for a task, if known.
using GtSegmentLookup = std::function<std::optional<int>(const AnnotationTask&)>;

/// The single point of mutation for annotation tasks. Every mutating call is
/// one serialized transaction that appends its events to the log before
/// returning; reads take a shared lock.
class TaskStore {
 public:
  explicit TaskStore(StoreConfig config, EventLog* log = nullptr);

  /// Rebuilds a store by applying logged events; no randomness is consumed.
  static TaskStore replay(StoreConfig config, const std::vector<nlohmann::json>& events,
                          EventLog* log = nullptr);

  const StoreConfig& config() const { return config_; }

  std::string register_worker();
  bool has_worker(const std::string& worker_id) const;

  /// Adds one open task per selected block; returns the created tasks.
  std::vector<AnnotationTask> create_tasks(std::span<const std::string> image_ids,
                                           const std::map<std::string, SelectionPlan>& plans);

  /// Returns the worker's live assignment if it has one; otherwise assigns a
  /// uniformly random open task. Expired leases are released first.
  std::optional<AnnotationTask> assign_next(const std::string& worker_id, double now);

  /// Records a submission: assigned -> submitted -> accepted | rejected.
  /// QC uses min(client active_seconds, now - assigned_at). A rejected task
  /// respawns as a fresh open task for the same block.
  /// Throws kNotFound for unknown tasks, kStateViolation otherwise.
  SubmissionOutcome submit(const Submission& submission, double now,
                           const GtSegmentLookup& gt_segments = {});

  std::optional<AnnotationTask> task(TaskId id) const;
  std::vector<AnnotationTask> tasks() const;
  StatusCounts status() const;

  /// Accepted submissions for one image, ready for merge_blocks().
  std::vector<MergeInput> accepted_submissions(const std::string& image_id) const;

  /// Canonical materialized state; identical histories give identical bytes.
  nlohmann::json snapshot() const;
  std::string snapshot_bytes() const { return snapshot().dump(); }

 private:
  void apply(const nlohmann::json& event);
  void emit(nlohmann::json event);
  void release_expired(double now);
  void set_state(AnnotationTask& t, TaskState to);

  StoreConfig config_;
  EventLog* log_;
  std::unique_ptr<std::shared_mutex> mutex_ = std::make_unique<std::shared_mutex>();

  std::uint64_t seq_ = 0;
  TaskId next_task_id_ = 1;
  std::uint64_t next_worker_ = 1;
  std::vector<std::string> workers_;
  std::map<TaskId, AnnotationTask> tasks_;
  std::map<TaskId, Submission> submissions_;
  std::map<TaskId, Verdict> verdicts_;
  std::map<TaskId, Payout> payouts_;
  std::map<std::string, TaskId> live_assignment_;  // worker -> task
  std::vector<TaskId> open_;                       // unordered open pool
};

}  // namespace blockforge
