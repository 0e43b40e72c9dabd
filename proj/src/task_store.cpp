#include "blockforge/task_store.hpp"

#include <algorithm>

namespace blockforge {

EventLog::EventLog(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) events_ = read(path);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_.open(path, std::ios::app);
  if (!file_) throw Error(ErrorCode::kIoError, "cannot open event log " + path.string());
}

void EventLog::append(const nlohmann::json& event) {
  std::lock_guard lock(mutex_);
  events_.push_back(event);
  if (file_.is_open()) {
    file_ << event.dump() << '\n';
    file_.flush();
  }
}

std::vector<nlohmann::json> EventLog::events() const {
  std::lock_guard lock(mutex_);
  return events_;
}

std::size_t EventLog::size() const {
  std::lock_guard lock(mutex_);
  return events_.size();
}

std::vector<nlohmann::json> EventLog::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read event log " + path.string());
  std::vector<nlohmann::json> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      events.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchemaViolation,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return events;
}

nlohmann::json to_json(const StatusCounts& s) {
  return {{"created", s.created},     {"open", s.open},         {"assigned", s.assigned},
          {"submitted", s.submitted}, {"accepted", s.accepted}, {"rejected", s.rejected},
          {"workers", s.workers},     {"total_base", s.total_base},
          {"total_bonus", s.total_bonus}};
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool legal_transition(TaskState from, TaskState to) {
  switch (from) {
    case TaskState::kOpen: return to == TaskState::kAssigned;
    case TaskState::kAssigned: return to == TaskState::kSubmitted || to == TaskState::kOpen;
    case TaskState::kSubmitted: return to == TaskState::kAccepted || to == TaskState::kRejected;
    case TaskState::kAccepted:
    case TaskState::kRejected: return false;
  }
  return false;
}

}  // namespace

TaskStore::TaskStore(StoreConfig config, EventLog* log) : config_(std::move(config)), log_(log) {}

TaskStore TaskStore::replay(StoreConfig config, const std::vector<nlohmann::json>& events,
                            EventLog* log) {
  TaskStore store(std::move(config), log);
  for (const auto& e : events) store.apply(e);
  return store;
}

void TaskStore::set_state(AnnotationTask& t, TaskState to) {
  if (!legal_transition(t.state, to)) {
    throw Error(ErrorCode::kStateViolation, "task " + std::to_string(t.task_id) + ": illegal " +
                                                to_string(t.state) + " -> " + to_string(to));
  }
  t.state = to;
}

void TaskStore::apply(const nlohmann::json& e) {
  const std::string type = e.at("type").get<std::string>();
  seq_ = e.at("seq").get<std::uint64_t>();

  if (type == "worker_registered") {
    workers_.push_back(e.at("worker_id").get<std::string>());
    ++next_worker_;
  } else if (type == "task_created") {
    AnnotationTask t = task_from_json(e.at("task"));
    next_task_id_ = std::max(next_task_id_, t.task_id + 1);
    open_.push_back(t.task_id);
    tasks_.emplace(t.task_id, std::move(t));
  } else if (type == "assigned") {
    AnnotationTask& t = tasks_.at(e.at("task_id").get<TaskId>());
    set_state(t, TaskState::kAssigned);
    t.worker_id = e.at("worker_id").get<std::string>();
    t.assigned_at = e.at("at").get<double>();
    live_assignment_[*t.worker_id] = t.task_id;
    const auto it = std::find(open_.begin(), open_.end(), t.task_id);
    *it = open_.back();
    open_.pop_back();
  } else if (type == "lease_expired") {
    AnnotationTask& t = tasks_.at(e.at("task_id").get<TaskId>());
    set_state(t, TaskState::kOpen);
    live_assignment_.erase(*t.worker_id);
    t.worker_id.reset();
    t.assigned_at.reset();
    open_.push_back(t.task_id);
  } else if (type == "submitted") {
    AnnotationTask& t = tasks_.at(e.at("task_id").get<TaskId>());
    set_state(t, TaskState::kSubmitted);
    t.submitted_at = e.at("at").get<double>();
    live_assignment_.erase(*t.worker_id);
    submissions_[t.task_id] = submission_from_json(e.at("submission"));
  } else if (type == "verdict") {
    AnnotationTask& t = tasks_.at(e.at("task_id").get<TaskId>());
    Verdict v;
    v.accepted = e.at("accepted").get<bool>();
    if (!v.accepted) {
      const std::string reason = e.at("reason").get<std::string>();
      v.reason = reason == "too_fast" ? RejectReason::kTooFast : RejectReason::kTooFewSegments;
    }
    set_state(t, v.accepted ? TaskState::kAccepted : TaskState::kRejected);
    verdicts_[t.task_id] = v;
  } else if (type == "payout") {
    payouts_[e.at("task_id").get<TaskId>()] =
        Payout{e.at("base").get<double>(), e.at("bonus").get<double>()};
  } else {
    throw Error(ErrorCode::kSchemaViolation, "unknown event type: " + type);
  }
}

void TaskStore::emit(nlohmann::json event) {
  event["seq"] = seq_ + 1;
  apply(event);
  if (log_) log_->append(event);
}

std::string TaskStore::register_worker() {
  std::unique_lock lock(*mutex_);
  const std::string id = "w" + std::to_string(next_worker_);
  emit({{"type", "worker_registered"}, {"worker_id", id}});
  return id;
}

bool TaskStore::has_worker(const std::string& worker_id) const {
  std::shared_lock lock(*mutex_);
  return std::find(workers_.begin(), workers_.end(), worker_id) != workers_.end();
}

std::vector<AnnotationTask> TaskStore::create_tasks(
    std::span<const std::string> image_ids, const std::map<std::string, SelectionPlan>& plans) {
  std::unique_lock lock(*mutex_);
  auto created = blockforge::create_tasks(image_ids, plans, next_task_id_);
  for (const auto& t : created) emit({{"type", "task_created"}, {"task", to_json(t)}});
  return created;
}

void TaskStore::release_expired(double now) {
  std::vector<TaskId> expired;
  for (const auto& [worker, id] : live_assignment_) {
    const AnnotationTask& t = tasks_.at(id);
    if (now - *t.assigned_at >= config_.lease_seconds) expired.push_back(id);
  }
  std::sort(expired.begin(), expired.end());
  for (TaskId id : expired) emit({{"type", "lease_expired"}, {"task_id", id}, {"at", now}});
}

std::optional<AnnotationTask> TaskStore::assign_next(const std::string& worker_id, double now) {
  std::unique_lock lock(*mutex_);
  if (std::find(workers_.begin(), workers_.end(), worker_id) == workers_.end()) {
    throw Error(ErrorCode::kNotFound, "unknown worker: " + worker_id);
  }
  release_expired(now);
  if (const auto it = live_assignment_.find(worker_id); it != live_assignment_.end()) {
    return tasks_.at(it->second);
  }
  if (open_.empty()) return std::nullopt;
  // Derived from the event sequence so replays and restarts pick identically.
  const std::uint64_t r = splitmix64(config_.seed ^ splitmix64(seq_ + 1));
  const TaskId id = open_[r % open_.size()];
  emit({{"type", "assigned"}, {"task_id", id}, {"worker_id", worker_id}, {"at", now}});
  return tasks_.at(id);
}

SubmissionOutcome TaskStore::submit(const Submission& submission, double now,
                                    const GtSegmentLookup& gt_segments) {
  std::unique_lock lock(*mutex_);
  const auto it = tasks_.find(submission.task_id);
  if (it == tasks_.end()) {
    throw Error(ErrorCode::kNotFound, "unknown task " + std::to_string(submission.task_id));
  }
  const AnnotationTask task = it->second;
  if (task.state != TaskState::kAssigned) {
    throw Error(ErrorCode::kStateViolation, "task " + std::to_string(task.task_id) + " is " +
                                                to_string(task.state) + ", not assigned");
  }
  if (!submission.worker_id.empty() && submission.worker_id != *task.worker_id) {
    throw Error(ErrorCode::kStateViolation,
                "task " + std::to_string(task.task_id) + " is assigned to another worker");
  }
  if (!(submission.active_seconds >= 0.0)) {
    throw Error(ErrorCode::kSchemaViolation, "active_seconds must be nonnegative");
  }
  // Fail on bad polygons before anything is logged.
  for (const auto& p : submission.polygons) {
    if (p.vertices.size() < 3) throw Error(ErrorCode::kDegeneratePolygon, "polygon has < 3 vertices");
    if (!config_.palette.contains(p.class_id)) {
      throw Error(ErrorCode::kPaletteMismatch, "class " + std::to_string(p.class_id) + " not in palette");
    }
  }

  SubmissionOutcome out;
  const double wall = std::max(0.0, now - *task.assigned_at);
  out.effective_seconds = std::min(submission.active_seconds, wall);
  Submission checked = submission;
  checked.worker_id = *task.worker_id;
  checked.active_seconds = out.effective_seconds;

  const std::optional<int> gt = gt_segments ? gt_segments(task) : std::nullopt;
  out.verdict = validate_submission(task, checked, gt, config_.qc, config_.palette);

  Submission recorded = submission;
  recorded.worker_id = *task.worker_id;
  emit({{"type", "submitted"},
        {"task_id", task.task_id},
        {"at", now},
        {"effective_seconds", out.effective_seconds},
        {"submission", to_json(recorded)}});
  nlohmann::json verdict = {{"type", "verdict"}, {"task_id", task.task_id},
                            {"accepted", out.verdict.accepted}};
  if (out.verdict.reason) verdict["reason"] = to_string(*out.verdict.reason);
  emit(std::move(verdict));

  if (out.verdict.accepted) {
    const PayoutPolicy& policy =
        task.kind == TaskKind::kFull ? config_.full_payout : config_.block_payout;
    out.payout = compute_payout(policy, out.effective_seconds);
    emit({{"type", "payout"},
          {"task_id", task.task_id},
          {"base", out.payout->base},
          {"bonus", out.payout->bonus}});
  } else {
    AnnotationTask respawn;
    respawn.task_id = next_task_id_;
    respawn.image_id = task.image_id;
    respawn.grid = task.grid;
    respawn.block = task.block;
    respawn.kind = task.kind;
    respawn.respawn_of = task.task_id;
    emit({{"type", "task_created"}, {"task", to_json(respawn)}});
    out.respawned_task = respawn.task_id;
  }
  return out;
}

std::optional<AnnotationTask> TaskStore::task(TaskId id) const {
  std::shared_lock lock(*mutex_);
  const auto it = tasks_.find(id);
  if (it == tasks_.end()) return std::nullopt;
  return it->second;
}

std::vector<AnnotationTask> TaskStore::tasks() const {
  std::shared_lock lock(*mutex_);
  std::vector<AnnotationTask> out;
  out.reserve(tasks_.size());
  for (const auto& [id, t] : tasks_) out.push_back(t);
  return out;
}

StatusCounts TaskStore::status() const {
  std::shared_lock lock(*mutex_);
  StatusCounts s;
  s.created = tasks_.size();
  s.workers = workers_.size();
  for (const auto& [id, t] : tasks_) {
    switch (t.state) {
      case TaskState::kOpen: ++s.open; break;
      case TaskState::kAssigned: ++s.assigned; break;
      case TaskState::kSubmitted: ++s.submitted; break;
      case TaskState::kAccepted: ++s.accepted; break;
      case TaskState::kRejected: ++s.rejected; break;
    }
  }
  for (const auto& [id, p] : payouts_) {
    s.total_base += p.base;
    s.total_bonus += p.bonus;
  }
  return s;
}

std::vector<MergeInput> TaskStore::accepted_submissions(const std::string& image_id) const {
  std::shared_lock lock(*mutex_);
  std::vector<MergeInput> out;
  for (const auto& [id, t] : tasks_) {
    if (t.image_id != image_id || t.state != TaskState::kAccepted) continue;
    out.push_back({t, submissions_.at(id)});
  }
  return out;
}

nlohmann::json TaskStore::snapshot() const {
  std::shared_lock lock(*mutex_);
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& [id, t] : tasks_) tasks.push_back(to_json(t));
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& [id, s] : submissions_) {
    nlohmann::json entry = to_json(s);
    if (const auto v = verdicts_.find(id); v != verdicts_.end()) entry["verdict"] = to_json(v->second);
    if (const auto p = payouts_.find(id); p != payouts_.end()) entry["payout"] = to_json(p->second);
    subs.push_back(std::move(entry));
  }
  nlohmann::json open = open_;
  return {{"seq", seq_},
          {"next_task_id", next_task_id_},
          {"next_worker", next_worker_},
          {"workers", workers_},
          {"tasks", std::move(tasks)},
          {"submissions", std::move(subs)},
          {"open_pool", std::move(open)}};
}

}  // namespace blockforge
