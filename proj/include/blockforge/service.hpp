#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "blockforge/dataset.hpp"
#include "blockforge/task_store.hpp"

namespace httplib {
class Server;
}

namespace blockforge {

/// Result of one API call, independent of the HTTP transport.
struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";

  static ApiResponse json(int status, const nlohmann::json& j) {
    return {status, j.dump(), "application/json"};
  }
  static ApiResponse error(int status, const std::string& message) {
    return json(status, {{"error", message}});
  }
};

/// Maps library error codes onto HTTP statuses: kNotFound -> 404,
/// kStateViolation -> 409, schema and argument errors -> 422.
int http_status(ErrorCode code);

/// Parses and validates an ApiSubmissionPayload against the task's image.
/// Vertices may exceed the image by at most one pixel. Throws kSchemaViolation.
Submission parse_submission_payload(const nlohmann::json& body, TaskId path_task_id,
                                    const Palette& palette, int image_width, int image_height);

/// Annotation workflow exposed over HTTP. Owns the task store; handlers are
/// safe to call concurrently.
class AnnotationService {
 public:
  using Clock = std::function<double()>;

  AnnotationService(Dataset dataset, StoreConfig config, EventLog* log = nullptr,
                    Clock clock = {});

  /// Rebuilds store state from logged events.
  AnnotationService(Dataset dataset, StoreConfig config, const std::vector<nlohmann::json>& events,
                    EventLog* log = nullptr, Clock clock = {});

  TaskStore& store() { return store_; }
  const Dataset& dataset() const { return dataset_; }

  std::vector<AnnotationTask> create_tasks(const std::map<std::string, SelectionPlan>& plans);

  ApiResponse register_worker();
  ApiResponse next_task(const std::string& body);
  ApiResponse submit(TaskId task_id, const std::string& body);
  ApiResponse image(const std::string& image_id) const;
  ApiResponse status() const;
  /// Merges accepted submissions per image, writes <dataset dir>/export and
  /// lists the results.
  ApiResponse export_dataset(const std::string& dataset_id);
  ApiResponse export_image(const std::string& dataset_id, const std::string& image_id);

  /// Merged label map for one image (all void when nothing is accepted).
  LabelMap merged_labels(const std::string& image_id) const;

  /// Task descriptor sent to annotators.
  nlohmann::json describe(const AnnotationTask& task) const;

  void write_snapshot(const std::filesystem::path& path) const;

  /// Registers all routes on server.
  void bind(httplib::Server& server);

 private:
  std::optional<int> gt_segments(const AnnotationTask& task) const;
  double now() const { return clock_(); }

  Dataset dataset_;
  TaskStore store_;
  Clock clock_;
  mutable std::mutex gt_mutex_;
  mutable std::map<std::string, std::optional<LabelMap>> gt_cache_;
};

}  // namespace blockforge
