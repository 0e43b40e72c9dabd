#include "blockforge/service.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>

#include "blockforge/codec.hpp"

namespace blockforge {

namespace {

double system_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

nlohmann::json rect_json(const Rect& r) {
  return {{"x0", r.x0}, {"y0", r.y0}, {"x1", r.x1}, {"y1", r.y1}};
}

ApiResponse from_error(const Error& e) { return ApiResponse::error(http_status(e.code()), e.what()); }

nlohmann::json parse_body(const std::string& body) {
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("body is not valid JSON: ") + e.what());
  }
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kStateViolation: return 409;
    case ErrorCode::kIoError: return 500;
    default: return 422;
  }
}

Submission parse_submission_payload(const nlohmann::json& body, TaskId path_task_id,
                                    const Palette& palette, int image_width, int image_height) {
  constexpr double kSlack = 1.0;
  if (!body.is_object()) throw Error(ErrorCode::kSchemaViolation, "payload must be an object");
  Submission s;
  try {
    if (body.contains("task_id")) {
      s.task_id = body.at("task_id").get<TaskId>();
      if (s.task_id != path_task_id) {
        throw Error(ErrorCode::kSchemaViolation, "task_id does not match the request path");
      }
    } else {
      s.task_id = path_task_id;
    }
    const auto& seconds = body.at("active_seconds");
    if (!seconds.is_number()) throw Error(ErrorCode::kSchemaViolation, "active_seconds must be a number");
    s.active_seconds = seconds.get<double>();
    if (!(s.active_seconds >= 0.0) || !std::isfinite(s.active_seconds)) {
      throw Error(ErrorCode::kSchemaViolation, "active_seconds must be a finite nonnegative number");
    }
    if (body.contains("worker_id")) s.worker_id = body.at("worker_id").get<std::string>();
    const auto& polygons = body.at("polygons");
    if (!polygons.is_array()) throw Error(ErrorCode::kSchemaViolation, "polygons must be a list");
    long long z = 0;
    for (const auto& pj : polygons) {
      PolygonAnnotation p = polygon_from_json(pj);
      if (!pj.contains("z_order")) p.z_order = z;
      ++z;
      if (p.vertices.size() < 3) {
        throw Error(ErrorCode::kSchemaViolation, "polygon needs at least 3 vertices");
      }
      if (!palette.contains(p.class_id)) {
        throw Error(ErrorCode::kSchemaViolation,
                    "class_id " + std::to_string(p.class_id) + " not in palette");
      }
      for (const auto& v : p.vertices) {
        if (!std::isfinite(v.x) || !std::isfinite(v.y) || v.x < -kSlack ||
            v.y < -kSlack || v.x > image_width + kSlack || v.y > image_height + kSlack) {
          throw Error(ErrorCode::kSchemaViolation, "vertex outside image bounds");
        }
      }
      s.polygons.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("malformed submission: ") + e.what());
  }
  return s;
}

AnnotationService::AnnotationService(Dataset dataset, StoreConfig config, EventLog* log,
                                     Clock clock)
    : dataset_(std::move(dataset)),
      store_(std::move(config), log),
      clock_(clock ? std::move(clock) : Clock(system_seconds)) {}

AnnotationService::AnnotationService(Dataset dataset, StoreConfig config,
                                     const std::vector<nlohmann::json>& events, EventLog* log,
                                     Clock clock)
    : dataset_(std::move(dataset)),
      store_(TaskStore::replay(std::move(config), events, log)),
      clock_(clock ? std::move(clock) : Clock(system_seconds)) {}

std::vector<AnnotationTask> AnnotationService::create_tasks(
    const std::map<std::string, SelectionPlan>& plans) {
  for (const auto& [id, plan] : plans) {
    const ImageEntry& im = dataset_.image(id);
    if (plan.grid.width() != im.width || plan.grid.height() != im.height) {
      throw Error(ErrorCode::kDimensionMismatch, "plan for " + id + " does not match the image");
    }
  }
  const auto ids = dataset_.image_ids();
  return store_.create_tasks(ids, plans);
}

std::optional<int> AnnotationService::gt_segments(const AnnotationTask& task) const {
  std::lock_guard lock(gt_mutex_);
  auto it = gt_cache_.find(task.image_id);
  if (it == gt_cache_.end()) it = gt_cache_.emplace(task.image_id, dataset_.load_gt(task.image_id)).first;
  if (!it->second) return std::nullopt;
  return connected_components(restrict_to_rect(*it->second, task.rect())).count;
}

nlohmann::json AnnotationService::describe(const AnnotationTask& task) const {
  const Rect block = task.rect();
  // The outline sits on the pixels just outside the block so it never covers
  // annotatable pixels.
  const Rect outline{block.x0 - 1, block.y0 - 1, block.x1 + 1, block.y1 + 1};
  return {{"task_id", task.task_id},
          {"image_id", task.image_id},
          {"image_url", "/images/" + task.image_id},
          {"kind", to_string(task.kind)},
          {"grid", {{"rows", task.grid.rows()}, {"cols", task.grid.cols()}}},
          {"block", {{"row", task.block.row}, {"col", task.block.col}}},
          {"block_rect", rect_json(block)},
          {"highlight_rect", rect_json(outline)},
          {"image_size", {{"width", task.grid.width()}, {"height", task.grid.height()}}},
          {"palette", to_json(dataset_.palette())},
          {"min_seconds", store_.config().qc.min_seconds(task.kind)}};
}

ApiResponse AnnotationService::register_worker() {
  return ApiResponse::json(201, {{"worker_id", store_.register_worker()}});
}

ApiResponse AnnotationService::next_task(const std::string& body) {
  try {
    const nlohmann::json j = parse_body(body);
    if (!j.is_object() || !j.contains("worker_id") || !j.at("worker_id").is_string()) {
      return ApiResponse::error(422, "worker_id (string) required");
    }
    const auto task = store_.assign_next(j.at("worker_id").get<std::string>(), now());
    if (!task) return ApiResponse{204, "", "application/json"};
    return ApiResponse::json(200, describe(*task));
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiResponse AnnotationService::submit(TaskId task_id, const std::string& body) {
  try {
    const auto task = store_.task(task_id);
    if (!task) return ApiResponse::error(404, "unknown task " + std::to_string(task_id));
    const Submission s = parse_submission_payload(parse_body(body), task_id, dataset_.palette(),
                                                  task->grid.width(), task->grid.height());
    const SubmissionOutcome out =
        store_.submit(s, now(), [this](const AnnotationTask& t) { return gt_segments(t); });
    nlohmann::json j = to_json(out.verdict);
    j["task_id"] = task_id;
    j["effective_seconds"] = out.effective_seconds;
    j["payout"] = out.payout ? to_json(*out.payout) : nlohmann::json(nullptr);
    j["respawned_task"] = out.respawned_task ? nlohmann::json(*out.respawned_task)
                                             : nlohmann::json(nullptr);
    return ApiResponse::json(200, j);
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiResponse AnnotationService::image(const std::string& image_id) const {
  try {
    const Bytes bytes = read_file(dataset_.image_path(image_id));
    return ApiResponse{200, std::string(bytes.begin(), bytes.end()), "image/png"};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiResponse AnnotationService::status() const {
  nlohmann::json j = to_json(store_.status());
  j["dataset_id"] = dataset_.id();
  return ApiResponse::json(200, j);
}

LabelMap AnnotationService::merged_labels(const std::string& image_id) const {
  const ImageEntry& im = dataset_.image(image_id);
  const auto accepted = store_.accepted_submissions(image_id);
  return merge_blocks(im.width, im.height, accepted, dataset_.palette());
}

ApiResponse AnnotationService::export_dataset(const std::string& dataset_id) {
  if (dataset_id != dataset_.id()) return ApiResponse::error(404, "unknown dataset " + dataset_id);
  try {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& id : dataset_.image_ids()) {
      const LabelMap merged = merged_labels(id);
      const std::string rel = "export/" + id + ".png";
      save_label_map(dataset_.dir() / rel, merged);
      images.push_back({{"image_id", id},
                        {"path", rel},
                        {"url", "/export/" + dataset_id + "/" + id},
                        {"labelled_pixels", merged.labelled_count()},
                        {"accepted_blocks", store_.accepted_submissions(id).size()}});
    }
    return ApiResponse::json(200, {{"dataset_id", dataset_id}, {"images", std::move(images)}});
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiResponse AnnotationService::export_image(const std::string& dataset_id,
                                            const std::string& image_id) {
  if (dataset_id != dataset_.id()) return ApiResponse::error(404, "unknown dataset " + dataset_id);
  try {
    const Bytes bytes = encode_label_map(merged_labels(image_id));
    return ApiResponse{200, std::string(bytes.begin(), bytes.end()), "image/png"};
  } catch (const Error& e) {
    return from_error(e);
  }
}

void AnnotationService::write_snapshot(const std::filesystem::path& path) const {
  write_json_file(path, store_.snapshot());
}

void AnnotationService::bind(httplib::Server& server) {
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    if (r.status != 204) res.set_content(r.body, r.content_type);
  };
  server.Post("/workers", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, register_worker());
  });
  server.Post("/tasks/next", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, next_task(req.body));
  });
  server.Post(R"(/tasks/(\d+)/submission)",
              [this, reply](const httplib::Request& req, httplib::Response& res) {
                TaskId id = 0;
                try {
                  id = std::stoull(req.matches[1].str());
                } catch (const std::exception&) {
                  reply(res, ApiResponse::error(404, "unknown task"));
                  return;
                }
                reply(res, submit(id, req.body));
              });
  server.Get(R"(/images/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, image(req.matches[1].str()));
  });
  server.Get(R"(/export/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, export_dataset(req.matches[1].str()));
  });
  server.Get(R"(/export/([^/]+)/([^/]+))",
             [this, reply](const httplib::Request& req, httplib::Response& res) {
               reply(res, export_image(req.matches[1].str(), req.matches[2].str()));
             });
  server.Get("/status", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, status());
  });
  server.set_exception_handler(
      [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string message = "internal error";
        try {
          if (ep) std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          message = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(nlohmann::json({{"error", message}}).dump(), "application/json");
      });
}

}  // namespace blockforge
