#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "blockforge/service.hpp"
#include "fixtures.hpp"

using namespace blockforge;
using nlohmann::json;

namespace {

// A dataset, a service with a controllable clock and a live HTTP server.
class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    manifest_ = fixtures::write_source_dataset(tmp_.path(), "city", 2);
    dataset_ = ingest(manifest_, tmp_.path() / "store");
    log_ = std::make_unique<EventLog>(dataset_.dir() / "events.jsonl");
    service_ = std::make_unique<AnnotationService>(dataset_, store_config(), log_.get(),
                                                   [this] { return now_.load(); });
    plans_ = plan_dataset(dataset_, 10, 10, Strategy::kPseudoCheckerboard, 0.05, 0, 0);
    service_->create_tasks(plans_);
    start(*service_);
  }

  void TearDown() override { stop(); }

  StoreConfig store_config() const {
    StoreConfig c;
    c.palette = dataset_.palette();
    c.seed = 4;
    return c;
  }

  void start(AnnotationService& svc) {
    server_ = std::make_unique<httplib::Server>();
    svc.bind(*server_);
    port_ = server_->bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }

  void stop() {
    if (!server_) return;
    server_->stop();
    thread_.join();
    server_.reset();
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }

  std::string new_worker() {
    auto res = client_->Post("/workers", "", "application/json");
    EXPECT_EQ(res->status, 201);
    return json::parse(res->body).at("worker_id");
  }

  json next(const std::string& worker) {
    auto res = post("/tasks/next", {{"worker_id", worker}});
    EXPECT_EQ(res->status, 200);
    return json::parse(res->body);
  }

  // One unit-square polygon per ground-truth pixel of the block.
  json faithful_payload(const json& task, double seconds) {
    const LabelMap gt = *dataset_.load_gt(task.at("image_id"));
    const auto& r = task.at("block_rect");
    json polys = json::array();
    for (int y = r.at("y0"); y < r.at("y1").get<int>(); ++y) {
      for (int x = r.at("x0"); x < r.at("x1").get<int>(); ++x) {
        polys.push_back({{"class_id", gt.at(x, y)},
                         {"vertices", {{x, y}, {x + 1, y}, {x + 1, y + 1}, {x, y + 1}}}});
      }
    }
    return {{"task_id", task.at("task_id")}, {"active_seconds", seconds}, {"polygons", polys}};
  }

  json submit(const json& task, double seconds, int expect_status = 200) {
    auto res = post("/tasks/" + std::to_string(task.at("task_id").get<TaskId>()) + "/submission",
                    faithful_payload(task, seconds));
    EXPECT_EQ(res->status, expect_status) << res->body;
    return json::parse(res->body);
  }

  // Runs every open task to completion, one worker at a time.
  void drain(double seconds) {
    const std::string w = new_worker();
    while (true) {
      auto res = post("/tasks/next", {{"worker_id", w}});
      if (res->status == 204) break;
      const json task = json::parse(res->body);
      now_ += seconds;
      submit(task, seconds);
    }
  }

  fixtures::TempDir tmp_{"service"};
  fixtures::fs::path manifest_;
  Dataset dataset_;
  std::unique_ptr<EventLog> log_;
  std::unique_ptr<AnnotationService> service_;
  std::map<std::string, SelectionPlan> plans_;
  std::atomic<double> now_{1000.0};
  std::unique_ptr<httplib::Server> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST_F(ServiceTest, TaskDescriptor) {
  const json task = next(new_worker());
  const std::string image_id = task.at("image_id");
  const BlockGrid g = dataset_.grid(image_id);
  const Rect r = g.block_rect(task.at("block").at("row"), task.at("block").at("col"));
  EXPECT_EQ(task.at("block_rect"), json({{"x0", r.x0}, {"y0", r.y0}, {"x1", r.x1}, {"y1", r.y1}}));
  EXPECT_EQ(task.at("highlight_rect"),
            json({{"x0", r.x0 - 1}, {"y0", r.y0 - 1}, {"x1", r.x1 + 1}, {"y1", r.y1 + 1}}));
  EXPECT_EQ(task.at("image_url"), "/images/" + image_id);
  EXPECT_EQ(task.at("min_seconds"), 10.0);
  EXPECT_EQ(task.at("kind"), "block");
  EXPECT_EQ(task.at("palette").size(), 4u);
  EXPECT_EQ(task.at("image_size"), json({{"width", 60}, {"height", 40}}));
}

TEST_F(ServiceTest, SubmitTooFastIsRejectedAndRespawned) {
  const json task = next(new_worker());
  now_ += 9.0;
  const json verdict = submit(task, 9.0);
  EXPECT_EQ(verdict.at("accepted"), false);
  EXPECT_EQ(verdict.at("reason"), "too_fast");
  EXPECT_TRUE(verdict.at("payout").is_null());
  EXPECT_FALSE(verdict.at("respawned_task").is_null());
}

TEST_F(ServiceTest, WallClockOverridesClientSeconds) {
  const json task = next(new_worker());
  now_ += 4.0;
  const json verdict = submit(task, 60.0);
  EXPECT_EQ(verdict.at("reason"), "too_fast");
  EXPECT_EQ(verdict.at("effective_seconds"), 4.0);
}

TEST_F(ServiceTest, AcceptedSubmissionIsPaid) {
  const json task = next(new_worker());
  now_ += 93.0;
  const json verdict = submit(task, 93.0);
  EXPECT_EQ(verdict.at("accepted"), true) << verdict.dump();
  EXPECT_NEAR(verdict.at("payout").at("bonus").get<double>(), 0.0692, 1e-4);
}

TEST_F(ServiceTest, DoubleSubmitConflicts) {
  const json task = next(new_worker());
  now_ += 30.0;
  submit(task, 30.0);
  const json err = submit(task, 30.0, 409);
  EXPECT_TRUE(err.contains("error"));
}

TEST_F(ServiceTest, EmptyQueueIs204) {
  drain(20.0);
  auto res = post("/tasks/next", {{"worker_id", new_worker()}});
  EXPECT_EQ(res->status, 204);
  EXPECT_TRUE(res->body.empty());
}

TEST_F(ServiceTest, NotFound) {
  EXPECT_EQ(post("/tasks/next", {{"worker_id", "w999"}})->status, 404);
  EXPECT_EQ(post("/tasks/424242/submission", {{"active_seconds", 20}, {"polygons", json::array()}})->status,
            404);
  EXPECT_EQ(client_->Get("/images/nope")->status, 404);
  EXPECT_EQ(client_->Get("/export/other")->status, 404);
  EXPECT_EQ(client_->Get("/export/city/nope")->status, 404);
}

TEST_F(ServiceTest, SchemaViolations) {
  const json task = next(new_worker());
  const std::string path = "/tasks/" + std::to_string(task.at("task_id").get<TaskId>()) + "/submission";
  json good = faithful_payload(task, 30.0);

  EXPECT_EQ(client_->Post(path, "{not json", "application/json")->status, 422);
  EXPECT_EQ(post("/tasks/next", json::object())->status, 422);

  json wrong_id = good;
  wrong_id["task_id"] = 999999;
  EXPECT_EQ(post(path, wrong_id)->status, 422);

  json negative = good;
  negative["active_seconds"] = -1;
  EXPECT_EQ(post(path, negative)->status, 422);

  json bad_class = good;
  bad_class["polygons"][0]["class_id"] = 9;
  EXPECT_EQ(post(path, bad_class)->status, 422);

  json two_vertices = good;
  two_vertices["polygons"][0]["vertices"] = {{0, 0}, {1, 1}};
  EXPECT_EQ(post(path, two_vertices)->status, 422);

  json outside = good;
  outside["polygons"][0]["vertices"][0] = {61.5, 3};
  EXPECT_EQ(post(path, outside)->status, 422);

  json slack = good;
  slack["polygons"][0]["vertices"][0] = {-1.0, 41.0};
  now_ += 30.0;
  EXPECT_EQ(post(path, slack)->status, 200);
}

TEST_F(ServiceTest, ImagesAreServedVerbatim) {
  auto res = client_->Get("/images/im1");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  const Bytes file = read_file(dataset_.image_path("im1"));
  EXPECT_EQ(res->body, std::string(file.begin(), file.end()));
}

TEST_F(ServiceTest, ExportIsIdempotent) {
  drain(30.0);
  auto first = client_->Get("/export/city");
  ASSERT_EQ(first->status, 200);
  const Bytes a = read_file(dataset_.dir() / "export" / "im0.png");
  auto second = client_->Get("/export/city");
  const Bytes b = read_file(dataset_.dir() / "export" / "im0.png");
  EXPECT_EQ(a, b);
  EXPECT_EQ(first->body, second->body);

  // Faithful submissions reproduce ground truth inside every selected block.
  const LabelMap merged = decode_label_map(b);
  const LabelMap expected = degrade(*dataset_.load_gt("im0"), plans_.at("im0"));
  EXPECT_EQ(merged, expected);
  auto single = client_->Get("/export/city/im0");
  ASSERT_EQ(single->status, 200);
  EXPECT_EQ(single->body, std::string(b.begin(), b.end()));
  EXPECT_EQ(json::parse(first->body).at("images").size(), 2u);
}

TEST_F(ServiceTest, ReplayReproducesStatus) {
  const std::string w = new_worker();
  for (int i = 0; i < 6; ++i) {
    const json task = next(w);
    const double secs = i % 3 == 0 ? 5.0 : 25.0;
    now_ += secs;
    submit(task, secs);
  }
  next(w);  // leaves one task assigned
  const std::string before = client_->Get("/status")->body;
  const json counts = json::parse(before);
  EXPECT_EQ(counts.at("assigned"), 1);
  EXPECT_EQ(counts.at("rejected"), 2);
  EXPECT_EQ(counts.at("accepted"), 4);
  EXPECT_EQ(counts.at("created"), 12);  // 2 images x 5 blocks + 2 respawns

  stop();
  const auto events = EventLog::read(dataset_.dir() / "events.jsonl");
  AnnotationService restored(dataset_, store_config(), events, nullptr, [this] { return now_.load(); });
  start(restored);
  EXPECT_EQ(client_->Get("/status")->body, before);
  EXPECT_EQ(restored.store().snapshot_bytes(), service_->store().snapshot_bytes());
  stop();
}
