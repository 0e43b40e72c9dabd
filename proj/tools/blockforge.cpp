// blockforge: command-line front end for block annotation datasets.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <cstdio>
#include <iostream>

#include "blockforge/block_select.hpp"
#include "blockforge/codec.hpp"
#include "blockforge/dataset.hpp"
#include "blockforge/inpaint.hpp"
#include "blockforge/metrics.hpp"
#include "blockforge/service.hpp"
#include "blockforge/task_store.hpp"

namespace fs = std::filesystem;
using namespace blockforge;

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

struct CommonOptions {
  std::string data_root;
  std::string dataset;
};

struct PlanOptions {
  std::string grid;
  std::string strategy = "pseudo-checkerboard";
  double budget = 0.5;
  int phase = 0;
  std::uint64_t seed = 0;
};

std::pair<int, int> parse_grid(const std::string& text, const Dataset& ds) {
  if (text.empty()) return {ds.manifest().grid.rows, ds.manifest().grid.cols};
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "grid must look like RxC");
  try {
    return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "grid must look like RxC: " + text);
  }
}

fs::path root_of(const CommonOptions& o) {
  return storage_root(o.data_root.empty() ? std::nullopt : std::optional<fs::path>(o.data_root));
}

Dataset open(const CommonOptions& o) { return open_dataset(root_of(o), o.dataset); }

std::map<std::string, SelectionPlan> make_plans(const Dataset& ds, const PlanOptions& p) {
  const auto [rows, cols] = parse_grid(p.grid, ds);
  return plan_dataset(ds, rows, cols, parse_strategy(p.strategy), p.budget, p.phase, p.seed);
}

void add_plan_flags(CLI::App* cmd, PlanOptions& p) {
  cmd->add_option("--grid", p.grid, "Block grid RxC (default: dataset grid)");
  cmd->add_option("--strategy", p.strategy,
                  "checkerboard | pseudo-checkerboard | random | all | none");
  cmd->add_option("--budget", p.budget, "Fraction of blocks per image")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--phase", p.phase, "Serpentine offset (checkerboard parity)");
  cmd->add_option("--seed", p.seed, "Seed for random selection");
}

void print(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

StoreConfig store_config(const Dataset& ds, double lease_seconds, std::uint64_t seed) {
  StoreConfig cfg;
  cfg.palette = ds.palette();
  cfg.lease_seconds = lease_seconds;
  cfg.seed = seed;
  return cfg;
}

int cmd_ingest(const CommonOptions& o, const std::string& manifest) {
  const Dataset ds = ingest(manifest, root_of(o));
  print({{"dataset_id", ds.id()},
         {"dir", ds.dir().string()},
         {"images", ds.manifest().images.size()},
         {"blocks", ds.block_count()}});
  return 0;
}

int cmd_plan(const CommonOptions& o, const PlanOptions& p, std::string out) {
  const Dataset ds = open(o);
  const auto plans = make_plans(ds, p);
  if (out.empty()) out = (ds.dir() / "plans.json").string();
  write_json_file(out, plans_to_json(plans));
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& [id, plan] : plans) {
    summary.push_back({{"image_id", id},
                       {"blocks", plan.selected.size()},
                       {"realized_budget", realized_budget(plan).fraction}});
  }
  print({{"plans", out}, {"images", summary}});
  return 0;
}

int cmd_degrade(const CommonOptions& o, const PlanOptions& p, const std::string& out) {
  const Dataset ds = open(o);
  const auto plans = make_plans(ds, p);
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& [id, plan] : plans) {
    const auto gt = ds.load_gt(id);
    if (!gt) throw Error(ErrorCode::kNotFound, "image " + id + " has no ground truth");
    const LabelMap partial = degrade(*gt, plan);
    save_label_map(fs::path(out) / (id + ".png"), partial);
    summary.push_back({{"image_id", id},
                       {"blocks", plan.selected.size()},
                       {"realized_budget", realized_budget(plan).fraction},
                       {"labelled_pixels", partial.labelled_count()}});
  }
  write_json_file(fs::path(out) / "plans.json", plans_to_json(plans));
  print({{"out", out}, {"images", summary}});
  return 0;
}

int cmd_serve(const CommonOptions& o, const PlanOptions& p, const std::string& host, int port,
              double lease, const std::string& plans_path) {
  const Dataset ds = open(o);
  const fs::path log_path = ds.dir() / "events.jsonl";
  const auto previous = fs::exists(log_path) ? EventLog::read(log_path)
                                             : std::vector<nlohmann::json>{};
  EventLog log(log_path);
  AnnotationService service(ds, store_config(ds, lease, p.seed), previous, &log);
  if (previous.empty()) {
    const auto plans = !plans_path.empty() ? plans_from_json(read_json_file(plans_path))
                       : fs::exists(ds.dir() / "plans.json")
                           ? plans_from_json(read_json_file(ds.dir() / "plans.json"))
                           : make_plans(ds, p);
    service.create_tasks(plans);
  }

  httplib::Server server;
  service.bind(server);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "serving " << ds.id() << " on http://" << host << ":" << port << " ("
            << service.store().status().open << " open tasks)" << std::endl;
  const bool ok = server.listen(host, port);
  g_server = nullptr;
  service.write_snapshot(ds.dir() / "snapshot.json");
  if (!ok) {
    std::cerr << "could not listen on " << host << ":" << port << std::endl;
    return 1;
  }
  return 0;
}

TaskStore replayed_store(const Dataset& ds) {
  const fs::path log_path = ds.dir() / "events.jsonl";
  if (!fs::exists(log_path)) throw Error(ErrorCode::kNotFound, "no event log for " + ds.id());
  return TaskStore::replay(store_config(ds, 30 * 60, 0), EventLog::read(log_path));
}

int cmd_merge(const CommonOptions& o, const std::string& out) {
  const Dataset ds = open(o);
  const TaskStore store = replayed_store(ds);
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& id : ds.image_ids()) {
    const ImageEntry& im = ds.image(id);
    const auto accepted = store.accepted_submissions(id);
    const LabelMap merged = merge_blocks(im.width, im.height, accepted, ds.palette());
    save_label_map(fs::path(out) / (id + ".png"), merged);
    summary.push_back({{"image_id", id},
                       {"accepted_blocks", accepted.size()},
                       {"labelled_fraction", static_cast<double>(merged.labelled_count()) /
                                                 static_cast<double>(merged.pixel_count())}});
  }
  print({{"out", out}, {"images", summary}});
  return 0;
}

int cmd_inpaint(const CommonOptions& o, const std::string& partial_dir, const SamplerConfig& cfg,
                int k, double threshold, const std::string& out) {
  const Dataset ds = open(o);
  const auto plans = plans_from_json(read_json_file(fs::path(partial_dir) / "plans.json"));
  ReferencePredictorParams params;
  params.k = k;
  params.rho = cfg.rho;
  const Predictor predictor = reference_predictor(params);
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& [id, plan] : plans) {
    const fs::path partial_path = fs::path(partial_dir) / (id + ".png");
    if (!fs::exists(partial_path)) continue;
    const InpaintResult res = inpaint_image(ds.load_image(id), load_label_map(partial_path), plan,
                                            ds.palette().size(), predictor, cfg, threshold);
    save_label_map(fs::path(out) / (id + ".png"), res.labels);
    const auto q = quantize_uncertainty(res.u, res.u_max);
    write_file(fs::path(out) / (id + "_uncertainty.png"),
               encode_gray16(res.labels.width, res.labels.height, q));
    const nlohmann::json sidecar = {{"coverage", res.coverage},
                                    {"coverage_unhinted", res.coverage_unhinted},
                                    {"rel_threshold", threshold},
                                    {"g", cfg.g},
                                    {"seed", cfg.seed},
                                    {"rho", cfg.rho},
                                    {"k", k},
                                    {"uncertainty_max", res.u_max}};
    write_json_file(fs::path(out) / (id + ".json"), sidecar);
    nlohmann::json entry = sidecar;
    entry["image_id"] = id;
    summary.push_back(entry);
  }
  print({{"out", out}, {"images", summary}});
  return 0;
}

int cmd_evaluate(const CommonOptions& o, const std::string& pred_dir, const std::string& out) {
  const Dataset ds = open(o);
  const int k = ds.palette().size();
  ConfusionMatrix total(k);
  nlohmann::json per_image = nlohmann::json::array();
  for (const auto& id : ds.image_ids()) {
    const auto gt = ds.load_gt(id);
    const fs::path pred_path = fs::path(pred_dir) / (id + ".png");
    if (!gt || !fs::exists(pred_path)) continue;
    const LabelMap pred = load_label_map(pred_path);
    total += confusion(pred, *gt, k);
    nlohmann::json entry;
    try {
      entry = to_json(evaluate(pred, *gt, k));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptyEvaluation) throw;
      entry = {{"error", e.what()}};
    }
    entry["image_id"] = id;
    per_image.push_back(std::move(entry));
  }
  nlohmann::json aggregate = total.total() ? to_json(report_from_confusion(total))
                                           : nlohmann::json(nullptr);
  if (aggregate.is_object()) {
    aggregate.erase("small_region_error");
    aggregate.erase("segment_counts");
  }
  const nlohmann::json report = {{"dataset_id", ds.id()},
                                 {"images", per_image},
                                 {"aggregate", aggregate}};
  if (!out.empty()) write_json_file(out, report);
  print(report);
  return 0;
}

int cmd_report(const CommonOptions& o, const std::string& baseline, const std::string& candidate) {
  nlohmann::json report;
  if (!o.dataset.empty()) {
    const Dataset ds = open(o);
    const TaskStore store = replayed_store(ds);
    const StatusCounts s = store.status();
    report["status"] = to_json(s);
    double seconds = 0.0;
    std::size_t accepted = 0;
    for (const auto& id : ds.image_ids()) {
      for (const auto& m : store.accepted_submissions(id)) {
        seconds += std::min(m.submission.active_seconds,
                            m.task.submitted_at.value_or(0) - m.task.assigned_at.value_or(0));
        ++accepted;
      }
    }
    report["cost"] = {
        {"accepted_blocks", accepted},
        {"total_paid", s.total_base + s.total_bonus},
        {"mean_bonus", accepted ? s.total_bonus / accepted : 0.0},
        {"mean_active_seconds", accepted ? seconds / accepted : 0.0},
    };
  }
  if (!baseline.empty() && !candidate.empty()) {
    const double a = read_json_file(baseline).at("aggregate").at("class_balanced_error").get<double>();
    const double b = read_json_file(candidate).at("aggregate").at("class_balanced_error").get<double>();
    const ErrorDelta d = compare_errors(a, b);
    report["error_comparison"] = {{"baseline", a},
                                  {"candidate", b},
                                  {"absolute_delta", d.absolute},
                                  {"relative_delta", d.relative}};
  }
  print(report);
  return 0;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kSchemaViolation: return 2;
    case ErrorCode::kNotFound: return 3;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block annotation toolkit: plan, collect, merge, inpaint and evaluate block labels"};
  app.require_subcommand(1);
  app.fallthrough();
  CommonOptions common;
  app.add_option("--data", common.data_root, "Storage root (default: $BLOCKFORGE_DATA)");

  std::string manifest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Register a dataset from a manifest");
  ingest_cmd->add_option("--manifest", manifest, "Manifest JSON")->required();

  PlanOptions plan_opts;
  std::string out;
  auto* plan_cmd = app.add_subcommand("plan", "Choose blocks to annotate for every image");
  plan_cmd->add_option("--dataset", common.dataset)->required();
  add_plan_flags(plan_cmd, plan_opts);
  plan_cmd->add_option("--out", out, "Plans JSON (default: <dataset>/plans.json)");

  auto* degrade_cmd = app.add_subcommand("degrade", "Write Block-X% partial maps from ground truth");
  degrade_cmd->add_option("--dataset", common.dataset)->required();
  add_plan_flags(degrade_cmd, plan_opts);
  degrade_cmd->add_option("--out", out, "Output directory")->required();

  std::string host = "127.0.0.1";
  int port = 8080;
  double lease = 30 * 60;
  std::string plans_path;
  auto* serve_cmd = app.add_subcommand("serve", "Run the annotation HTTP service");
  serve_cmd->add_option("--dataset", common.dataset)->required();
  add_plan_flags(serve_cmd, plan_opts);
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--lease", lease, "Assignment lease in seconds");
  serve_cmd->add_option("--plans", plans_path, "Plans JSON used when no event log exists");

  auto* merge_cmd = app.add_subcommand("merge", "Merge accepted submissions into label maps");
  merge_cmd->add_option("--dataset", common.dataset)->required();
  merge_cmd->add_option("--out", out, "Output directory")->required();

  SamplerConfig sampler;
  int k = 9;
  double threshold = 0.2;
  std::string partial_dir;
  auto* inpaint_cmd = app.add_subcommand("inpaint", "Inpaint unannotated blocks with uncertainty");
  inpaint_cmd->add_option("--dataset", common.dataset)->required();
  inpaint_cmd->add_option("--partial", partial_dir, "Directory written by degrade")->required();
  inpaint_cmd->add_option("--g", sampler.g, "Stochastic trials")->check(CLI::Range(2, 1000));
  inpaint_cmd->add_option("--rho", sampler.rho, "Hint keep probability")->check(CLI::Range(0.0, 1.0));
  inpaint_cmd->add_option("--seed", sampler.seed);
  inpaint_cmd->add_option("--k", k, "Neighbours");
  inpaint_cmd->add_option("--threshold", threshold, "Relative uncertainty threshold")
      ->check(CLI::Range(0.0, 1.0));
  inpaint_cmd->add_option("--out", out, "Output directory")->required();

  std::string pred_dir;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score label maps against ground truth");
  evaluate_cmd->add_option("--dataset", common.dataset)->required();
  evaluate_cmd->add_option("--pred", pred_dir, "Directory of <image_id>.png maps")->required();
  evaluate_cmd->add_option("--out", out, "Report JSON");

  std::string baseline, candidate;
  auto* report_cmd = app.add_subcommand("report", "Queue counts, payouts and error comparisons");
  report_cmd->add_option("--dataset", common.dataset);
  report_cmd->add_option("--baseline", baseline, "evaluate report used as baseline");
  report_cmd->add_option("--candidate", candidate, "evaluate report to compare");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) return cmd_ingest(common, manifest);
    if (*plan_cmd) return cmd_plan(common, plan_opts, out);
    if (*degrade_cmd) return cmd_degrade(common, plan_opts, out);
    if (*serve_cmd) return cmd_serve(common, plan_opts, host, port, lease, plans_path);
    if (*merge_cmd) return cmd_merge(common, out);
    if (*inpaint_cmd) return cmd_inpaint(common, partial_dir, sampler, k, threshold, out);
    if (*evaluate_cmd) return cmd_evaluate(common, pred_dir, out);
    if (*report_cmd) return cmd_report(common, baseline, candidate);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << std::endl;
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
