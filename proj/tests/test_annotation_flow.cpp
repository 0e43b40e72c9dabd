#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "blockforge/annotation_flow.hpp"

using namespace blockforge;

namespace {

const Palette kPalette = Palette::with_classes(6);

AnnotationTask assigned(TaskKind kind = TaskKind::kBlock) {
  AnnotationTask t;
  t.task_id = 7;
  t.image_id = "img";
  t.grid = kind == TaskKind::kFull ? decompose_grid(400, 400, 1, 1) : decompose_grid(400, 400, 4, 4);
  t.block = {0, 0};
  t.kind = kind;
  t.state = TaskState::kAssigned;
  t.worker_id = "w1";
  t.assigned_at = 0.0;
  return t;
}

// n separated 4x4 squares, row-major inside the top-left 100x100 block.
Submission squares(int n, double secs) {
  Submission s;
  s.task_id = 7;
  s.worker_id = "w1";
  s.active_seconds = secs;
  for (int i = 0; i < n; ++i) {
    const double x = (i % 10) * 10.0, y = (i / 10) * 10.0;
    s.polygons.push_back({{{x, y}, {x + 4, y}, {x + 4, y + 4}, {x, y + 4}}, i % 6, i});
  }
  return s;
}

PolygonAnnotation rect_poly(const Rect& r, int cls) {
  return {{{double(r.x0), double(r.y0)},
           {double(r.x1), double(r.y0)},
           {double(r.x1), double(r.y1)},
           {double(r.x0), double(r.y1)}},
          cls,
          0};
}

MergeInput merge_input(TaskId id, const BlockGrid& g, BlockRef b, double at,
                       std::vector<PolygonAnnotation> polys) {
  MergeInput m;
  m.task.task_id = id;
  m.task.image_id = "img";
  m.task.grid = g;
  m.task.block = b;
  m.task.state = TaskState::kAccepted;
  m.task.submitted_at = at;
  m.submission.task_id = id;
  m.submission.polygons = std::move(polys);
  return m;
}

}  // namespace

TEST(CreateTasks, Counts) {
  std::vector<std::string> ids;
  std::map<std::string, SelectionPlan> plans;
  for (int i = 0; i < 13; ++i) {
    ids.push_back("img" + std::to_string(i));
    plans[ids.back()] = checkerboard(decompose_grid(2048, 1024, 10, 10), 0);
  }
  const auto tasks = create_tasks(ids, plans);
  EXPECT_EQ(tasks.size(), 650u);
  std::set<TaskId> unique;
  for (const auto& t : tasks) {
    unique.insert(t.task_id);
    EXPECT_EQ(t.state, TaskState::kOpen);
    EXPECT_EQ(t.kind, TaskKind::kBlock);
  }
  EXPECT_EQ(unique.size(), 650u);

  std::map<std::string, SelectionPlan> none{{"img0", no_blocks(decompose_grid(20, 20, 2, 2))}};
  EXPECT_TRUE(create_tasks(ids, none).empty());

  std::map<std::string, SelectionPlan> full;
  for (const auto& id : ids) full[id] = all_blocks(decompose_grid(64, 64, 1, 1));
  const auto whole = create_tasks(ids, full, 100);
  ASSERT_EQ(whole.size(), 13u);
  EXPECT_EQ(whole.front().kind, TaskKind::kFull);
  EXPECT_EQ(whole.front().task_id, 100u);

  std::map<std::string, SelectionPlan> unknown{{"nope", all_blocks(decompose_grid(8, 8, 1, 1))}};
  EXPECT_THROW(create_tasks(ids, unknown), Error);
}

TEST(Validate, QcTable) {
  const QcPolicy qc;
  const AnnotationTask t = assigned();
  EXPECT_EQ(validate_submission(t, squares(5, 9.0), std::nullopt, qc, kPalette),
            Verdict::reject(RejectReason::kTooFast));
  EXPECT_EQ(validate_submission(t, squares(3, 60.0), 12, qc, kPalette),
            Verdict::reject(RejectReason::kTooFewSegments));
  EXPECT_EQ(validate_submission(t, squares(4, 60.0), 12, qc, kPalette), Verdict::accept());
  EXPECT_EQ(validate_submission(t, squares(4, 10.0), 12, qc, kPalette), Verdict::accept());
  // Too fast is reported even when the segment count also fails.
  EXPECT_EQ(validate_submission(t, squares(0, 2.0), 12, qc, kPalette),
            Verdict::reject(RejectReason::kTooFast));
  const AnnotationTask full = assigned(TaskKind::kFull);
  EXPECT_EQ(validate_submission(full, squares(4, 179.0), std::nullopt, qc, kPalette),
            Verdict::reject(RejectReason::kTooFast));
  EXPECT_EQ(validate_submission(full, squares(4, 180.0), std::nullopt, qc, kPalette),
            Verdict::accept());
}

TEST(Validate, StrictSegmentInequality) {
  const QcPolicy qc;
  const AnnotationTask t = assigned();
  for (int gt = 1; gt <= 100; ++gt) {
    // Smallest passing count is the least integer strictly above gt / 4.
    const int need = gt / 4 + 1;
    EXPECT_FALSE(validate_submission(t, squares(need - 1, 60.0), gt, qc, kPalette).accepted) << gt;
    EXPECT_TRUE(validate_submission(t, squares(need, 60.0), gt, qc, kPalette).accepted) << gt;
  }
}

TEST(Validate, SegmentsAreClippedToBlock) {
  const AnnotationTask t = assigned();
  Submission s = squares(0, 60.0);
  // Entirely outside block (0, 0): contributes nothing.
  s.polygons.push_back(rect_poly({200, 200, 220, 220}, 1));
  // Straddles the block edge: counts once.
  s.polygons.push_back(rect_poly({90, 10, 110, 20}, 2));
  EXPECT_EQ(submission_segment_count(t, s, kPalette), 1);
}

TEST(Validate, RequiresAssignedTask) {
  AnnotationTask t = assigned();
  t.state = TaskState::kOpen;
  try {
    validate_submission(t, squares(4, 60.0), 12, QcPolicy{}, kPalette);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStateViolation);
  }
}

TEST(Payout, Examples) {
  const PayoutPolicy p = PayoutPolicy::cityscapes_block();
  const Payout a = compute_payout(p, 93.0);
  EXPECT_DOUBLE_EQ(a.base, 0.06);
  EXPECT_NEAR(a.total(), 0.1292, 1e-4);
  EXPECT_NEAR(a.bonus, 0.0692, 1e-4);
  EXPECT_EQ(compute_payout(p, 30.0).bonus, 0.0);
  EXPECT_DOUBLE_EQ(compute_payout(p, 600.0).bonus, 0.24);
  EXPECT_THROW(compute_payout(p, -1.0), Error);
}

TEST(Payout, MultiplierCapPresets) {
  // $4/hr, capped at 1.5x base: the bonus never exceeds half the base.
  const Payout block = compute_payout(PayoutPolicy::suncg_block(), 3600.0);
  EXPECT_DOUBLE_EQ(block.bonus, 0.03);
  const Payout full = compute_payout(PayoutPolicy::suncg_full(), 1200.0);
  EXPECT_NEAR(full.bonus, 4.0 / 3.0 - 0.96, 1e-12);
  EXPECT_DOUBLE_EQ(compute_payout(PayoutPolicy::suncg_full(), 3600.0).bonus, 0.48);
  EXPECT_DOUBLE_EQ(compute_payout(PayoutPolicy::cityscapes_block(), 60.0, 0.5).base, 0.5);
}

TEST(Payout, BoundsHoldForAllDurations) {
  for (const PayoutPolicy& p : {PayoutPolicy::cityscapes_block(), PayoutPolicy::suncg_block(),
                                PayoutPolicy::suncg_full()}) {
    const double cap = std::min(p.bonus_cap.value_or(INFINITY),
                                p.bonus_multiplier_cap ? (*p.bonus_multiplier_cap - 1) * p.base_pay
                                                       : INFINITY);
    EXPECT_DOUBLE_EQ(p.max_bonus(p.base_pay), cap);
    for (double s = 0.0; s < 20000.0; s += 7.3) {
      const Payout pay = compute_payout(p, s);
      EXPECT_GE(pay.bonus, 0.0);
      EXPECT_LE(pay.bonus, cap + 1e-15);
    }
  }
}

TEST(Merge, DisjointBlocksConcatenate) {
  const BlockGrid g = decompose_grid(20, 10, 1, 2);
  const std::vector<MergeInput> in{
      merge_input(1, g, {0, 0}, 1.0, {rect_poly({0, 0, 20, 10}, 2)}),
      merge_input(2, g, {0, 1}, 2.0, {rect_poly({0, 0, 20, 10}, 4)})};
  const LabelMap m = merge_blocks(20, 10, in, kPalette);
  EXPECT_EQ(m.at(9, 5), 2);
  EXPECT_EQ(m.at(10, 5), 4);
  EXPECT_EQ(m.labelled_count(), 200u);
}

TEST(Merge, MajorityAndTieBreak) {
  const BlockGrid g = decompose_grid(4, 4, 1, 1);
  const Rect all{0, 0, 4, 4};
  const std::vector<MergeInput> majority{merge_input(1, g, {0, 0}, 3.0, {rect_poly(all, 5)}),
                                         merge_input(2, g, {0, 0}, 1.0, {rect_poly(all, 2)}),
                                         merge_input(3, g, {0, 0}, 2.0, {rect_poly(all, 2)})};
  EXPECT_EQ(merge_blocks(4, 4, majority, kPalette).at(0, 0), 2);
  std::vector<MergeInput> tie{merge_input(1, g, {0, 0}, 5.0, {rect_poly(all, 5)}),
                              merge_input(2, g, {0, 0}, 4.0, {rect_poly(all, 2)})};
  EXPECT_EQ(merge_blocks(4, 4, tie, kPalette).at(0, 0), 2);
  // Same timestamp: lower task id is earlier.
  tie[1].task.submitted_at = 5.0;
  EXPECT_EQ(merge_blocks(4, 4, tie, kPalette).at(0, 0), 5);
  EXPECT_EQ(merge_blocks(4, 4, {}, kPalette).labelled_count(), 0u);
}

TEST(Merge, InvariantUnderReordering) {
  std::mt19937_64 rng(17);
  const BlockGrid g = decompose_grid(30, 30, 3, 3);
  std::vector<MergeInput> in;
  for (TaskId id = 1; id <= 24; ++id) {
    const BlockRef b{static_cast<int>(rng() % 3), static_cast<int>(rng() % 3)};
    std::vector<PolygonAnnotation> polys;
    for (int p = 0; p < 3; ++p) {
      const double x = static_cast<double>(rng() % 30), y = static_cast<double>(rng() % 30);
      polys.push_back({{{x, y}, {x + 9, y + 1}, {x + 4, y + 8}}, static_cast<int>(rng() % 6), p});
    }
    in.push_back(merge_input(id, g, b, static_cast<double>(rng() % 5), polys));
  }
  const LabelMap ref = merge_blocks(30, 30, in, kPalette);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(in.begin(), in.end(), rng);
    EXPECT_EQ(merge_blocks(30, 30, in, kPalette), ref);
  }
}

TEST(TimeToBlocks, Examples) {
  const BlockGrid g = decompose_grid(500, 375, 10, 10);
  EXPECT_EQ(time_to_blocks(25.0, 240.0, g), 5);
  for (double f : {60.0, 240.0, 5400.0, 7.0}) EXPECT_EQ(time_to_blocks(2.2 * f, f, g), 100);
  EXPECT_EQ(time_to_blocks(420.0, 5400.0, g), 4);
  EXPECT_EQ(time_to_blocks(1e6, 10.0, g), 100);
  EXPECT_THROW(time_to_blocks(25.0, 240.0, decompose_grid(500, 375, 4, 4)), Error);
  EXPECT_THROW(time_to_blocks(0.0, 240.0, g), Error);
}

TEST(Json, RoundTrips) {
  AnnotationTask t = assigned();
  t.respawn_of = 3;
  t.submitted_at = 12.5;
  EXPECT_EQ(task_from_json(nlohmann::json::parse(to_json(t).dump())), t);
  const Submission s = squares(3, 42.0);
  EXPECT_EQ(submission_from_json(nlohmann::json::parse(to_json(s).dump())), s);
  EXPECT_EQ(to_json(Verdict::reject(RejectReason::kTooFast)).at("reason"), "too_fast");
  EXPECT_EQ(parse_task_state(to_string(TaskState::kSubmitted)), TaskState::kSubmitted);
  EXPECT_EQ(parse_task_kind("full"), TaskKind::kFull);
}
