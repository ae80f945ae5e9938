#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "figforge/detection_eval.hpp"
#include "figforge/rng.hpp"
#include "test_support.hpp"

using namespace figforge;
using support::DetectionInstance;

TEST_CASE("iou worked examples") {
  const BBox a{0, 0, 10, 10};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, BBox{10, 0, 10, 10}) == 0.0);   // touching edges, no overlap
  CHECK(iou(a, BBox{20, 20, 5, 5}) == 0.0);
  // Half-overlapping equal squares: 50 / (100 + 100 - 50) = 1/3.
  CHECK(iou(a, BBox{5, 0, 10, 10}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(iou(a, BBox{5, 0, 10, 10}) == iou(BBox{5, 0, 10, 10}, a));
}

TEST_CASE("greedy matching basics") {
  const std::vector<BBox> gt{{0, 0, 10, 10}, {20, 0, 10, 10}};

  SUBCASE("perfect detections all match") {
    DetectionSet dets{"i", {{gt[0], 0.9}, {gt[1], 0.8}}};
    const MatchResult m = match_greedy(dets, gt, 0.5);
    CHECK(m.tp == 2);
    CHECK(m.fp == 0);
    CHECK(m.fn == 0);
  }

  SUBCASE("one ground truth cannot absorb two detections") {
    DetectionSet dets{"i", {{gt[0], 0.9}, {{1, 0, 10, 10}, 0.8}}};
    const MatchResult m = match_greedy(dets, {gt[0]}, 0.5);
    CHECK(m.tp == 1);
    CHECK(m.fp == 1);
    CHECK(m.fn == 0);
  }

  SUBCASE("higher score claims the contested ground truth") {
    // Both detections overlap gt[0] only; the 0.9 one is ranked first.
    DetectionSet dets{"i", {{{2, 0, 10, 10}, 0.6}, {{1, 0, 10, 10}, 0.9}}};
    const MatchResult m = match_greedy(dets, {gt[0]}, 0.5);
    CHECK(m.det_order[0] == 1);
    CHECK(m.det_to_gt[0] == 0);   // ranked first, takes the gt
    CHECK(m.det_to_gt[1] == -1);
  }

  SUBCASE("no detections leaves all ground truth unmatched") {
    const MatchResult m = match_greedy(DetectionSet{"i", {}}, gt, 0.5);
    CHECK(m.tp == 0);
    CHECK(m.fn == 2);
  }

  SUBCASE("equal IoU goes to the lower ground-truth index") {
    const std::vector<BBox> twins{{0, 0, 10, 10}, {0, 20, 10, 10}};
    // Spans both squares symmetrically: IoU 0.2 with each.
    DetectionSet dets{"i", {{{0, 5, 10, 20}, 0.9}}};
    const MatchResult m = match_greedy(dets, twins, 0.1);
    CHECK(m.det_to_gt[0] == 0);
  }
}

TEST_CASE("average precision worked examples") {
  SUBCASE("exact detections give AP 1 at every threshold") {
    std::map<std::string, std::vector<BBox>> gts{
        {"a", {{0, 0, 10, 10}, {20, 0, 10, 10}}}, {"b", {{0, 0, 5, 5}}}};
    std::vector<DetectionSet> dets{
        {"a", {{{0, 0, 10, 10}, 0.9}, {{20, 0, 10, 10}, 0.7}}},
        {"b", {{{0, 0, 5, 5}, 0.8}}}};
    for (double thr : {0.5, 0.75, 0.95})
      CHECK(average_precision(dets, gts, thr) == doctest::Approx(1.0));
  }

  SUBCASE("one hit plus a lower-scored disjoint miss keeps AP 1 at 0.5") {
    std::map<std::string, std::vector<BBox>> gts{{"a", {{0, 0, 10, 10}}}};
    std::vector<DetectionSet> dets{
        {"a", {{{0, 0, 10, 10}, 0.9}, {{50, 50, 10, 10}, 0.8}}}};
    CHECK(average_precision(dets, gts, 0.5) == doctest::Approx(1.0));
  }

  SUBCASE("zero ground truth is an error") {
    std::map<std::string, std::vector<BBox>> gts{{"a", {}}};
    CHECK_THROWS_AS(average_precision({}, gts, 0.5), ValidationError);
  }

  SUBCASE("unknown image id is an error") {
    std::map<std::string, std::vector<BBox>> gts{{"a", {{0, 0, 10, 10}}}};
    std::vector<DetectionSet> dets{{"zzz", {}}};
    CHECK_THROWS_AS(average_precision(dets, gts, 0.5), ValidationError);
  }

  SUBCASE("duplicate detection sets are rejected") {
    std::map<std::string, std::vector<BBox>> gts{{"a", {{0, 0, 10, 10}}}};
    std::vector<DetectionSet> dets{{"a", {}}, {"a", {}}};
    CHECK_THROWS_AS(average_precision(dets, gts, 0.5), ValidationError);
  }
}

TEST_CASE("average precision equals the reference on random instances") {
  SplitMix64 rng(31337);
  for (int trial = 0; trial < 1000; ++trial) {
    const DetectionInstance inst = support::random_detection_instance(rng);
    for (double thr : {0.5, 0.75}) {
      const double got = average_precision(inst.dets, inst.gts, thr);
      const double want = support::ref_average_precision(inst, thr);
      CHECK(std::fabs(got - want) <= 1e-9);
    }
  }
}

TEST_CASE("AP is invariant to positive monotone score transforms") {
  SplitMix64 rng(555);
  for (int trial = 0; trial < 100; ++trial) {
    DetectionInstance inst = support::random_detection_instance(rng);
    const double before = average_precision(inst.dets, inst.gts, 0.5);
    for (auto& set : inst.dets)
      for (auto& b : set.boxes) b.score = 0.05 + 0.9 * b.score * b.score;
    CHECK(average_precision(inst.dets, inst.gts, 0.5) ==
          doctest::Approx(before).epsilon(1e-12));
  }
}

TEST_CASE("an extra lowest-score zero-IoU detection never raises AP") {
  SplitMix64 rng(777);
  for (int trial = 0; trial < 100; ++trial) {
    DetectionInstance inst = support::random_detection_instance(rng);
    const double before = average_precision(inst.dets, inst.gts, 0.5);
    // Far outside every 100x100 frame used by the generator.
    inst.dets[0].boxes.push_back({{5000, 5000, 10, 10}, 0.0});
    const double after = average_precision(inst.dets, inst.gts, 0.5);
    CHECK(after <= before + 1e-12);
  }
}

TEST_CASE("full report on perfect detections") {
  SplitMix64 rng(99);
  const DetectionInstance inst = support::random_detection_instance(rng);
  std::vector<DetectionSet> perfect;
  for (const auto& m : inst.manifests) {
    DetectionSet set{m.figure_id, {}};
    double score = 0.99;
    for (const auto& p : m.panels) {
      set.boxes.push_back({p.bbox, score});
      score -= 0.01;
    }
    perfect.push_back(std::move(set));
  }
  const DetectionReport r =
      evaluate_detections(perfect, inst.manifests, EvalSettings{});
  CHECK(r.map == doctest::Approx(1.0));
  CHECK(r.f1 == doctest::Approx(1.0));
  CHECK(r.fp == 0);
  CHECK(r.fn == 0);
}

TEST_CASE("one hit and one miss give F1 two-thirds") {
  FigureManifest m;
  m.figure_id = "a";
  m.file = "a.png";
  m.width = m.height = 100;
  m.panels.push_back({{0, 0, 10, 10}, "", "s", Modality::radiology});
  std::vector<DetectionSet> dets{
      {"a", {{{0, 0, 10, 10}, 0.9}, {{50, 50, 10, 10}, 0.8}}}};
  const DetectionReport r = evaluate_detections(dets, {m}, EvalSettings{});
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 0);
  CHECK(r.precision == doctest::Approx(0.5));
  CHECK(r.recall == doctest::Approx(1.0));
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("report micro counts equal the reference on random instances") {
  SplitMix64 rng(4242);
  EvalSettings settings;
  settings.score_threshold = 0.3;
  for (int trial = 0; trial < 300; ++trial) {
    const DetectionInstance inst = support::random_detection_instance(rng);
    const DetectionReport got =
        evaluate_detections(inst.dets, inst.manifests, settings);
    const support::RefMicro want = support::ref_micro(inst, 0.5, 0.3);
    CHECK(got.tp == want.tp);
    CHECK(got.fp == want.fp);
    CHECK(got.fn == want.fn);
    CHECK(got.f1 == doctest::Approx(want.f1).epsilon(1e-12));
  }
}

TEST_CASE("report rejects detections for unknown images, naming them") {
  FigureManifest m;
  m.figure_id = "known";
  m.file = "k.png";
  m.width = m.height = 10;
  m.panels.push_back({{0, 0, 5, 5}, "", "s", Modality::plot});
  std::vector<DetectionSet> dets{{"ghost", {}}};
  try {
    evaluate_detections(dets, {m}, EvalSettings{});
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
}

TEST_CASE("evaluation settings validation") {
  EvalSettings s;
  CHECK_NOTHROW(validate(s));
  s.iou_thresholds = {};
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = EvalSettings{};
  s.iou_thresholds = {0.5, 0.5};
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = EvalSettings{};
  s.iou_thresholds = {0.0};
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = EvalSettings{};
  s.f1_iou = 1.5;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = EvalSettings{};
  s.score_threshold = -0.1;
  CHECK_THROWS_AS(validate(s), ConfigError);
}

TEST_CASE("report serialization uses two-decimal threshold keys") {
  FigureManifest m;
  m.figure_id = "a";
  m.file = "a.png";
  m.width = m.height = 100;
  m.panels.push_back({{0, 0, 10, 10}, "", "s", Modality::retina});
  std::vector<DetectionSet> dets{{"a", {{{0, 0, 10, 10}, 1.0}}}};
  const DetectionReport r = evaluate_detections(dets, {m}, EvalSettings{});
  const nlohmann::json j = report_to_json(r);
  CHECK(j.at("map") == 1.0);
  CHECK(j.at("ap_per_threshold").contains("0.50"));
  CHECK(j.at("ap_per_threshold").contains("0.95"));
  CHECK(j.at("f1") == 1.0);
  CHECK(j.at("tp") == 1);
}
