#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "figforge/types.hpp"

namespace figforge {

struct EvalSettings {
  // COCO-style sweep 0.50:0.05:0.95 unless overridden.
  std::vector<double> iou_thresholds = {0.50, 0.55, 0.60, 0.65, 0.70,
                                        0.75, 0.80, 0.85, 0.90, 0.95};
  double f1_iou = 0.5;
  double score_threshold = 0.0;

  friend bool operator==(const EvalSettings&, const EvalSettings&) = default;
};

void validate(const EvalSettings& settings);

struct DetectionReport {
  double map = 0.0;
  std::vector<std::pair<double, double>> ap_per_threshold;  // (iou, ap)
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
};

// Intersection over union of two boxes; disjoint boxes give 0. Exact
// integer area arithmetic.
double iou(const BBox& a, const BBox& b);

struct MatchResult {
  std::vector<int> det_to_gt;  // per detection, matched gt index or -1,
                               // ordered by score descending (ties by input
                               // order)
  std::vector<int> det_order;  // input index of each ranked detection
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

// Greedy one-to-one matching: detections ranked by score descending (ties
// broken by input order), each taking the unmatched gt of maximal IoU when
// that IoU reaches iou_thr (IoU ties go to the lower gt index).
MatchResult match_greedy(const DetectionSet& dets, const std::vector<BBox>& gt,
                         double iou_thr);

// 101-point interpolated average precision over the score-ranked
// dataset-wide detection list. gts maps image_id to its ground-truth boxes;
// detection sets for images absent from gts are rejected, images without a
// detection set contribute their boxes as misses. Zero ground-truth boxes
// overall -> ValidationError.
double average_precision(const std::vector<DetectionSet>& dets,
                         const std::map<std::string, std::vector<BBox>>& gts,
                         double iou_thr);

// Full report: map = mean AP over settings.iou_thresholds; F1, precision,
// recall and the TP/FP/FN counts are dataset-micro at settings.f1_iou after
// dropping detections below settings.score_threshold.
DetectionReport evaluate_detections(const std::vector<DetectionSet>& dets,
                                    const std::vector<FigureManifest>& manifests,
                                    const EvalSettings& settings);

nlohmann::json report_to_json(const DetectionReport& report);

}  // namespace figforge
