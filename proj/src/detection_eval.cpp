#include "figforge/detection_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

namespace figforge {

void validate(const EvalSettings& settings) {
  if (settings.iou_thresholds.empty())
    throw ConfigError("iou_thresholds must not be empty");
  for (std::size_t i = 0; i < settings.iou_thresholds.size(); ++i) {
    const double t = settings.iou_thresholds[i];
    if (!(t > 0.0 && t <= 1.0))
      throw ConfigError("iou thresholds must lie in (0,1]");
    if (i > 0 && !(t > settings.iou_thresholds[i - 1]))
      throw ConfigError("iou thresholds must be strictly increasing");
  }
  if (!(settings.f1_iou > 0.0 && settings.f1_iou <= 1.0))
    throw ConfigError("f1_iou must lie in (0,1]");
  if (settings.score_threshold < 0.0)
    throw ConfigError("score_threshold must be >= 0");
}

double iou(const BBox& a, const BBox& b) {
  const std::int64_t ix = std::max(
      std::int64_t{0}, std::int64_t{std::min(a.x + a.w, b.x + b.w)} -
                           std::max(a.x, b.x));
  const std::int64_t iy = std::max(
      std::int64_t{0}, std::int64_t{std::min(a.y + a.h, b.y + b.h)} -
                           std::max(a.y, b.y));
  const std::int64_t inter = ix * iy;
  if (inter == 0) return 0.0;
  const std::int64_t uni = area(a) + area(b) - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

// Score-descending rank, stable over input order.
std::vector<int> rank_by_score(const std::vector<ScoredBox>& boxes) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return boxes[a].score > boxes[b].score;
  });
  return order;
}

}  // namespace

MatchResult match_greedy(const DetectionSet& dets, const std::vector<BBox>& gt,
                         double iou_thr) {
  MatchResult result;
  result.det_order = rank_by_score(dets.boxes);
  result.det_to_gt.assign(dets.boxes.size(), -1);
  std::vector<bool> gt_taken(gt.size(), false);

  for (std::size_t rank = 0; rank < result.det_order.size(); ++rank) {
    const BBox& det = dets.boxes[result.det_order[rank]].bbox;
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (gt_taken[g]) continue;
      const double v = iou(det, gt[g]);
      if (v >= iou_thr && v > best_iou) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    if (best >= 0) {
      gt_taken[best] = true;
      result.det_to_gt[rank] = best;
      ++result.tp;
    } else {
      ++result.fp;
    }
  }
  result.fn = static_cast<int>(gt.size()) - result.tp;
  return result;
}

namespace {

struct RankedFlag {
  double score;
  bool tp;
};

// Per-image greedy matching, then all detections ranked dataset-wide by
// score descending. Per-image lists are already stable in input order for
// equal scores, and images are visited in input order, so the global
// stable sort keeps the "ties by input order" contract.
std::vector<RankedFlag> dataset_flags(
    const std::vector<DetectionSet>& dets,
    const std::map<std::string, std::vector<BBox>>& gts, double iou_thr,
    std::size_t* total_gt) {
  *total_gt = 0;
  for (const auto& [id, boxes] : gts) *total_gt += boxes.size();

  std::vector<RankedFlag> flags;
  std::set<std::string> seen;
  for (const DetectionSet& set : dets) {
    auto it = gts.find(set.image_id);
    if (it == gts.end())
      throw ValidationError("detections reference unknown image_id",
                            {{"image_id", set.image_id}});
    if (!seen.insert(set.image_id).second)
      throw ValidationError("duplicate detection set for image_id",
                            {{"image_id", set.image_id}});
    const MatchResult match = match_greedy(set, it->second, iou_thr);
    for (std::size_t rank = 0; rank < match.det_order.size(); ++rank) {
      flags.push_back(RankedFlag{set.boxes[match.det_order[rank]].score,
                                 match.det_to_gt[rank] >= 0});
    }
  }
  std::stable_sort(flags.begin(), flags.end(),
                   [](const RankedFlag& a, const RankedFlag& b) {
                     return a.score > b.score;
                   });
  return flags;
}

double ap_from_flags(const std::vector<RankedFlag>& flags,
                     std::size_t total_gt) {
  std::vector<double> precision(flags.size());
  std::vector<double> recall(flags.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < flags.size(); ++k) {
    if (flags[k].tp) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(total_gt);
  }
  // Precision envelope, right to left.
  for (std::size_t k = flags.size(); k-- > 1;)
    precision[k - 1] = std::max(precision[k - 1], precision[k]);

  double sum = 0.0;
  std::size_t pos = 0;
  for (int r = 0; r <= 100; ++r) {
    const double target = r / 100.0;
    while (pos < flags.size() && recall[pos] < target) ++pos;
    // First position reaching this recall; envelope precision there.
    if (pos < flags.size()) sum += precision[pos];
  }
  return sum / 101.0;
}

}  // namespace

double average_precision(const std::vector<DetectionSet>& dets,
                         const std::map<std::string, std::vector<BBox>>& gts,
                         double iou_thr) {
  std::size_t total_gt = 0;
  const std::vector<RankedFlag> flags =
      dataset_flags(dets, gts, iou_thr, &total_gt);
  if (total_gt == 0)
    throw ValidationError(
        "average precision is undefined with zero ground-truth boxes");
  return ap_from_flags(flags, total_gt);
}

DetectionReport evaluate_detections(const std::vector<DetectionSet>& dets,
                                    const std::vector<FigureManifest>& manifests,
                                    const EvalSettings& settings) {
  validate(settings);

  std::map<std::string, std::vector<BBox>> gts;
  for (const FigureManifest& m : manifests) {
    std::vector<BBox>& boxes = gts[m.figure_id];
    for (const PanelRecord& p : m.panels) boxes.push_back(p.bbox);
  }
  std::vector<std::string> unknown;
  for (const DetectionSet& set : dets)
    if (!gts.count(set.image_id)) unknown.push_back(set.image_id);
  if (!unknown.empty()) {
    std::ostringstream msg;
    msg << "detections reference image ids absent from the manifest:";
    for (const std::string& id : unknown) msg << ' ' << id;
    throw ValidationError(msg.str(), {{"count", std::to_string(unknown.size())}});
  }

  DetectionReport report;
  for (double thr : settings.iou_thresholds)
    report.ap_per_threshold.emplace_back(thr,
                                         average_precision(dets, gts, thr));
  double sum = 0.0;
  for (const auto& [thr, ap] : report.ap_per_threshold) sum += ap;
  report.map = sum / static_cast<double>(report.ap_per_threshold.size());

  // Micro counts at f1_iou with the score cut applied.
  std::map<std::string, DetectionSet> kept;
  for (const DetectionSet& set : dets) {
    DetectionSet filtered{set.image_id, {}};
    for (const ScoredBox& b : set.boxes)
      if (b.score >= settings.score_threshold) filtered.boxes.push_back(b);
    kept.emplace(set.image_id, std::move(filtered));
  }
  for (const auto& [image_id, gt_boxes] : gts) {
    auto it = kept.find(image_id);
    const DetectionSet empty{image_id, {}};
    const MatchResult match = match_greedy(
        it == kept.end() ? empty : it->second, gt_boxes, settings.f1_iou);
    report.tp += static_cast<std::uint64_t>(match.tp);
    report.fp += static_cast<std::uint64_t>(match.fp);
    report.fn += static_cast<std::uint64_t>(match.fn);
  }
  const double tp = static_cast<double>(report.tp);
  report.precision =
      report.tp + report.fp ? tp / static_cast<double>(report.tp + report.fp)
                            : 0.0;
  report.recall = report.tp + report.fn
                      ? tp / static_cast<double>(report.tp + report.fn)
                      : 0.0;
  report.f1 = report.precision + report.recall > 0.0
                  ? 2.0 * report.precision * report.recall /
                        (report.precision + report.recall)
                  : 0.0;
  return report;
}

nlohmann::json report_to_json(const DetectionReport& report) {
  nlohmann::json ap = nlohmann::json::object();
  for (const auto& [thr, value] : report.ap_per_threshold) {
    char key[16];
    std::snprintf(key, sizeof(key), "%.2f", thr);
    ap[key] = value;
  }
  return nlohmann::json{{"map", report.map},
                        {"ap_per_threshold", std::move(ap)},
                        {"f1", report.f1},
                        {"precision", report.precision},
                        {"recall", report.recall},
                        {"tp", report.tp},
                        {"fp", report.fp},
                        {"fn", report.fn}};
}

}  // namespace figforge
