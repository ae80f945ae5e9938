#pragma once

// Shared helpers for the unit and acceptance suites: scratch directories,
// matrix builders, and independent reference implementations that library
// results are checked against. The reference code here deliberately avoids
// calling the library functions it is used to verify.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "figforge/rng.hpp"
#include "figforge/types.hpp"

namespace support {

// Self-deleting scratch directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 10000; ++i) {
      auto candidate = base / (tag + "_" + std::to_string(counter_++));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("could not create scratch directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path,
                       const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

inline figforge::EmbeddingMatrix make_matrix(std::uint32_t n, std::uint32_t d,
                                             std::vector<float> data,
                                             const std::string& prefix = "row") {
  figforge::EmbeddingMatrix m;
  m.n = n;
  m.d = d;
  m.data = std::move(data);
  for (std::uint32_t i = 0; i < n; ++i)
    m.ids.push_back(prefix + std::to_string(i));
  return m;
}

inline figforge::EmbeddingMatrix random_matrix(figforge::SplitMix64& rng,
                                               std::uint32_t n,
                                               std::uint32_t d) {
  std::vector<float> data(std::size_t(n) * d);
  for (float& v : data)
    v = static_cast<float>(rng.next_real() * 4.0 - 2.0);
  return make_matrix(n, d, std::move(data));
}

// ---------------------------------------------------------------------------
// Detection-metric reference implementation.

inline double ref_iou(const figforge::BBox& a, const figforge::BBox& b) {
  const double ix = std::max(0.0, double(std::min(a.x + a.w, b.x + b.w)) -
                                      double(std::max(a.x, b.x)));
  const double iy = std::max(0.0, double(std::min(a.y + a.h, b.y + b.h)) -
                                      double(std::max(a.y, b.y)));
  const double inter = ix * iy;
  const double uni = double(a.w) * a.h + double(b.w) * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct DetectionInstance {
  std::vector<figforge::DetectionSet> dets;
  std::map<std::string, std::vector<figforge::BBox>> gts;
  std::vector<figforge::FigureManifest> manifests;
};

// Greedy one-to-one matching per image, replicated from the written contract:
// detections by descending score (stable over input order), each taking the
// unmatched ground-truth box of maximal IoU when it reaches thr, IoU ties to
// the lower index. Returns (score, is_tp) per detection.
inline std::vector<std::pair<double, bool>> ref_match(
    const figforge::DetectionSet& set, const std::vector<figforge::BBox>& gt,
    double thr) {
  std::vector<int> order(set.boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return set.boxes[a].score > set.boxes[b].score;
  });
  std::vector<bool> used(gt.size(), false);
  std::vector<std::pair<double, bool>> out;
  for (int idx : order) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (used[g]) continue;
      const double v = ref_iou(set.boxes[idx].bbox, gt[g]);
      if (v >= thr && v > best_iou) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    if (best >= 0) used[best] = true;
    out.emplace_back(set.boxes[idx].score, best >= 0);
  }
  return out;
}

// 101-point interpolated AP built straight from the definition: for each
// recall target the max raw precision at any ranked prefix reaching it.
inline double ref_average_precision(const DetectionInstance& inst,
                                    double thr) {
  std::vector<std::pair<double, bool>> flags;
  for (const auto& set : inst.dets) {
    auto per_image = ref_match(set, inst.gts.at(set.image_id), thr);
    flags.insert(flags.end(), per_image.begin(), per_image.end());
  }
  std::stable_sort(flags.begin(), flags.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t total_gt = 0;
  for (const auto& [id, boxes] : inst.gts) total_gt += boxes.size();

  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < flags.size(); ++k) {
    if (flags[k].second) ++tp;
    precision.push_back(double(tp) / double(k + 1));
    recall.push_back(double(tp) / double(total_gt));
  }
  double sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double target = r / 100.0;
    double best = 0.0;
    for (std::size_t k = 0; k < flags.size(); ++k)
      if (recall[k] >= target) best = std::max(best, precision[k]);
    sum += best;
  }
  return sum / 101.0;
}

struct RefMicro {
  std::uint64_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

inline RefMicro ref_micro(const DetectionInstance& inst, double f1_iou,
                          double score_threshold) {
  RefMicro out;
  std::map<std::string, figforge::DetectionSet> by_id;
  for (const auto& set : inst.dets) {
    figforge::DetectionSet kept{set.image_id, {}};
    for (const auto& b : set.boxes)
      if (b.score >= score_threshold) kept.boxes.push_back(b);
    by_id.emplace(set.image_id, std::move(kept));
  }
  for (const auto& [id, gt] : inst.gts) {
    figforge::DetectionSet empty{id, {}};
    auto it = by_id.find(id);
    auto flags = ref_match(it == by_id.end() ? empty : it->second, gt, f1_iou);
    std::uint64_t tp = 0;
    for (const auto& [score, is_tp] : flags) tp += is_tp ? 1 : 0;
    out.tp += tp;
    out.fp += flags.size() - tp;
    out.fn += gt.size() - tp;
  }
  if (out.tp + out.fp) out.precision = double(out.tp) / double(out.tp + out.fp);
  if (out.tp + out.fn) out.recall = double(out.tp) / double(out.tp + out.fn);
  if (out.precision + out.recall > 0.0)
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

// Random dataset of at most max_images images with at most max_boxes ground
// truths and detections each. Detections are a mix of jittered copies of
// ground truth and unrelated boxes, with continuous (collision-free) scores.
inline DetectionInstance random_detection_instance(figforge::SplitMix64& rng,
                                                   int max_images = 4,
                                                   int max_boxes = 5) {
  DetectionInstance inst;
  const int n_images = 1 + int(rng.next_below(std::uint64_t(max_images)));
  for (int i = 0; i < n_images; ++i) {
    const std::string id = "img" + std::to_string(i);
    const int n_gt = 1 + int(rng.next_below(std::uint64_t(max_boxes)));
    std::vector<figforge::BBox> gt;
    for (int g = 0; g < n_gt; ++g)
      gt.push_back({int(rng.next_below(60)), int(rng.next_below(60)),
                    5 + int(rng.next_below(36)), 5 + int(rng.next_below(36))});
    figforge::DetectionSet set{id, {}};
    const int n_det = int(rng.next_below(std::uint64_t(max_boxes) + 1));
    for (int k = 0; k < n_det; ++k) {
      figforge::BBox box;
      if (rng.next_below(2) == 0) {
        const figforge::BBox& base = gt[rng.next_below(gt.size())];
        box = {base.x + int(rng.next_int(-4, 4)),
               base.y + int(rng.next_int(-4, 4)),
               std::max(1, base.w + int(rng.next_int(-4, 4))),
               std::max(1, base.h + int(rng.next_int(-4, 4)))};
      } else {
        box = {int(rng.next_below(60)), int(rng.next_below(60)),
               5 + int(rng.next_below(36)), 5 + int(rng.next_below(36))};
      }
      set.boxes.push_back({box, rng.next_real()});
    }
    inst.dets.push_back(std::move(set));
    figforge::FigureManifest m;
    m.figure_id = id;
    m.file = id + ".png";
    m.width = 100;
    m.height = 100;
    for (const auto& b : gt)
      m.panels.push_back({b, "", "src", figforge::Modality::radiology});
    inst.manifests.push_back(std::move(m));
    inst.gts.emplace(id, std::move(gt));
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank reference: midranks plus the full 2^n sign-assignment
// distribution, p = share of assignments at least as extreme (by the
// min(W+, W-) statistic) as the observed one.

struct RefWilcoxon {
  double w = 0.0;
  double p = 1.0;
  std::size_t n_eff = 0;
};

inline std::optional<RefWilcoxon> ref_wilcoxon(const std::vector<double>& a,
                                               const std::vector<double>& b) {
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) diffs.push_back(a[i] - b[i]);
  const std::size_t n = diffs.size();
  if (n == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::fabs(diffs[x]) < std::fabs(diffs[y]);
  });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n &&
           std::fabs(diffs[order[j]]) == std::fabs(diffs[order[i]]))
      ++j;
    const double mid = (double(i + 1) + double(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = mid;
    i = j;
  }

  double w_plus = 0.0, total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rank[i];
    if (diffs[i] > 0) w_plus += rank[i];
  }
  RefWilcoxon out;
  out.n_eff = n;
  out.w = std::min(w_plus, total - w_plus);

  std::size_t extreme = 0;
  const std::uint64_t masks = std::uint64_t(1) << n;
  for (std::uint64_t mask = 0; mask < masks; ++mask) {
    double wp = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::uint64_t(1) << i)) wp += rank[i];
    // Tolerance absorbs midrank .5 arithmetic; all values are multiples
    // of 0.5 so 1e-9 separates distinct sums safely.
    if (std::min(wp, total - wp) <= out.w + 1e-9) ++extreme;
  }
  out.p = double(extreme) / double(masks);
  return out;
}

}  // namespace support
