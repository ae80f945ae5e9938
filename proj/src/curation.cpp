#include "figforge/curation.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include <opencv2/imgcodecs.hpp>

#include "figforge/detection_eval.hpp"

namespace figforge {

using nlohmann::json;

std::vector<std::size_t> greedy_nms(const std::vector<ScoredBox>& boxes,
                                    double iou_thr) {
  if (!(iou_thr >= 0.0 && iou_thr <= 1.0))
    throw ValidationError("nms iou threshold outside [0, 1]");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return boxes[a].score > boxes[b].score;
                   });
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (iou(boxes[idx].bbox, boxes[k].bbox) > iou_thr) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

namespace {

std::optional<BBox> clamp_to_image(const BBox& b, int width, int height) {
  const int x0 = std::max(0, b.x);
  const int y0 = std::max(0, b.y);
  const int x1 = std::min(width, b.x + b.w);
  const int y1 = std::min(height, b.y + b.h);
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  return BBox{x0, y0, x1 - x0, y1 - y0};
}

}  // namespace

std::vector<BBox> decompose_boxes(const DetectionSet& dets, double min_score,
                                  double nms_iou, int width, int height) {
  if (width < 1 || height < 1)
    throw ValidationError("image dimensions must be positive");
  std::vector<ScoredBox> candidates;
  for (const ScoredBox& b : dets.boxes)
    if (b.score >= min_score) candidates.push_back(b);

  std::vector<BBox> out;
  for (std::size_t idx : greedy_nms(candidates, nms_iou)) {
    if (auto clamped = clamp_to_image(candidates[idx].bbox, width, height))
      out.push_back(*clamped);
  }
  if (out.empty()) out.push_back(BBox{0, 0, width, height});
  return out;
}

std::vector<SubfigurePair> decompose(const CompoundRecord& record,
                                     const DetectionSet& dets,
                                     const std::filesystem::path& images_root,
                                     const std::filesystem::path& out_dir,
                                     double min_score, double nms_iou) {
  if (dets.image_id != record.figure_id)
    throw ValidationError("detections do not reference this figure",
                          {{"figure_id", record.figure_id},
                           {"image_id", dets.image_id}});
  const std::filesystem::path img_path =
      std::filesystem::path(record.image_path).is_absolute()
          ? std::filesystem::path(record.image_path)
          : images_root / record.image_path;
  const cv::Mat image = cv::imread(img_path.string(), cv::IMREAD_COLOR);
  if (image.empty())
    throw IoError("unreadable parent image",
                  {{"figure_id", record.figure_id},
                   {"path", img_path.string()}});

  const std::filesystem::path crops_dir = out_dir / "crops";
  std::error_code ec;
  std::filesystem::create_directories(crops_dir, ec);
  if (ec)
    throw IoError("cannot create crops directory",
                  {{"path", crops_dir.string()}, {"error", ec.message()}});

  std::vector<SubfigurePair> pairs;
  std::size_t index = 0;
  for (const BBox& box :
       decompose_boxes(dets, min_score, nms_iou, image.cols, image.rows)) {
    SubfigurePair pair;
    pair.subfigure_id = record.figure_id + "_s" + std::to_string(index++);
    pair.parent_id = record.figure_id;
    pair.file = "crops/" + pair.subfigure_id + ".png";
    pair.bbox = box;
    pair.caption = record.caption;
    pair.score = record.classifier_score;

    const cv::Mat crop = image(cv::Rect(box.x, box.y, box.w, box.h));
    const std::filesystem::path crop_path = out_dir / pair.file;
    if (!cv::imwrite(crop_path.string(), crop))
      throw IoError("cannot write crop", {{"path", crop_path.string()}});
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

namespace {

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

std::vector<CompoundRecord> filter_metadata(
    const std::vector<CompoundRecord>& records) {
  static const char* kWanted[] = {"clinical imaging", "clinical image",
                                  "microscopy"};
  std::vector<CompoundRecord> kept;
  for (const CompoundRecord& r : records) {
    const bool match = std::any_of(
        r.modality_labels.begin(), r.modality_labels.end(),
        [](const std::string& label) {
          const std::string norm = lowercase(label);
          return std::any_of(std::begin(kWanted), std::end(kWanted),
                             [&](const char* w) { return norm == w; });
        });
    if (match) kept.push_back(r);
  }
  return kept;
}

ScoreFilterResult filter_score(const std::vector<SubfigurePair>& pairs,
                               double threshold) {
  ScoreFilterResult result;
  for (const SubfigurePair& p : pairs) {
    if (!p.score) {
      ++result.dropped_missing;
    } else if (*p.score >= threshold) {
      result.kept.push_back(p);
    } else {
      ++result.dropped_below;
    }
  }
  return result;
}

std::uint64_t whitespace_tokens(const std::string& caption) {
  std::uint64_t count = 0;
  bool in_token = false;
  for (unsigned char c : caption) {
    if (std::isspace(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

CorpusStats corpus_stats(
    const std::vector<SubfigurePair>& pairs,
    const std::optional<std::vector<std::uint64_t>>& token_counts,
    const std::vector<CompoundRecord>* records) {
  if (token_counts && token_counts->size() != pairs.size())
    throw ValidationError("token counts do not align with pairs",
                          {{"counts", std::to_string(token_counts->size())},
                           {"pairs", std::to_string(pairs.size())}});
  CorpusStats stats;
  stats.pair_count = pairs.size();

  std::map<std::string, std::size_t> per_figure;
  for (const SubfigurePair& p : pairs) ++per_figure[p.parent_id];
  stats.figure_count = per_figure.size();
  for (const auto& [id, n] : per_figure)
    ++stats.subfigures_per_figure[static_cast<std::uint64_t>(n)];

  if (!pairs.empty()) {
    double sum = 0.0;
    std::uint64_t max_tokens = 0;
    std::size_t over = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const std::uint64_t tokens =
          token_counts ? (*token_counts)[i] : whitespace_tokens(pairs[i].caption);
      sum += static_cast<double>(tokens);
      max_tokens = std::max(max_tokens, tokens);
      if (tokens > 256) ++over;
    }
    stats.mean_tokens = sum / static_cast<double>(pairs.size());
    stats.max_tokens = max_tokens;
    stats.frac_over_256 =
        static_cast<double>(over) / static_cast<double>(pairs.size());
  }

  if (records && !pairs.empty()) {
    std::map<std::string, std::string> primary_label;
    for (const CompoundRecord& r : *records)
      primary_label[r.figure_id] = r.modality_labels.empty()
                                       ? "unlabeled"
                                       : lowercase(r.modality_labels.front());
    std::map<std::string, std::size_t> counts;
    for (const SubfigurePair& p : pairs) {
      const auto it = primary_label.find(p.parent_id);
      if (it == primary_label.end())
        throw ValidationError("pair references an unknown record",
                              {{"parent_id", p.parent_id}});
      ++counts[it->second];
    }
    std::map<std::string, double> share;
    for (const auto& [label, n] : counts)
      share[label] =
          static_cast<double>(n) / static_cast<double>(pairs.size());
    stats.modality_share = std::move(share);
  }
  return stats;
}

json stats_to_json(const CorpusStats& stats) {
  json tokens{{"mean", stats.mean_tokens ? json(*stats.mean_tokens)
                                         : json(nullptr)},
              {"max", stats.max_tokens ? json(*stats.max_tokens)
                                       : json(nullptr)},
              {"frac_over_256", stats.frac_over_256
                                    ? json(*stats.frac_over_256)
                                    : json(nullptr)}};
  json histogram = json::object();
  for (const auto& [panels, figures] : stats.subfigures_per_figure)
    histogram[std::to_string(panels)] = figures;
  return json{{"pair_count", stats.pair_count},
              {"figure_count", stats.figure_count},
              {"tokens", std::move(tokens)},
              {"modality_share", stats.modality_share
                                     ? json(*stats.modality_share)
                                     : json(nullptr)},
              {"subfigures_per_figure", std::move(histogram)}};
}

}  // namespace figforge
