#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "figforge/types.hpp"

namespace figforge {

// Greedy non-maximum suppression: walk boxes by descending score (ties by
// input order) and keep each box whose IoU with every kept box is <= iou_thr.
// Returns kept indices sorted ascending, so downstream order is input order.
std::vector<std::size_t> greedy_nms(const std::vector<ScoredBox>& boxes,
                                    double iou_thr);

// Survivor boxes for one figure: drop scores below min_score, apply
// greedy_nms, clamp to [0,width)x[0,height) and drop boxes the clamp
// empties. Zero survivors yield one full-image box. Order is input order.
std::vector<BBox> decompose_boxes(const DetectionSet& dets, double min_score,
                                  double nms_iou, int width, int height);

// Crops one compound record into subfigure pairs. The parent image is
// record.image_path, resolved against images_root when relative; crops are
// written as out_dir/crops/<parent>_s<k>.png with k in survivor order.
// Every pair inherits the parent caption verbatim and the record's
// classifier score. Unreadable parent image -> IoError naming the record.
std::vector<SubfigurePair> decompose(const CompoundRecord& record,
                                     const DetectionSet& dets,
                                     const std::filesystem::path& images_root,
                                     const std::filesystem::path& out_dir,
                                     double min_score = 0.5,
                                     double nms_iou = 0.45);

// Keeps records whose modality labels intersect {"clinical imaging",
// "clinical image", "microscopy"}, case-insensitive. Output order is input
// order restricted to survivors.
std::vector<CompoundRecord> filter_metadata(
    const std::vector<CompoundRecord>& records);

struct ScoreFilterResult {
  std::vector<SubfigurePair> kept;
  std::size_t dropped_below = 0;
  std::size_t dropped_missing = 0;
};

// Keeps pairs with score >= threshold; pairs without a score are dropped and
// counted separately. Order-stable.
ScoreFilterResult filter_score(const std::vector<SubfigurePair>& pairs,
                               double threshold);

// Whitespace tokenization: maximal runs of non-whitespace characters.
std::uint64_t whitespace_tokens(const std::string& caption);

struct CorpusStats {
  std::size_t pair_count = 0;
  std::size_t figure_count = 0;
  // Unset on an empty corpus.
  std::optional<double> mean_tokens;
  std::optional<std::uint64_t> max_tokens;
  std::optional<double> frac_over_256;  // fraction strictly above 256 tokens
  // Distribution over the parent record's first modality label; records
  // without labels count as "unlabeled". Unset when no records are supplied
  // or the corpus is empty.
  std::optional<std::map<std::string, double>> modality_share;
  std::map<std::uint64_t, std::size_t> subfigures_per_figure;

  friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

// Token counts come from whitespace_tokens unless token_counts is given, in
// which case it must align 1:1 with pairs (external tokenizer output).
// modality shares need the parent records; pass nullptr to skip them.
CorpusStats corpus_stats(
    const std::vector<SubfigurePair>& pairs,
    const std::optional<std::vector<std::uint64_t>>& token_counts =
        std::nullopt,
    const std::vector<CompoundRecord>* records = nullptr);

nlohmann::json stats_to_json(const CorpusStats& stats);

}  // namespace figforge
