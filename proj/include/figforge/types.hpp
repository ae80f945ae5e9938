#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "figforge/errors.hpp"

namespace figforge {

// Axis-aligned pixel rectangle, top-left origin, half-open [x, x+w) x [y, y+h).
struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline std::int64_t area(const BBox& b) {
  return static_cast<std::int64_t>(b.w) * b.h;
}

inline bool contains(const BBox& outer, const BBox& inner) {
  return inner.x >= outer.x && inner.y >= outer.y &&
         inner.x + inner.w <= outer.x + outer.w &&
         inner.y + inner.h <= outer.y + outer.h;
}

inline bool disjoint(const BBox& a, const BBox& b) {
  return a.x + a.w <= b.x || b.x + b.w <= a.x || a.y + a.h <= b.y ||
         b.y + b.h <= a.y;
}

struct PixelPoint {
  int x = 0;
  int y = 0;

  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

// Source-image modality of a single panel.
enum class Modality { radiology, histopathology, dermatology, retina, plot };

inline constexpr int kModalityCount = 5;

const char* to_string(Modality m);
Modality modality_from_string(const std::string& s);

// One subfigure's ground truth inside a compound figure.
struct PanelRecord {
  BBox bbox;
  std::string label_text;
  std::string source_id;
  Modality modality = Modality::radiology;

  friend bool operator==(const PanelRecord&, const PanelRecord&) = default;
};

// Complete provenance record for one generated compound figure (JSONL row).
struct FigureManifest {
  std::string figure_id;
  std::string file;  // image path relative to the manifest's directory
  int width = 0;
  int height = 0;
  std::uint64_t seed = 0;
  std::vector<PanelRecord> panels;
  std::optional<std::string> caption;

  friend bool operator==(const FigureManifest&, const FigureManifest&) = default;
};

struct ScoredBox {
  BBox bbox;
  double score = 0.0;

  friend bool operator==(const ScoredBox&, const ScoredBox&) = default;
};

// Externally produced detector output for one image.
struct DetectionSet {
  std::string image_id;
  std::vector<ScoredBox> boxes;

  friend bool operator==(const DetectionSet&, const DetectionSet&) = default;
};

// n x d row-major f32 matrix with one id per row.
struct EmbeddingMatrix {
  std::uint32_t n = 0;
  std::uint32_t d = 0;
  std::vector<float> data;  // size n * d
  std::vector<std::string> ids;

  const float* row(std::uint32_t i) const { return data.data() + std::size_t(i) * d; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

// Throws ValidationError if sizes disagree or any entry is non-finite.
void validate(const EmbeddingMatrix& m);

// A real compound figure plus its metadata, as ingested for curation.
struct CompoundRecord {
  std::string figure_id;
  std::string image_path;
  std::string caption;
  std::vector<std::string> modality_labels;  // lower-cased on load
  std::optional<double> classifier_score;    // ingested relevance score

  friend bool operator==(const CompoundRecord&, const CompoundRecord&) = default;
};

// One curated subfigure-caption pair. `score` is the ingested relevance
// classifier score inherited from the parent record; detection scores are
// internal to decomposition and not persisted.
struct SubfigurePair {
  std::string subfigure_id;
  std::string parent_id;
  std::string file;  // crop path relative to the pairs file's directory
  BBox bbox;
  std::string caption;
  std::optional<double> score;

  friend bool operator==(const SubfigurePair&, const SubfigurePair&) = default;
};

// Result of a statistical hypothesis test.
struct StatTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::string method;
  std::uint64_t n_effective = 0;
};

}  // namespace figforge
