#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>

#include "figforge/layout.hpp"
#include "figforge/types.hpp"

namespace figforge {

enum class Split { train, validation };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct PoolEntry {
  std::string source_id;
  std::string path;
  Modality modality = Modality::radiology;
  Split split = Split::train;

  friend bool operator==(const PoolEntry&, const PoolEntry&) = default;
};

// Source images available for composition. source_ids are unique and every
// path resolves to an existing file at load time.
struct PanelPool {
  std::vector<PoolEntry> entries;

  friend bool operator==(const PanelPool&, const PanelPool&) = default;
};

// Throws ValidationError on duplicate source_id or missing file.
void validate(const PanelPool& pool);

// JSONL, keys exactly {source_id, path, modality, split}. Relative entry
// paths are resolved against the pool file's directory so a pool bundle can
// be moved as a unit. load_pool validates after resolution.
PanelPool load_pool(const std::filesystem::path& path);
void save_pool(const PanelPool& pool, const std::filesystem::path& path);

// Per-figure modality weights, by Modality enum order, plus a `mixed`
// pseudo-modality under which every panel draws its modality independently
// and uniformly over the five concrete ones.
struct MixPolicy {
  std::array<double, kModalityCount> pure{};
  double mixed = 0.0;

  friend bool operator==(const MixPolicy&, const MixPolicy&) = default;
};

// Weights >= 0 and summing to 1 within 1e-9, else ConfigError.
void validate(const MixPolicy& policy);

// Uniform policy: 1/6 per concrete modality and 1/6 mixed.
MixPolicy uniform_mix();

struct LabelStyle {
  int font_px = 12;
  cv::Scalar color{30, 30, 30};               // BGR
  std::optional<cv::Scalar> background;       // filled behind glyphs if set

  friend bool operator==(const LabelStyle& a, const LabelStyle& b) {
    return a.font_px == b.font_px && a.color == b.color &&
           a.background == b.background;
  }
};

// Style used by generate_corpus: font height 12 px at panel_base_size 100,
// scaled proportionally (floor 6); white backing box only for inside labels,
// where glyphs would otherwise sit on image content.
LabelStyle default_label_style(const LayoutConfig& config);

// One decoded source panel plus the provenance the manifest records.
struct PanelImage {
  cv::Mat image;
  std::string source_id;
  Modality modality = Modality::radiology;
};

// Largest centered crop of `src` with the w:h aspect of the target, resized
// to exactly (w, h) with bilinear sampling. A crop already at target size is
// returned without resampling, so same-size sources pass through bit-exact.
// Throws ValidationError on an empty source or a crop that rounds to zero.
cv::Mat fit_panel(const cv::Mat& src, int w, int h);

// Pixel rect the label paint occupies for one slot: glyph box plus optional
// background fill plus a 2 px guard, clamped to the canvas. Empty label or
// fully off-canvas region -> nullopt. Tests use this to exclude label pixels
// from panel comparisons.
std::optional<BBox> label_region(const PanelSlot& slot, const LabelStyle& style,
                                 int canvas_w, int canvas_h);

// Renders the spec's panels onto a white canvas and draws labels at each
// anchor. |panels| must equal |spec.panels|; an empty panel image raises a
// ValidationError naming its source_id. The returned manifest carries the
// spec rects verbatim plus per-panel provenance and the spec seed; identity
// fields (figure_id, file, caption) are left for the caller to assign.
std::pair<cv::Mat, FigureManifest> compose_figure(
    const LayoutSpec& spec, const std::vector<PanelImage>& panels,
    const LabelStyle& style);

struct GenerationConfig {
  LayoutConfig layout;
  MixPolicy mix;
  std::filesystem::path out_dir;
  std::uint64_t count = 0;
  std::uint64_t master_seed = 0;
  int workers = 1;
};

// Writes count figures as out_dir/images/fig_XXXXXXXX.png plus
// out_dir/manifest.jsonl (one manifest per line, index order) and returns
// the manifest path. Figure i is produced entirely from
// SplitMix64(derive_seed(master_seed, i)) with this fixed draw order:
//   1. figure category: one next_real() against the cumulative MixPolicy
//      weights in order [radiology, histopathology, dermatology, retina,
//      plot, mixed]
//   2. layout seed: one next(), fed to resolve_layout
//   3. per panel, row-major: under mixed, modality = next_below(5) in enum
//      order; then pool entry = next_below(entries of that modality)
// Sampling is with replacement. Workers only split the index range; every
// output byte is identical for any worker count. Requires a nonempty pool
// slice for each modality with positive weight (all five when mixed > 0).
std::filesystem::path generate_corpus(const PanelPool& pool,
                                      const GenerationConfig& config);

}  // namespace figforge
