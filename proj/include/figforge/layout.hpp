#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "figforge/types.hpp"

namespace figforge {

enum class LabelScheme {
  none,
  numeric,        // "1", "2", ...
  lower_alpha,    // "a", "b", ..., "z", "aa", "ab", ...
  upper_alpha,    // "A", "B", ...
  alpha_numeric,  // "a1", "b2", ...
  numeric_alpha,  // "1a", "2b", ...
  hyphenated      // "a-1", "b-2", ...
};

enum class LabelPosition { inside_top_left, outside_above };

const char* to_string(LabelScheme s);
LabelScheme label_scheme_from_string(const std::string& s);
const char* to_string(LabelPosition p);
LabelPosition label_position_from_string(const std::string& s);

// Configurable layout parameters for compound-figure generation.
struct LayoutConfig {
  int grid_rows = 1;
  int grid_cols = 1;
  // When present, overrides grid_rows x grid_cols: one entry per row giving
  // that row's panel count (every entry >= 1).
  std::optional<std::vector<int>> custom_rows;
  std::array<int, 2> h_margin_range{0, 0};  // [min, max] pixels, min >= 0
  std::array<int, 2> v_margin_range{0, 0};
  int border = 0;
  // Unset means: sample one of the six labeled schemes uniformly per figure.
  std::optional<LabelScheme> label_scheme = LabelScheme::lower_alpha;
  LabelPosition label_position = LabelPosition::inside_top_left;
  double panel_aspect = 1.0;   // width / height, > 0
  int panel_base_size = 100;   // panel width in pixels, > 0

  friend bool operator==(const LayoutConfig&, const LayoutConfig&) = default;
};

// Throws ConfigError on any violated invariant.
void validate(const LayoutConfig& config);

struct PanelSlot {
  BBox rect;
  std::string label_text;       // empty under scheme `none`
  PixelPoint label_anchor;      // top-left pixel of the painted label region

  friend bool operator==(const PanelSlot&, const PanelSlot&) = default;
};

// A fully resolved arrangement: canvas size plus row-major panel slots.
struct LayoutSpec {
  int canvas_w = 0;
  int canvas_h = 0;
  std::vector<PanelSlot> panels;
  std::uint64_t seed = 0;

  friend bool operator==(const LayoutSpec&, const LayoutSpec&) = default;
};

// Label text for 0-based panel index under a scheme. Alphabetic parts roll
// over to double letters past "z" ("aa", "ab", ...), spreadsheet style.
std::string panel_label(LabelScheme scheme, int index);

// Height of the reserved label band above each row under `outside_above`:
// 16 px at panel_base_size 100, scaled proportionally, never below 1.
int label_band_px(const LayoutConfig& config);

// Horizontal/vertical inset of inside_top_left anchors from the panel corner:
// 2 px at panel_base_size 100, scaled proportionally, never below 1.
int label_inset_px(const LayoutConfig& config);

// Resolves a config and seed into exact panel rectangles and label anchors.
// Deterministic: the RNG draw order is fixed as
//   1. label scheme, only if config.label_scheme is unset (uniform over the
//      six labeled schemes, in enum order numeric..hyphenated)
//   2. h_margin, uniform over h_margin_range (one draw per figure)
//   3. v_margin, uniform over v_margin_range
// Placement: panel width = panel_base_size, panel height =
// round(panel_base_size / panel_aspect); rows stacked top to bottom and
// left-aligned; canvas_w = widest row + 2*border; under outside_above every
// row reserves a label band above it, counted in canvas_h.
LayoutSpec resolve_layout(const LayoutConfig& config, std::uint64_t rng_seed);

}  // namespace figforge
