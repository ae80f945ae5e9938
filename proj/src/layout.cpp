#include "figforge/layout.hpp"

#include <algorithm>
#include <cmath>

#include "figforge/rng.hpp"

namespace figforge {

const char* to_string(LabelScheme s) {
  switch (s) {
    case LabelScheme::none: return "none";
    case LabelScheme::numeric: return "numeric";
    case LabelScheme::lower_alpha: return "lower_alpha";
    case LabelScheme::upper_alpha: return "upper_alpha";
    case LabelScheme::alpha_numeric: return "alpha_numeric";
    case LabelScheme::numeric_alpha: return "numeric_alpha";
    case LabelScheme::hyphenated: return "hyphenated";
  }
  return "none";
}

LabelScheme label_scheme_from_string(const std::string& s) {
  for (LabelScheme v :
       {LabelScheme::none, LabelScheme::numeric, LabelScheme::lower_alpha,
        LabelScheme::upper_alpha, LabelScheme::alpha_numeric,
        LabelScheme::numeric_alpha, LabelScheme::hyphenated}) {
    if (s == to_string(v)) return v;
  }
  throw ConfigError("unknown label scheme: " + s);
}

const char* to_string(LabelPosition p) {
  return p == LabelPosition::inside_top_left ? "inside_top_left"
                                             : "outside_above";
}

LabelPosition label_position_from_string(const std::string& s) {
  if (s == "inside_top_left") return LabelPosition::inside_top_left;
  if (s == "outside_above") return LabelPosition::outside_above;
  throw ConfigError("unknown label position: " + s);
}

void validate(const LayoutConfig& config) {
  if (config.custom_rows) {
    if (config.custom_rows->empty())
      throw ConfigError("custom_rows must not be empty");
    for (int cols : *config.custom_rows)
      if (cols < 1) throw ConfigError("custom_rows entries must be >= 1");
  } else {
    if (config.grid_rows < 1 || config.grid_cols < 1)
      throw ConfigError("grid_rows and grid_cols must be positive");
  }
  for (const auto& range : {config.h_margin_range, config.v_margin_range}) {
    if (range[0] < 0) throw ConfigError("margin range min must be >= 0");
    if (range[0] > range[1]) throw ConfigError("margin range min exceeds max");
  }
  if (config.border < 0) throw ConfigError("border must be >= 0");
  if (!(config.panel_aspect > 0.0))
    throw ConfigError("panel_aspect must be > 0");
  if (config.panel_base_size < 1)
    throw ConfigError("panel_base_size must be >= 1");
  if (static_cast<int>(std::llround(config.panel_base_size /
                                    config.panel_aspect)) < 1)
    throw ConfigError("panel height rounds to zero at this aspect");
}

namespace {

// Bijective base-26: 0 -> "a", 25 -> "z", 26 -> "aa", 27 -> "ab", ...
std::string alpha_label(int index, char base) {
  std::string out;
  int n = index + 1;
  while (n > 0) {
    --n;
    out.insert(out.begin(), static_cast<char>(base + n % 26));
    n /= 26;
  }
  return out;
}

}  // namespace

std::string panel_label(LabelScheme scheme, int index) {
  switch (scheme) {
    case LabelScheme::none: return "";
    case LabelScheme::numeric: return std::to_string(index + 1);
    case LabelScheme::lower_alpha: return alpha_label(index, 'a');
    case LabelScheme::upper_alpha: return alpha_label(index, 'A');
    case LabelScheme::alpha_numeric:
      return alpha_label(index, 'a') + std::to_string(index + 1);
    case LabelScheme::numeric_alpha:
      return std::to_string(index + 1) + alpha_label(index, 'a');
    case LabelScheme::hyphenated:
      return alpha_label(index, 'a') + "-" + std::to_string(index + 1);
  }
  return "";
}

int label_band_px(const LayoutConfig& config) {
  return std::max(1, static_cast<int>(std::llround(
                         0.16 * config.panel_base_size)));
}

int label_inset_px(const LayoutConfig& config) {
  return std::max(1, static_cast<int>(std::llround(
                         0.02 * config.panel_base_size)));
}

LayoutSpec resolve_layout(const LayoutConfig& config, std::uint64_t rng_seed) {
  validate(config);
  SplitMix64 rng(rng_seed);

  LabelScheme scheme;
  if (config.label_scheme) {
    scheme = *config.label_scheme;
  } else {
    static constexpr LabelScheme kLabeled[] = {
        LabelScheme::numeric,       LabelScheme::lower_alpha,
        LabelScheme::upper_alpha,   LabelScheme::alpha_numeric,
        LabelScheme::numeric_alpha, LabelScheme::hyphenated};
    scheme = kLabeled[rng.next_below(6)];
  }
  const int h_margin = static_cast<int>(
      rng.next_int(config.h_margin_range[0], config.h_margin_range[1]));
  const int v_margin = static_cast<int>(
      rng.next_int(config.v_margin_range[0], config.v_margin_range[1]));

  const int panel_w = config.panel_base_size;
  const int panel_h = static_cast<int>(
      std::llround(config.panel_base_size / config.panel_aspect));
  const std::vector<int> rows =
      config.custom_rows
          ? *config.custom_rows
          : std::vector<int>(config.grid_rows, config.grid_cols);
  const int n_rows = static_cast<int>(rows.size());
  const bool outside = config.label_position == LabelPosition::outside_above;
  const int band = outside ? label_band_px(config) : 0;
  const int inset = label_inset_px(config);

  LayoutSpec spec;
  spec.seed = rng_seed;

  int max_row_w = 0;
  for (int cols : rows)
    max_row_w = std::max(max_row_w, cols * panel_w + (cols - 1) * h_margin);
  spec.canvas_w = max_row_w + 2 * config.border;
  spec.canvas_h = 2 * config.border + n_rows * panel_h +
                  (n_rows - 1) * v_margin + n_rows * band;

  int index = 0;
  int y = config.border;
  for (int r = 0; r < n_rows; ++r) {
    y += band;
    for (int c = 0; c < rows[r]; ++c, ++index) {
      PanelSlot slot;
      slot.rect = BBox{config.border + c * (panel_w + h_margin), y, panel_w,
                       panel_h};
      slot.label_text = panel_label(scheme, index);
      slot.label_anchor =
          outside ? PixelPoint{slot.rect.x, slot.rect.y - band}
                  : PixelPoint{slot.rect.x + inset, slot.rect.y + inset};
      spec.panels.push_back(std::move(slot));
    }
    y += panel_h;
    if (r + 1 < n_rows) y += v_margin;
  }
  return spec;
}

}  // namespace figforge
