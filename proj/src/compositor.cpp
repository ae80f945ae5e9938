#include "figforge/compositor.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "figforge/manifest_io.hpp"
#include "figforge/rng.hpp"

namespace figforge {

using nlohmann::json;

const char* to_string(Split s) {
  return s == Split::train ? "train" : "validation";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  throw ValidationError("unknown split: " + s);
}

void validate(const PanelPool& pool) {
  std::unordered_set<std::string> ids;
  for (const PoolEntry& e : pool.entries) {
    if (!ids.insert(e.source_id).second)
      throw ValidationError("duplicate pool source_id",
                            {{"source_id", e.source_id}});
    if (!std::filesystem::exists(e.path))
      throw ValidationError("pool entry path does not exist",
                            {{"source_id", e.source_id}, {"path", e.path}});
  }
}

PanelPool load_pool(const std::filesystem::path& path) {
  const std::filesystem::path base = path.parent_path();
  PanelPool pool;
  for_each_jsonl(path, [&](std::size_t line_no, const json& row) {
    const std::string where =
        path.string() + ":" + std::to_string(line_no);
    require_exact_keys(row, {"source_id", "path", "modality", "split"}, where);
    for (const char* key : {"source_id", "path", "modality", "split"})
      if (!row.at(key).is_string())
        throw ValidationError(std::string("\"") + key + "\" must be a string",
                              {{"at", where}});
    PoolEntry e;
    e.source_id = row.at("source_id").get<std::string>();
    std::filesystem::path p = row.at("path").get<std::string>();
    e.path = (p.is_absolute() ? p : base / p).string();
    e.modality = modality_from_string(row.at("modality").get<std::string>());
    e.split = split_from_string(row.at("split").get<std::string>());
    pool.entries.push_back(std::move(e));
  });
  validate(pool);
  return pool;
}

void save_pool(const PanelPool& pool, const std::filesystem::path& path) {
  std::vector<json> rows;
  rows.reserve(pool.entries.size());
  for (const PoolEntry& e : pool.entries)
    rows.push_back(json{{"source_id", e.source_id},
                        {"path", e.path},
                        {"modality", to_string(e.modality)},
                        {"split", to_string(e.split)}});
  write_jsonl(path, rows);
}

void validate(const MixPolicy& policy) {
  double sum = policy.mixed;
  if (policy.mixed < 0.0) throw ConfigError("mix weight for mixed is negative");
  for (std::size_t i = 0; i < kModalityCount; ++i) {
    if (policy.pure[i] < 0.0)
      throw ConfigError(std::string("mix weight for ") +
                        to_string(static_cast<Modality>(i)) + " is negative");
    sum += policy.pure[i];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("mix weights must sum to 1",
                      {{"sum", std::to_string(sum)}});
}

MixPolicy uniform_mix() {
  MixPolicy policy;
  policy.pure.fill(1.0 / 6.0);
  policy.mixed = 1.0 / 6.0;
  return policy;
}

LabelStyle default_label_style(const LayoutConfig& config) {
  LabelStyle style;
  style.font_px = std::max(
      6, static_cast<int>(std::llround(0.12 * config.panel_base_size)));
  if (config.label_position == LabelPosition::inside_top_left)
    style.background = cv::Scalar(255, 255, 255);
  return style;
}

cv::Mat fit_panel(const cv::Mat& src, int w, int h) {
  if (src.empty()) throw ValidationError("empty source image");
  if (w < 1 || h < 1)
    throw ValidationError("target panel size must be positive");
  const long long sw = src.cols;
  const long long sh = src.rows;
  long long cw;
  long long ch;
  if (sw * h >= sh * w) {  // source at least as wide as the target aspect
    ch = sh;
    cw = sh * w / h;
  } else {
    cw = sw;
    ch = sw * h / w;
  }
  if (cw < 1 || ch < 1)
    throw ValidationError("panel crop has zero size",
                          {{"source", std::to_string(src.cols) + "x" +
                                          std::to_string(src.rows)},
                           {"target", std::to_string(w) + "x" +
                                          std::to_string(h)}});
  const int x0 = static_cast<int>((sw - cw) / 2);
  const int y0 = static_cast<int>((sh - ch) / 2);
  const cv::Mat crop = src(cv::Rect(x0, y0, static_cast<int>(cw),
                                    static_cast<int>(ch)));
  if (cw == w && ch == h) return crop.clone();
  cv::Mat out;
  cv::resize(crop, out, cv::Size(w, h), 0, 0, cv::INTER_LINEAR);
  return out;
}

namespace {

constexpr int kFont = cv::FONT_HERSHEY_SIMPLEX;
constexpr int kThickness = 1;
constexpr int kLabelPad = 2;

struct LabelGeometry {
  cv::Size text;     // glyph box above the baseline
  int baseline = 0;  // descender rows below the glyph box
  double scale = 0.0;
};

LabelGeometry label_geometry(const std::string& text, const LabelStyle& style) {
  LabelGeometry g;
  g.scale = cv::getFontScaleFromHeight(kFont, style.font_px, kThickness);
  g.text = cv::getTextSize(text, kFont, g.scale, kThickness, &g.baseline);
  return g;
}

cv::Mat to_bgr(const cv::Mat& src, const std::string& source_id) {
  if (src.type() == CV_8UC3) return src;
  cv::Mat out;
  if (src.type() == CV_8UC1) {
    cv::cvtColor(src, out, cv::COLOR_GRAY2BGR);
  } else if (src.type() == CV_8UC4) {
    cv::cvtColor(src, out, cv::COLOR_BGRA2BGR);
  } else {
    throw ValidationError("unsupported panel image type",
                          {{"source_id", source_id},
                           {"cv_type", std::to_string(src.type())}});
  }
  return out;
}

void draw_label(cv::Mat& canvas, const PanelSlot& slot,
                const LabelStyle& style) {
  if (slot.label_text.empty()) return;
  const LabelGeometry g = label_geometry(slot.label_text, style);
  const int x = slot.label_anchor.x;
  const int y = slot.label_anchor.y;
  if (style.background) {
    const cv::Rect box(x - 1, y - 1, g.text.width + 2,
                       g.text.height + g.baseline + 2);
    const cv::Rect clipped =
        box & cv::Rect(0, 0, canvas.cols, canvas.rows);
    if (clipped.area() > 0)
      cv::rectangle(canvas, clipped, *style.background, cv::FILLED);
  }
  cv::putText(canvas, slot.label_text, cv::Point(x, y + g.text.height), kFont,
              g.scale, style.color, kThickness, cv::LINE_8);
}

}  // namespace

std::optional<BBox> label_region(const PanelSlot& slot, const LabelStyle& style,
                                 int canvas_w, int canvas_h) {
  if (slot.label_text.empty()) return std::nullopt;
  const LabelGeometry g = label_geometry(slot.label_text, style);
  const int x0 = std::max(0, slot.label_anchor.x - kLabelPad);
  const int y0 = std::max(0, slot.label_anchor.y - kLabelPad);
  const int x1 = std::min(canvas_w,
                          slot.label_anchor.x + g.text.width + kLabelPad);
  const int y1 = std::min(
      canvas_h, slot.label_anchor.y + g.text.height + g.baseline + kLabelPad);
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  return BBox{x0, y0, x1 - x0, y1 - y0};
}

std::pair<cv::Mat, FigureManifest> compose_figure(
    const LayoutSpec& spec, const std::vector<PanelImage>& panels,
    const LabelStyle& style) {
  if (panels.size() != spec.panels.size())
    throw ValidationError("panel image count does not match layout slots",
                          {{"images", std::to_string(panels.size())},
                           {"slots", std::to_string(spec.panels.size())}});
  if (spec.canvas_w < 1 || spec.canvas_h < 1)
    throw ValidationError("canvas size must be positive");

  cv::Mat canvas(spec.canvas_h, spec.canvas_w, CV_8UC3,
                 cv::Scalar(255, 255, 255));
  FigureManifest manifest;
  manifest.width = spec.canvas_w;
  manifest.height = spec.canvas_h;
  manifest.seed = spec.seed;

  for (std::size_t i = 0; i < panels.size(); ++i) {
    const PanelSlot& slot = spec.panels[i];
    const PanelImage& panel = panels[i];
    if (panel.image.empty())
      throw ValidationError("undecodable panel image",
                            {{"source_id", panel.source_id}});
    if (slot.rect.x < 0 || slot.rect.y < 0 ||
        slot.rect.x + slot.rect.w > spec.canvas_w ||
        slot.rect.y + slot.rect.h > spec.canvas_h)
      throw ValidationError("panel rect outside canvas",
                            {{"source_id", panel.source_id}});
    const cv::Mat fitted = fit_panel(to_bgr(panel.image, panel.source_id),
                                     slot.rect.w, slot.rect.h);
    fitted.copyTo(canvas(
        cv::Rect(slot.rect.x, slot.rect.y, slot.rect.w, slot.rect.h)));
    manifest.panels.push_back(PanelRecord{slot.rect, slot.label_text,
                                          panel.source_id, panel.modality});
  }
  for (const PanelSlot& slot : spec.panels) draw_label(canvas, slot, style);
  return {std::move(canvas), std::move(manifest)};
}

namespace {

// Decoded-source cache shared across workers. Unbounded: pools at toolkit
// scale are far smaller than the figure count, and entries are refcounted
// cv::Mat headers.
class SourceCache {
 public:
  cv::Mat load(const std::string& path, const std::string& source_id) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = cache_.find(path);
      if (it != cache_.end()) return it->second;
    }
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty())
      throw IoError("cannot decode panel source image",
                    {{"source_id", source_id}, {"path", path}});
    std::lock_guard<std::mutex> lock(mutex_);
    return cache_.emplace(path, std::move(img)).first->second;
  }

 private:
  std::mutex mutex_;
  std::unordered_map<std::string, cv::Mat> cache_;
};

// Serializes manifest rows strictly by figure index no matter which worker
// finishes first.
class OrderedJsonlWriter {
 public:
  explicit OrderedJsonlWriter(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_)
      throw IoError("cannot write manifest: " + path.string());
  }

  void submit(std::uint64_t index, std::string line) {
    std::lock_guard<std::mutex> lock(mutex_);
    pending_.emplace(index, std::move(line));
    while (!pending_.empty() && pending_.begin()->first == next_) {
      out_ << pending_.begin()->second << '\n';
      pending_.erase(pending_.begin());
      ++next_;
    }
  }

  void close(std::uint64_t expected) {
    if (next_ != expected || !pending_.empty())
      throw IoError("manifest writer finished with gaps",
                    {{"path", path_.string()}});
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mutex_;
  std::uint64_t next_ = 0;
  std::map<std::uint64_t, std::string> pending_;
};

std::string figure_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fig_%08llu",
                static_cast<unsigned long long>(index));
  return buf;
}

}  // namespace

std::filesystem::path generate_corpus(const PanelPool& pool,
                                      const GenerationConfig& config) {
  validate(config.layout);
  validate(config.mix);
  validate(pool);
  if (config.workers < 1) throw ConfigError("workers must be >= 1");

  std::array<std::vector<const PoolEntry*>, kModalityCount> by_modality;
  for (const PoolEntry& e : pool.entries)
    by_modality[static_cast<std::size_t>(e.modality)].push_back(&e);
  for (std::size_t i = 0; i < kModalityCount; ++i) {
    const bool needed = config.mix.pure[i] > 0.0 || config.mix.mixed > 0.0;
    if (needed && by_modality[i].empty())
      throw ValidationError(
          std::string("pool has no entries for modality ") +
          to_string(static_cast<Modality>(i)));
  }

  std::error_code ec;
  std::filesystem::create_directories(config.out_dir / "images", ec);
  if (ec)
    throw IoError("cannot create output directory",
                  {{"path", (config.out_dir / "images").string()},
                   {"error", ec.message()}});

  const std::filesystem::path manifest_path = config.out_dir / "manifest.jsonl";
  OrderedJsonlWriter writer(manifest_path);
  if (config.count == 0) {
    writer.close(0);
    return manifest_path;
  }

  const LabelStyle style = default_label_style(config.layout);
  SourceCache cache;

  // Cumulative category bounds in the fixed draw order (five pure, then
  // mixed); the final bound is forced to 1 so next_real() always lands.
  std::array<double, kModalityCount + 1> bounds{};
  double acc = 0.0;
  for (std::size_t i = 0; i < kModalityCount; ++i) {
    acc += config.mix.pure[i];
    bounds[i] = acc;
  }
  bounds[kModalityCount] = 1.0;
  // Rounding in the cumulative sum can push u past every positive-weight
  // bound; the draw then falls back to the last positive-weight category.
  std::size_t fallback = kModalityCount;
  if (config.mix.mixed <= 0.0)
    for (std::size_t c = kModalityCount; c-- > 0;)
      if (config.mix.pure[c] > 0.0) {
        fallback = c;
        break;
      }

  const auto render_one = [&](std::uint64_t index) {
    const std::uint64_t figure_seed = derive_seed(config.master_seed, index);
    SplitMix64 rng(figure_seed);

    const double u = rng.next_real();
    std::size_t category = fallback;
    for (std::size_t c = 0; c <= kModalityCount; ++c) {
      const double weight =
          c < kModalityCount ? config.mix.pure[c] : config.mix.mixed;
      if (weight > 0.0 && u < bounds[c]) {
        category = c;
        break;
      }
    }

    const std::uint64_t layout_seed = rng.next();
    const LayoutSpec spec = resolve_layout(config.layout, layout_seed);

    std::vector<PanelImage> panels;
    panels.reserve(spec.panels.size());
    for (std::size_t p = 0; p < spec.panels.size(); ++p) {
      const std::size_t modality =
          category < kModalityCount
              ? category
              : static_cast<std::size_t>(rng.next_below(kModalityCount));
      const auto& entries = by_modality[modality];
      const PoolEntry* entry =
          entries[static_cast<std::size_t>(rng.next_below(entries.size()))];
      panels.push_back(PanelImage{cache.load(entry->path, entry->source_id),
                                  entry->source_id,
                                  static_cast<Modality>(modality)});
    }

    auto [image, manifest] = compose_figure(spec, panels, style);
    manifest.figure_id = figure_name(index);
    manifest.file = "images/" + manifest.figure_id + ".png";
    manifest.seed = figure_seed;

    const std::filesystem::path image_path = config.out_dir / manifest.file;
    if (!cv::imwrite(image_path.string(), image))
      throw IoError("cannot write image", {{"path", image_path.string()}});
    writer.submit(index, manifest_to_json(manifest).dump());
  };

  const std::uint64_t count = config.count;
  const int workers = static_cast<int>(std::min<std::uint64_t>(
      static_cast<std::uint64_t>(config.workers), count));
  if (workers <= 1) {
    for (std::uint64_t i = 0; i < count; ++i) render_one(i);
  } else {
    std::atomic<std::uint64_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        while (!failed.load(std::memory_order_relaxed)) {
          const std::uint64_t i = next.fetch_add(1);
          if (i >= count) break;
          try {
            render_one(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
            failed.store(true, std::memory_order_relaxed);
          }
        }
      });
    }
    for (std::thread& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  writer.close(count);
  return manifest_path;
}

}  // namespace figforge
