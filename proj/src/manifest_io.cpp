#include "figforge/manifest_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>

namespace figforge {

using nlohmann::json;

namespace {

std::string line_ctx(const std::filesystem::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

int get_int(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_number_integer())
    throw ValidationError(std::string("\"") + key + "\" must be an integer",
                          {{"at", where}});
  return v.get<int>();
}

std::string get_string(const json& j, const char* key,
                       const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_string())
    throw ValidationError(std::string("\"") + key + "\" must be a string",
                          {{"at", where}});
  return v.get<std::string>();
}

json bbox_to_json(const BBox& b) {
  return json{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
}

BBox bbox_from_json(const json& j, const std::string& where) {
  require_exact_keys(j, {"x", "y", "w", "h"}, where);
  BBox b{get_int(j, "x", where), get_int(j, "y", where),
         get_int(j, "w", where), get_int(j, "h", where)};
  if (b.w < 1 || b.h < 1)
    throw ValidationError("bbox width and height must be positive",
                          {{"at", where}});
  if (b.x < 0 || b.y < 0)
    throw ValidationError("bbox origin must be non-negative", {{"at", where}});
  return b;
}

}  // namespace

void require_exact_keys(const json& obj, const std::vector<const char*>& keys,
                        const std::string& where) {
  if (!obj.is_object())
    throw ValidationError("expected a JSON object", {{"at", where}});
  for (const char* k : keys)
    if (!obj.contains(k))
      throw ValidationError(std::string("missing key \"") + k + "\"",
                            {{"at", where}});
  if (obj.size() != keys.size()) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::find_if(keys.begin(), keys.end(), [&](const char* k) {
            return it.key() == k;
          }) == keys.end())
        throw ValidationError("unknown key \"" + it.key() + "\"",
                              {{"at", where}});
    }
  }
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    json parsed = json::parse(line, nullptr, false);
    if (parsed.is_discarded())
      throw ValidationError("malformed JSON on line " + std::to_string(line_no),
                            {{"at", line_ctx(path, line_no)},
                             {"line", std::to_string(line_no)}});
    fn(line_no, parsed);
  }
}

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  for (const json& row : rows) out << row.dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

json manifest_to_json(const FigureManifest& m) {
  json panels = json::array();
  for (const PanelRecord& p : m.panels) {
    panels.push_back(json{{"bbox", bbox_to_json(p.bbox)},
                          {"label_text", p.label_text},
                          {"source_id", p.source_id},
                          {"modality", to_string(p.modality)}});
  }
  return json{{"figure_id", m.figure_id},
              {"file", m.file},
              {"width", m.width},
              {"height", m.height},
              {"seed", m.seed},
              {"panels", std::move(panels)},
              {"caption", m.caption ? json(*m.caption) : json(nullptr)}};
}

FigureManifest manifest_from_json(const json& j) {
  const std::string where = j.contains("figure_id") && j["figure_id"].is_string()
                                ? j["figure_id"].get<std::string>()
                                : "<row>";
  require_exact_keys(
      j, {"figure_id", "file", "width", "height", "seed", "panels", "caption"},
      where);
  FigureManifest m;
  m.figure_id = get_string(j, "figure_id", where);
  m.file = get_string(j, "file", where);
  m.width = get_int(j, "width", where);
  m.height = get_int(j, "height", where);
  const json& seed = j.at("seed");
  if (!seed.is_number_integer() ||
      (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0))
    throw ValidationError("\"seed\" must be a non-negative integer",
                          {{"at", where}});
  m.seed = seed.get<std::uint64_t>();
  const json& panels = j.at("panels");
  if (!panels.is_array() || panels.empty())
    throw ValidationError("\"panels\" must be a non-empty array",
                          {{"at", where}});
  for (const json& p : panels) {
    require_exact_keys(p, {"bbox", "label_text", "source_id", "modality"},
                       where);
    PanelRecord rec;
    rec.bbox = bbox_from_json(p.at("bbox"), where);
    rec.label_text = get_string(p, "label_text", where);
    rec.source_id = get_string(p, "source_id", where);
    rec.modality = modality_from_string(get_string(p, "modality", where));
    m.panels.push_back(std::move(rec));
  }
  const json& caption = j.at("caption");
  if (caption.is_string())
    m.caption = caption.get<std::string>();
  else if (!caption.is_null())
    throw ValidationError("\"caption\" must be a string or null",
                          {{"at", where}});
  return m;
}

std::vector<FigureManifest> read_manifest(const std::filesystem::path& path) {
  std::vector<FigureManifest> out;
  for_each_jsonl(path, [&](std::size_t line_no, const json& row) {
    try {
      out.push_back(manifest_from_json(row));
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(e.what()) + " (line " +
                                std::to_string(line_no) + ")",
                            {{"at", line_ctx(path, line_no)}});
    }
  });
  return out;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<FigureManifest>& manifests) {
  std::vector<json> rows;
  rows.reserve(manifests.size());
  for (const FigureManifest& m : manifests) rows.push_back(manifest_to_json(m));
  write_jsonl(path, rows);
}

std::vector<DetectionSet> read_detections(const std::filesystem::path& path) {
  std::vector<DetectionSet> out;
  for_each_jsonl(path, [&](std::size_t line_no, const json& row) {
    const std::string where = line_ctx(path, line_no);
    require_exact_keys(row, {"image_id", "boxes"}, where);
    DetectionSet set;
    set.image_id = get_string(row, "image_id", where);
    const json& boxes = row.at("boxes");
    if (!boxes.is_array())
      throw ValidationError("\"boxes\" must be an array", {{"at", where}});
    for (const json& b : boxes) {
      require_exact_keys(b, {"x", "y", "w", "h", "score"}, where);
      ScoredBox sb;
      sb.bbox = BBox{get_int(b, "x", where), get_int(b, "y", where),
                     get_int(b, "w", where), get_int(b, "h", where)};
      if (sb.bbox.w < 1 || sb.bbox.h < 1)
        throw ValidationError(
            "box width and height must be positive (line " +
                std::to_string(line_no) + ")",
            {{"at", where}});
      const json& score = b.at("score");
      if (!score.is_number())
        throw ValidationError("\"score\" must be a number (line " +
                                  std::to_string(line_no) + ")",
                              {{"at", where}});
      sb.score = score.get<double>();
      if (!(sb.score >= 0.0 && sb.score <= 1.0))
        throw ValidationError("score outside [0,1] on line " +
                                  std::to_string(line_no),
                              {{"at", where}});
      set.boxes.push_back(sb);
    }
    out.push_back(std::move(set));
  });
  return out;
}

void write_detections(const std::filesystem::path& path,
                      const std::vector<DetectionSet>& sets) {
  std::vector<json> rows;
  rows.reserve(sets.size());
  for (const DetectionSet& s : sets) {
    json boxes = json::array();
    for (const ScoredBox& b : s.boxes) {
      if (!(b.score >= 0.0 && b.score <= 1.0))
        throw ValidationError("score outside [0,1]",
                              {{"image_id", s.image_id}});
      json row = bbox_to_json(b.bbox);
      row["score"] = b.score;
      boxes.push_back(std::move(row));
    }
    rows.push_back(json{{"image_id", s.image_id}, {"boxes", std::move(boxes)}});
  }
  write_jsonl(path, rows);
}

std::vector<CompoundRecord> read_records(const std::filesystem::path& path) {
  std::vector<CompoundRecord> out;
  for_each_jsonl(path, [&](std::size_t line_no, const json& row) {
    const std::string where = line_ctx(path, line_no);
    require_exact_keys(
        row, {"figure_id", "file", "caption", "modality_labels",
              "classifier_score"},
        where);
    CompoundRecord rec;
    rec.figure_id = get_string(row, "figure_id", where);
    rec.image_path = get_string(row, "file", where);
    rec.caption = get_string(row, "caption", where);
    const json& labels = row.at("modality_labels");
    if (!labels.is_array())
      throw ValidationError("\"modality_labels\" must be an array",
                            {{"at", where}});
    for (const json& l : labels) {
      if (!l.is_string())
        throw ValidationError("modality labels must be strings",
                              {{"at", where}});
      std::string norm = l.get<std::string>();
      std::transform(norm.begin(), norm.end(), norm.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      rec.modality_labels.push_back(std::move(norm));
    }
    const json& score = row.at("classifier_score");
    if (score.is_number()) {
      rec.classifier_score = score.get<double>();
      if (!(*rec.classifier_score >= 0.0 && *rec.classifier_score <= 1.0))
        throw ValidationError("classifier_score outside [0,1] on line " +
                                  std::to_string(line_no),
                              {{"at", where}});
    } else if (!score.is_null()) {
      throw ValidationError("\"classifier_score\" must be a number or null",
                            {{"at", where}});
    }
    out.push_back(std::move(rec));
  });
  return out;
}

void write_records(const std::filesystem::path& path,
                   const std::vector<CompoundRecord>& records) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const CompoundRecord& r : records) {
    rows.push_back(json{
        {"figure_id", r.figure_id},
        {"file", r.image_path},
        {"caption", r.caption},
        {"modality_labels", r.modality_labels},
        {"classifier_score",
         r.classifier_score ? json(*r.classifier_score) : json(nullptr)}});
  }
  write_jsonl(path, rows);
}

std::vector<SubfigurePair> read_pairs(const std::filesystem::path& path) {
  std::vector<SubfigurePair> out;
  for_each_jsonl(path, [&](std::size_t line_no, const json& row) {
    const std::string where = line_ctx(path, line_no);
    require_exact_keys(
        row, {"subfigure_id", "parent_id", "file", "bbox", "caption", "score"},
        where);
    SubfigurePair p;
    p.subfigure_id = get_string(row, "subfigure_id", where);
    p.parent_id = get_string(row, "parent_id", where);
    p.file = get_string(row, "file", where);
    p.bbox = bbox_from_json(row.at("bbox"), where);
    p.caption = get_string(row, "caption", where);
    const json& score = row.at("score");
    if (score.is_number())
      p.score = score.get<double>();
    else if (!score.is_null())
      throw ValidationError("\"score\" must be a number or null",
                            {{"at", where}});
    out.push_back(std::move(p));
  });
  return out;
}

void write_pairs(const std::filesystem::path& path,
                 const std::vector<SubfigurePair>& pairs) {
  std::vector<json> rows;
  rows.reserve(pairs.size());
  for (const SubfigurePair& p : pairs) {
    rows.push_back(json{{"subfigure_id", p.subfigure_id},
                        {"parent_id", p.parent_id},
                        {"file", p.file},
                        {"bbox", bbox_to_json(p.bbox)},
                        {"caption", p.caption},
                        {"score", p.score ? json(*p.score) : json(nullptr)}});
  }
  write_jsonl(path, rows);
}

json export_coco(const std::vector<FigureManifest>& manifests) {
  std::unordered_set<std::string> seen;
  json images = json::array();
  json annotations = json::array();
  int image_id = 0;
  int ann_id = 0;
  for (const FigureManifest& m : manifests) {
    if (!seen.insert(m.figure_id).second)
      throw ValidationError("duplicate figure_id",
                            {{"figure_id", m.figure_id}});
    ++image_id;
    images.push_back(json{{"id", image_id},
                          {"file_name", m.file},
                          {"width", m.width},
                          {"height", m.height}});
    for (const PanelRecord& p : m.panels) {
      ++ann_id;
      annotations.push_back(
          json{{"id", ann_id},
               {"image_id", image_id},
               {"category_id", 1},
               {"bbox", json::array({p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h})},
               {"area", area(p.bbox)},
               {"iscrowd", 0}});
    }
  }
  return json{{"images", std::move(images)},
              {"annotations", std::move(annotations)},
              {"categories",
               json::array({json{{"id", 1}, {"name", "subfigure"}}})}};
}

void write_coco(const std::filesystem::path& path,
                const std::vector<FigureManifest>& manifests) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  out << export_coco(manifests).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

constexpr char kMagic[8] = {'E', 'M', 'B', 'F', '0', '0', '0', '1'};

void put_u32le(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xFF));
  buf.push_back(static_cast<char>((v >> 8) & 0xFF));
  buf.push_back(static_cast<char>((v >> 16) & 0xFF));
  buf.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".ids.jsonl");
}

}  // namespace

void write_embeddings(const std::filesystem::path& path,
                      const EmbeddingMatrix& m) {
  validate(m);
  std::string buf;
  buf.reserve(16 + m.data.size() * 4);
  buf.append(kMagic, 8);
  put_u32le(buf, m.n);
  put_u32le(buf, m.d);
  for (float f : m.data) put_u32le(buf, std::bit_cast<std::uint32_t>(f));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());

  std::vector<json> ids;
  ids.reserve(m.ids.size());
  for (const std::string& id : m.ids) ids.push_back(json(id));
  write_jsonl(sidecar_path(path), ids);
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 16)
    throw ValidationError(
        "embedding file shorter than the 16-byte header",
        {{"path", path.string()},
         {"reason", "truncated_header"},
         {"size", std::to_string(bytes.size())}});
  for (int i = 0; i < 8; ++i) {
    if (bytes[i] != kMagic[i])
      throw ValidationError(
          "embedding magic mismatch at byte " + std::to_string(i),
          {{"path", path.string()},
           {"reason", "magic_mismatch"},
           {"byte", std::to_string(i)}});
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  EmbeddingMatrix m;
  m.n = get_u32le(p + 8);
  m.d = get_u32le(p + 12);
  const std::uint64_t expected =
      16 + 4ull * m.n * m.d;
  if (bytes.size() != expected)
    throw ValidationError(
        "embedding file size " + std::to_string(bytes.size()) +
            " does not match header (n=" + std::to_string(m.n) +
            ", d=" + std::to_string(m.d) +
            ", expected " + std::to_string(expected) + " bytes)",
        {{"path", path.string()}, {"reason", "size_mismatch"}});
  m.data.resize(std::size_t(m.n) * m.d);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const float f = std::bit_cast<float>(get_u32le(p + 16 + 4 * i));
    if (!std::isfinite(f))
      throw ValidationError(
          "non-finite embedding value at row " + std::to_string(i / m.d) +
              " col " + std::to_string(i % m.d),
          {{"path", path.string()},
           {"reason", "non_finite"},
           {"row", std::to_string(i / m.d)},
           {"col", std::to_string(i % m.d)}});
    m.data[i] = f;
  }

  const std::filesystem::path ids_path = sidecar_path(path);
  for_each_jsonl(ids_path, [&](std::size_t line_no, const json& row) {
    if (!row.is_string())
      throw ValidationError("sidecar line " + std::to_string(line_no) +
                                " is not a JSON string",
                            {{"at", line_ctx(ids_path, line_no)}});
    m.ids.push_back(row.get<std::string>());
  });
  if (m.ids.size() != m.n)
    throw ValidationError(
        "sidecar has " + std::to_string(m.ids.size()) + " ids but header n=" +
            std::to_string(m.n),
        {{"path", ids_path.string()}, {"reason", "sidecar_count_mismatch"}});
  return m;
}

}  // namespace figforge
