#include "figforge/run_config.hpp"

#include <fstream>

namespace figforge {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::vector<const char*>& keys,
                         const std::string& where) {
  if (!obj.is_object())
    throw ConfigError("expected a JSON object", {{"at", where}});
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown key \"" + it.key() + "\"", {{"at", where}});
  }
}

int get_int(const json& v, const std::string& where) {
  if (!v.is_number_integer())
    throw ConfigError("expected an integer", {{"at", where}});
  return v.get<int>();
}

std::uint64_t get_u64(const json& v, const std::string& where) {
  if (!v.is_number_integer() ||
      (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError("expected a non-negative integer", {{"at", where}});
  return v.get<std::uint64_t>();
}

double get_number(const json& v, const std::string& where) {
  if (!v.is_number())
    throw ConfigError("expected a number", {{"at", where}});
  return v.get<double>();
}

std::string get_string(const json& v, const std::string& where) {
  if (!v.is_string())
    throw ConfigError("expected a string", {{"at", where}});
  return v.get<std::string>();
}

std::array<int, 2> get_range(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2)
    throw ConfigError("expected a [min, max] pair", {{"at", where}});
  return {get_int(v[0], where + "[0]"), get_int(v[1], where + "[1]")};
}

LayoutConfig parse_layout(const json& j) {
  reject_unknown_keys(j,
                      {"grid_rows", "grid_cols", "custom_rows",
                       "h_margin_range", "v_margin_range", "border",
                       "label_scheme", "label_position", "panel_aspect",
                       "panel_base_size"},
                      "layout");
  LayoutConfig c;
  if (j.contains("grid_rows")) c.grid_rows = get_int(j["grid_rows"], "layout.grid_rows");
  if (j.contains("grid_cols")) c.grid_cols = get_int(j["grid_cols"], "layout.grid_cols");
  if (j.contains("custom_rows")) {
    const json& rows = j["custom_rows"];
    if (rows.is_null()) {
      c.custom_rows.reset();
    } else {
      if (!rows.is_array())
        throw ConfigError("expected an array", {{"at", "layout.custom_rows"}});
      std::vector<int> parsed;
      for (std::size_t i = 0; i < rows.size(); ++i)
        parsed.push_back(get_int(rows[i], "layout.custom_rows[" +
                                              std::to_string(i) + "]"));
      c.custom_rows = std::move(parsed);
    }
  }
  if (j.contains("h_margin_range"))
    c.h_margin_range = get_range(j["h_margin_range"], "layout.h_margin_range");
  if (j.contains("v_margin_range"))
    c.v_margin_range = get_range(j["v_margin_range"], "layout.v_margin_range");
  if (j.contains("border")) c.border = get_int(j["border"], "layout.border");
  if (j.contains("label_scheme")) {
    const json& scheme = j["label_scheme"];
    if (scheme.is_null())
      c.label_scheme.reset();
    else
      c.label_scheme = label_scheme_from_string(
          get_string(scheme, "layout.label_scheme"));
  }
  if (j.contains("label_position"))
    c.label_position = label_position_from_string(
        get_string(j["label_position"], "layout.label_position"));
  if (j.contains("panel_aspect"))
    c.panel_aspect = get_number(j["panel_aspect"], "layout.panel_aspect");
  if (j.contains("panel_base_size"))
    c.panel_base_size =
        get_int(j["panel_base_size"], "layout.panel_base_size");
  validate(c);
  return c;
}

MixPolicy parse_mix(const json& j) {
  std::vector<const char*> keys;
  for (std::size_t i = 0; i < kModalityCount; ++i)
    keys.push_back(to_string(static_cast<Modality>(i)));
  keys.push_back("mixed");
  reject_unknown_keys(j, keys, "mix");
  MixPolicy policy;  // omitted weights stay 0
  for (std::size_t i = 0; i < kModalityCount; ++i) {
    const char* name = to_string(static_cast<Modality>(i));
    if (j.contains(name))
      policy.pure[i] = get_number(j[name], std::string("mix.") + name);
  }
  if (j.contains("mixed")) policy.mixed = get_number(j["mixed"], "mix.mixed");
  validate(policy);
  return policy;
}

RunConfig::Generation parse_generation(const json& j) {
  reject_unknown_keys(j, {"count", "master_seed", "workers", "out_dir"},
                      "generation");
  RunConfig::Generation g;
  if (j.contains("count")) g.count = get_u64(j["count"], "generation.count");
  if (j.contains("master_seed"))
    g.master_seed = get_u64(j["master_seed"], "generation.master_seed");
  if (j.contains("workers") && !j["workers"].is_null()) {
    g.workers = get_int(j["workers"], "generation.workers");
    if (*g.workers < 1)
      throw ConfigError("workers must be >= 1",
                        {{"at", "generation.workers"}});
  }
  if (j.contains("out_dir") && !j["out_dir"].is_null())
    g.out_dir = get_string(j["out_dir"], "generation.out_dir");
  return g;
}

EvalSettings parse_eval(const json& j) {
  reject_unknown_keys(j, {"iou_thresholds", "f1_iou", "score_threshold"},
                      "eval");
  EvalSettings s;
  if (j.contains("iou_thresholds")) {
    const json& thr = j["iou_thresholds"];
    if (!thr.is_array())
      throw ConfigError("expected an array", {{"at", "eval.iou_thresholds"}});
    s.iou_thresholds.clear();
    for (std::size_t i = 0; i < thr.size(); ++i)
      s.iou_thresholds.push_back(get_number(
          thr[i], "eval.iou_thresholds[" + std::to_string(i) + "]"));
  }
  if (j.contains("f1_iou")) s.f1_iou = get_number(j["f1_iou"], "eval.f1_iou");
  if (j.contains("score_threshold"))
    s.score_threshold =
        get_number(j["score_threshold"], "eval.score_threshold");
  validate(s);
  return s;
}

std::vector<PerturbationSpec> parse_perturbations(const json& j) {
  if (!j.is_array())
    throw ConfigError("expected an array", {{"at", "perturbations"}});
  std::vector<PerturbationSpec> specs;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string where = "perturbations[" + std::to_string(i) + "]";
    reject_unknown_keys(j[i], {"kind", "magnitude", "seed"}, where);
    if (!j[i].contains("kind"))
      throw ConfigError("missing key \"kind\"", {{"at", where}});
    PerturbationSpec spec;
    spec.kind =
        perturb_kind_from_string(get_string(j[i]["kind"], where + ".kind"));
    if (j[i].contains("magnitude"))
      spec.magnitude = get_number(j[i]["magnitude"], where + ".magnitude");
    if (j[i].contains("seed") && !j[i]["seed"].is_null())
      spec.seed = get_u64(j[i]["seed"], where + ".seed");
    validate(spec);
    specs.push_back(spec);
  }
  return specs;
}

RunConfig::Filters parse_filters(const json& j) {
  reject_unknown_keys(j, {"min_score", "nms_iou", "score_threshold"},
                      "filters");
  RunConfig::Filters f;
  if (j.contains("min_score"))
    f.min_score = get_number(j["min_score"], "filters.min_score");
  if (j.contains("nms_iou"))
    f.nms_iou = get_number(j["nms_iou"], "filters.nms_iou");
  if (j.contains("score_threshold"))
    f.score_threshold =
        get_number(j["score_threshold"], "filters.score_threshold");
  for (double v : {f.min_score, f.nms_iou, f.score_threshold})
    if (!(v >= 0.0 && v <= 1.0))
      throw ConfigError("filter thresholds must lie in [0, 1]");
  return f;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"layout", "mix", "pool_index", "generation", "eval",
                       "perturbations", "filters"},
                      "config");
  RunConfig config;
  if (j.contains("layout")) config.layout = parse_layout(j["layout"]);
  if (j.contains("mix")) config.mix = parse_mix(j["mix"]);
  if (j.contains("pool_index") && !j["pool_index"].is_null())
    config.pool_index = get_string(j["pool_index"], "pool_index");
  if (j.contains("generation"))
    config.generation = parse_generation(j["generation"]);
  if (j.contains("eval")) config.eval = parse_eval(j["eval"]);
  if (j.contains("perturbations"))
    config.perturbations = parse_perturbations(j["perturbations"]);
  if (j.contains("filters")) config.filters = parse_filters(j["filters"]);
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config: " + path.string());
  json parsed = json::parse(in, nullptr, false);
  if (parsed.is_discarded())
    throw ConfigError("malformed JSON config", {{"path", path.string()}});
  RunConfig config = run_config_from_json(parsed);
  const std::filesystem::path base = path.parent_path();
  if (config.pool_index && config.pool_index->is_relative())
    config.pool_index = base / *config.pool_index;
  if (config.generation.out_dir && config.generation.out_dir->is_relative())
    config.generation.out_dir = base / *config.generation.out_dir;
  return config;
}

json run_config_to_json(const RunConfig& config) {
  json layout{{"grid_rows", config.layout.grid_rows},
              {"grid_cols", config.layout.grid_cols},
              {"custom_rows", config.layout.custom_rows
                                  ? json(*config.layout.custom_rows)
                                  : json(nullptr)},
              {"h_margin_range", config.layout.h_margin_range},
              {"v_margin_range", config.layout.v_margin_range},
              {"border", config.layout.border},
              {"label_scheme", config.layout.label_scheme
                                   ? json(to_string(*config.layout.label_scheme))
                                   : json(nullptr)},
              {"label_position", to_string(config.layout.label_position)},
              {"panel_aspect", config.layout.panel_aspect},
              {"panel_base_size", config.layout.panel_base_size}};

  json mix = json::object();
  for (std::size_t i = 0; i < kModalityCount; ++i)
    mix[to_string(static_cast<Modality>(i))] = config.mix.pure[i];
  mix["mixed"] = config.mix.mixed;

  json generation{{"count", config.generation.count},
                  {"master_seed", config.generation.master_seed},
                  {"workers", config.generation.workers
                                  ? json(*config.generation.workers)
                                  : json(nullptr)},
                  {"out_dir", config.generation.out_dir
                                  ? json(config.generation.out_dir->string())
                                  : json(nullptr)}};

  json eval{{"iou_thresholds", config.eval.iou_thresholds},
            {"f1_iou", config.eval.f1_iou},
            {"score_threshold", config.eval.score_threshold}};

  json perturbations = json::array();
  for (const PerturbationSpec& spec : config.perturbations)
    perturbations.push_back(
        json{{"kind", to_string(spec.kind)},
             {"magnitude", spec.magnitude},
             {"seed", spec.seed ? json(*spec.seed) : json(nullptr)}});

  json filters{{"min_score", config.filters.min_score},
               {"nms_iou", config.filters.nms_iou},
               {"score_threshold", config.filters.score_threshold}};

  return json{{"layout", std::move(layout)},
              {"mix", std::move(mix)},
              {"pool_index", config.pool_index
                                 ? json(config.pool_index->string())
                                 : json(nullptr)},
              {"generation", std::move(generation)},
              {"eval", std::move(eval)},
              {"perturbations", std::move(perturbations)},
              {"filters", std::move(filters)}};
}

}  // namespace figforge
