#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "figforge/compositor.hpp"
#include "figforge/detection_eval.hpp"
#include "figforge/layout.hpp"
#include "figforge/perturbations.hpp"

namespace figforge {

// One JSON document with optional sections "layout", "mix", "pool_index",
// "generation", "eval", "perturbations", "filters". Absent sections take the
// defaults below; unknown keys anywhere are rejected. "mix" lists weights by
// modality name plus "mixed"; omitted weights are 0. "label_scheme": null
// means per-figure scheme sampling.
struct RunConfig {
  LayoutConfig layout;
  MixPolicy mix = uniform_mix();
  std::optional<std::filesystem::path> pool_index;

  struct Generation {
    std::uint64_t count = 0;
    std::uint64_t master_seed = 0;
    std::optional<int> workers;  // unset defers to flag/env/1 precedence
    std::optional<std::filesystem::path> out_dir;

    friend bool operator==(const Generation&, const Generation&) = default;
  } generation;

  EvalSettings eval;
  std::vector<PerturbationSpec> perturbations;

  struct Filters {
    double min_score = 0.5;        // decompose detection cutoff
    double nms_iou = 0.45;         // decompose suppression threshold
    double score_threshold = 0.5;  // pair classifier-score cutoff

    friend bool operator==(const Filters&, const Filters&) = default;
  } filters;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Strict parse; throws ConfigError on unknown keys or wrong types. Relative
// pool_index and generation.out_dir values are kept as written here.
RunConfig run_config_from_json(const nlohmann::json& j);

// Loads and parses, then resolves relative pool_index and out_dir against
// the config file's directory so a config bundle can move as a unit.
RunConfig load_run_config(const std::filesystem::path& path);

// Full effective document: every section present, defaults made explicit.
// Writing this next to outputs is what makes a run reproducible.
nlohmann::json run_config_to_json(const RunConfig& config);

}  // namespace figforge
