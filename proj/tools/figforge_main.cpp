#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "figforge/compositor.hpp"
#include "figforge/curation.hpp"
#include "figforge/detection_eval.hpp"
#include "figforge/embed_eval.hpp"
#include "figforge/errors.hpp"
#include "figforge/manifest_io.hpp"
#include "figforge/perturbations.hpp"
#include "figforge/run_config.hpp"

namespace {

namespace fs = std::filesystem;
using figforge::RunConfig;
using nlohmann::json;

void write_json_file(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw figforge::IoError("cannot write file: " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw figforge::IoError("write failed: " + path.string());
}

// Reproducibility record next to the primary output of every subcommand.
void write_effective_config(const fs::path& anchor, const RunConfig& config) {
  const fs::path dir = fs::is_directory(anchor) ? anchor : anchor.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    fs::create_directories(dir, ec);
  }
  write_json_file(dir.empty() ? fs::path("effective_config.json")
                              : dir / "effective_config.json",
                  figforge::run_config_to_json(config));
}

RunConfig load_config_or_default(const std::string& config_path) {
  if (config_path.empty()) return RunConfig{};
  return figforge::load_run_config(config_path);
}

json stat_to_json(const figforge::StatTestResult& r) {
  return json{{"statistic", r.statistic},
              {"p_value", r.p_value},
              {"method", r.method},
              {"n_effective", r.n_effective}};
}

std::vector<double> read_number_lines(const fs::path& path) {
  std::vector<double> values;
  figforge::for_each_jsonl(path, [&](std::size_t line_no, const json& row) {
    if (!row.is_number())
      throw figforge::ValidationError(
          "line " + std::to_string(line_no) + " is not a number",
          {{"path", path.string()}});
    values.push_back(row.get<double>());
  });
  return values;
}

std::vector<std::uint64_t> read_count_lines(const fs::path& path) {
  std::vector<std::uint64_t> values;
  figforge::for_each_jsonl(path, [&](std::size_t line_no, const json& row) {
    if (!row.is_number_integer() ||
        (!row.is_number_unsigned() && row.get<std::int64_t>() < 0))
      throw figforge::ValidationError(
          "line " + std::to_string(line_no) + " is not a non-negative integer",
          {{"path", path.string()}});
    values.push_back(row.get<std::uint64_t>());
  });
  return values;
}

void emit(const json& report, const fs::path& out_path) {
  write_json_file(out_path, report);
  std::cout << report.dump(2) << '\n';
}

struct GenerateArgs {
  std::string config;
  std::string out;
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
  int workers = 1;
};

int run_cli(int argc, char** argv) {
  CLI::App app{"Compound-figure synthesis, curation, and evaluation toolkit"};
  app.require_subcommand(1);

  // generate
  GenerateArgs gen;
  auto* generate = app.add_subcommand(
      "generate", "Render a synthetic compound-figure corpus with manifests");
  generate->add_option("--config", gen.config, "Run configuration JSON")
      ->required();
  auto* gen_out = generate->add_option("--out", gen.out, "Output directory");
  auto* gen_count = generate->add_option("--count", gen.count,
                                         "Number of figures");
  auto* gen_seed = generate->add_option("--seed", gen.seed, "Master seed");
  auto* gen_workers =
      generate->add_option("--workers", gen.workers, "Worker thread count")
          ->envname("FIGFORGE_WORKERS");
  generate->callback([&] {
    RunConfig config = figforge::load_run_config(gen.config);
    if (gen_out->count() > 0) config.generation.out_dir = fs::path(gen.out);
    if (gen_count->count() > 0) config.generation.count = gen.count;
    if (gen_seed->count() > 0) config.generation.master_seed = gen.seed;
    if (gen_workers->count() > 0) config.generation.workers = gen.workers;
    if (!config.pool_index)
      throw figforge::ConfigError("config has no pool_index");
    if (!config.generation.out_dir)
      throw figforge::ConfigError(
          "no output directory (set generation.out_dir or --out)");

    figforge::GenerationConfig run;
    run.layout = config.layout;
    run.mix = config.mix;
    run.out_dir = *config.generation.out_dir;
    run.count = config.generation.count;
    run.master_seed = config.generation.master_seed;
    run.workers = config.generation.workers.value_or(1);
    config.generation.workers = run.workers;

    const figforge::PanelPool pool = figforge::load_pool(*config.pool_index);
    const fs::path manifest = figforge::generate_corpus(pool, run);
    write_effective_config(run.out_dir, config);
    std::cout << json{{"count", run.count},
                      {"manifest", manifest.string()},
                      {"out_dir", run.out_dir.string()}}
                     .dump(2)
              << '\n';
  });

  // export-coco
  std::string coco_manifest;
  std::string coco_out;
  std::string coco_config;
  auto* exportc = app.add_subcommand(
      "export-coco", "Convert a figure manifest to a COCO annotation file");
  exportc->add_option("--manifest", coco_manifest, "Manifest JSONL")
      ->required();
  exportc->add_option("--out", coco_out, "Output COCO JSON path")->required();
  exportc->add_option("--config", coco_config, "Run configuration JSON");
  exportc->callback([&] {
    const auto manifests = figforge::read_manifest(coco_manifest);
    figforge::write_coco(coco_out, manifests);
    write_effective_config(coco_out, load_config_or_default(coco_config));
    std::cout << json{{"images", manifests.size()},
                      {"out", coco_out}}
                     .dump(2)
              << '\n';
  });

  // eval-detect
  std::string ed_manifest;
  std::string ed_dets;
  std::string ed_out;
  std::string ed_config;
  std::vector<double> ed_thresholds;
  double ed_f1_iou = 0.5;
  double ed_score_thr = 0.0;
  auto* evald = app.add_subcommand(
      "eval-detect", "Score detections against manifest ground truth");
  evald->add_option("--manifest", ed_manifest, "Manifest JSONL")->required();
  evald->add_option("--detections", ed_dets, "Detections JSONL")->required();
  evald->add_option("--out", ed_out, "Report JSON path")->required();
  evald->add_option("--config", ed_config, "Run configuration JSON");
  auto* ed_thr_opt = evald
                         ->add_option("--iou-thresholds", ed_thresholds,
                                      "Comma-separated IoU sweep")
                         ->delimiter(',');
  auto* ed_f1_opt = evald->add_option("--f1-iou", ed_f1_iou,
                                      "IoU threshold for F1");
  auto* ed_score_opt = evald->add_option("--score-threshold", ed_score_thr,
                                         "Drop detections below this score");
  evald->callback([&] {
    RunConfig config = load_config_or_default(ed_config);
    if (ed_thr_opt->count() > 0) config.eval.iou_thresholds = ed_thresholds;
    if (ed_f1_opt->count() > 0) config.eval.f1_iou = ed_f1_iou;
    if (ed_score_opt->count() > 0) config.eval.score_threshold = ed_score_thr;
    const auto report = figforge::evaluate_detections(
        figforge::read_detections(ed_dets),
        figforge::read_manifest(ed_manifest), config.eval);
    write_effective_config(ed_out, config);
    emit(figforge::report_to_json(report), ed_out);
  });

  // decompose
  std::string dc_records;
  std::string dc_dets;
  std::string dc_images;
  std::string dc_out;
  std::string dc_config;
  double dc_min_score = 0.5;
  double dc_nms_iou = 0.45;
  auto* decomp = app.add_subcommand(
      "decompose", "Crop compound figures into subfigure-caption pairs");
  decomp->add_option("--records", dc_records, "Compound records JSONL")
      ->required();
  decomp->add_option("--detections", dc_dets, "Detections JSONL")->required();
  decomp->add_option("--images", dc_images, "Directory of parent images")
      ->required();
  decomp->add_option("--out", dc_out, "Output directory")->required();
  decomp->add_option("--config", dc_config, "Run configuration JSON");
  auto* dc_min_opt = decomp->add_option("--min-score", dc_min_score,
                                        "Detection score cutoff");
  auto* dc_nms_opt = decomp->add_option("--nms-iou", dc_nms_iou,
                                        "NMS IoU threshold");
  decomp->callback([&] {
    RunConfig config = load_config_or_default(dc_config);
    if (dc_min_opt->count() > 0) config.filters.min_score = dc_min_score;
    if (dc_nms_opt->count() > 0) config.filters.nms_iou = dc_nms_iou;

    const auto records = figforge::read_records(dc_records);
    std::map<std::string, figforge::DetectionSet> by_id;
    for (auto& set : figforge::read_detections(dc_dets)) {
      if (!by_id.emplace(set.image_id, set).second)
        throw figforge::ValidationError("duplicate detection set",
                                        {{"image_id", set.image_id}});
    }
    std::vector<figforge::SubfigurePair> pairs;
    for (const auto& record : records) {
      figforge::DetectionSet dets;
      dets.image_id = record.figure_id;
      const auto it = by_id.find(record.figure_id);
      if (it != by_id.end()) dets = it->second;
      auto cropped = figforge::decompose(record, dets, dc_images, dc_out,
                                         config.filters.min_score,
                                         config.filters.nms_iou);
      pairs.insert(pairs.end(), cropped.begin(), cropped.end());
    }
    const fs::path pairs_path = fs::path(dc_out) / "pairs.jsonl";
    figforge::write_pairs(pairs_path, pairs);
    write_effective_config(dc_out, config);
    std::cout << json{{"figures", records.size()},
                      {"pairs", pairs.size()},
                      {"out", pairs_path.string()}}
                     .dump(2)
              << '\n';
  });

  // filter
  std::string fl_pairs;
  std::string fl_labels;
  std::string fl_out;
  std::string fl_config;
  double fl_threshold = 0.5;
  auto* filter = app.add_subcommand(
      "filter", "Keep relevant subfigure pairs by metadata and score");
  filter->add_option("--pairs", fl_pairs, "Subfigure pairs JSONL")->required();
  filter->add_option("--labels", fl_labels,
                     "Compound records JSONL providing modality labels");
  filter->add_option("--out", fl_out, "Filtered pairs JSONL path")->required();
  filter->add_option("--config", fl_config, "Run configuration JSON");
  auto* fl_thr_opt = filter->add_option("--score-threshold", fl_threshold,
                                        "Classifier score cutoff");
  filter->callback([&] {
    RunConfig config = load_config_or_default(fl_config);
    if (fl_thr_opt->count() > 0) config.filters.score_threshold = fl_threshold;

    auto pairs = figforge::read_pairs(fl_pairs);
    const std::size_t input_count = pairs.size();
    std::size_t dropped_metadata = 0;
    if (!fl_labels.empty()) {
      const auto kept_records =
          figforge::filter_metadata(figforge::read_records(fl_labels));
      std::set<std::string> kept_ids;
      for (const auto& r : kept_records) kept_ids.insert(r.figure_id);
      std::vector<figforge::SubfigurePair> surviving;
      for (auto& p : pairs) {
        if (kept_ids.count(p.parent_id))
          surviving.push_back(std::move(p));
        else
          ++dropped_metadata;
      }
      pairs = std::move(surviving);
    }
    const auto result =
        figforge::filter_score(pairs, config.filters.score_threshold);
    figforge::write_pairs(fl_out, result.kept);
    const json report{{"input_pairs", input_count},
                      {"kept", result.kept.size()},
                      {"dropped_metadata", dropped_metadata},
                      {"dropped_below_threshold", result.dropped_below},
                      {"dropped_missing_score", result.dropped_missing},
                      {"out", fl_out}};
    write_json_file(fs::path(fl_out).parent_path().empty()
                        ? fs::path("filter_report.json")
                        : fs::path(fl_out).parent_path() /
                              "filter_report.json",
                    report);
    write_effective_config(fl_out, config);
    std::cout << report.dump(2) << '\n';
  });

  // stats
  std::string st_pairs;
  std::string st_tokenizer = "whitespace";
  std::string st_counts;
  std::string st_records;
  std::string st_out;
  std::string st_config;
  auto* stats = app.add_subcommand(
      "stats", "Corpus statistics over subfigure-caption pairs");
  stats->add_option("--pairs", st_pairs, "Subfigure pairs JSONL")->required();
  stats
      ->add_option("--tokenizer", st_tokenizer,
                   "whitespace or external_token_counts")
      ->check(CLI::IsMember({"whitespace", "external_token_counts"}));
  stats->add_option("--token-counts", st_counts,
                    "JSONL of per-pair token counts (external tokenizer)");
  stats->add_option("--records", st_records,
                    "Compound records JSONL for modality shares");
  stats->add_option("--out", st_out, "Stats JSON path")->required();
  stats->add_option("--config", st_config, "Run configuration JSON");
  stats->callback([&] {
    const auto pairs = figforge::read_pairs(st_pairs);
    std::optional<std::vector<std::uint64_t>> counts;
    if (st_tokenizer == "external_token_counts") {
      if (st_counts.empty())
        throw figforge::ConfigError(
            "external_token_counts tokenizer needs --token-counts");
      counts = read_count_lines(st_counts);
    }
    std::vector<figforge::CompoundRecord> records;
    const bool with_records = !st_records.empty();
    if (with_records) records = figforge::read_records(st_records);
    const auto result = figforge::corpus_stats(
        pairs, counts, with_records ? &records : nullptr);
    write_effective_config(st_out, load_config_or_default(st_config));
    emit(figforge::stats_to_json(result), st_out);
  });

  // eval-retrieval
  std::string rt_image;
  std::string rt_text;
  std::string rt_out;
  std::string rt_config;
  std::vector<std::uint32_t> rt_k = {10, 50, 200};
  auto* retrieval = app.add_subcommand(
      "eval-retrieval", "Cross-modal Recall@K in both directions");
  retrieval->add_option("--image-emb", rt_image, "Image embeddings (EMBF)")
      ->required();
  retrieval->add_option("--text-emb", rt_text, "Text embeddings (EMBF)")
      ->required();
  retrieval->add_option("--k", rt_k, "Comma-separated K values")
      ->delimiter(',');
  retrieval->add_option("--out", rt_out, "Report JSON path")->required();
  retrieval->add_option("--config", rt_config, "Run configuration JSON");
  retrieval->callback([&] {
    const auto image = figforge::read_embeddings(rt_image);
    const auto text = figforge::read_embeddings(rt_text);
    json i2t = json::object();
    json t2i = json::object();
    for (std::uint32_t k : rt_k) {
      const std::string key = "recall@" + std::to_string(k);
      i2t[key] = figforge::recall_at_k(image, text, k);
      t2i[key] = figforge::recall_at_k(text, image, k);
    }
    write_effective_config(rt_out, load_config_or_default(rt_config));
    emit(json{{"n", image.n},
              {"image_to_text", std::move(i2t)},
              {"text_to_image", std::move(t2i)}},
         rt_out);
  });

  // eval-zeroshot
  std::string zs_image;
  std::string zs_class;
  std::string zs_labels;
  std::string zs_out;
  std::string zs_config;
  auto* zeroshot = app.add_subcommand(
      "eval-zeroshot", "Macro-F1 of nearest-class-embedding classification");
  zeroshot->add_option("--image-emb", zs_image, "Image embeddings (EMBF)")
      ->required();
  zeroshot->add_option("--class-emb", zs_class, "Class embeddings (EMBF)")
      ->required();
  zeroshot
      ->add_option("--labels", zs_labels,
                   "JSONL of true class indices, one per image row")
      ->required();
  zeroshot->add_option("--out", zs_out, "Report JSON path")->required();
  zeroshot->add_option("--config", zs_config, "Run configuration JSON");
  zeroshot->callback([&] {
    const auto image = figforge::read_embeddings(zs_image);
    const auto classes = figforge::read_embeddings(zs_class);
    std::vector<std::uint32_t> labels;
    for (std::uint64_t v : read_count_lines(zs_labels))
      labels.push_back(static_cast<std::uint32_t>(v));
    const double f1 = figforge::zero_shot_f1(image, classes, labels);
    write_effective_config(zs_out, load_config_or_default(zs_config));
    emit(json{{"macro_f1", f1}, {"images", image.n}, {"classes", classes.n}},
         zs_out);
  });

  // perturb
  std::string pb_images;
  std::string pb_out;
  std::string pb_config;
  std::string pb_kind;
  double pb_magnitude = 0.0;
  std::uint64_t pb_seed = 0;
  auto* perturb = app.add_subcommand(
      "perturb", "Write perturbed copies of an image directory");
  perturb->add_option("--images", pb_images, "Input image directory")
      ->required();
  perturb->add_option("--out", pb_out, "Output directory")->required();
  perturb->add_option("--config", pb_config,
                      "Run configuration JSON (perturbations section)");
  auto* pb_kind_opt = perturb->add_option(
      "--kind", pb_kind, "Single perturbation kind (overrides config list)");
  auto* pb_mag_opt =
      perturb->add_option("--magnitude", pb_magnitude, "Magnitude");
  auto* pb_seed_opt = perturb->add_option(
      "--seed", pb_seed, "Draw per-image magnitudes from this seed");
  perturb->callback([&] {
    RunConfig config = load_config_or_default(pb_config);
    if (pb_kind_opt->count() > 0) {
      figforge::PerturbationSpec spec;
      spec.kind = figforge::perturb_kind_from_string(pb_kind);
      if (pb_mag_opt->count() > 0) spec.magnitude = pb_magnitude;
      if (pb_seed_opt->count() > 0) spec.seed = pb_seed;
      figforge::validate(spec);
      config.perturbations = {spec};
    }
    if (config.perturbations.empty())
      throw figforge::ConfigError(
          "no perturbations configured (config list empty and no --kind)");
    const auto dirs =
        figforge::perturb_directory(pb_images, config.perturbations, pb_out);
    write_effective_config(pb_out, config);
    std::cout << json{{"out", pb_out}, {"subdirs", dirs}}.dump(2) << '\n';
  });

  // robustness
  double rb_clean = 0.0;
  std::vector<std::string> rb_perturbed;
  std::string rb_out;
  std::string rb_config;
  auto* robust = app.add_subcommand(
      "robustness", "Perturbed-over-clean metric ratios");
  robust->add_option("--clean", rb_clean, "Clean metric value")->required();
  robust
      ->add_option("--perturbed", rb_perturbed,
                   "name=value entries, repeatable or comma-separated")
      ->required()
      ->delimiter(',');
  robust->add_option("--out", rb_out, "Report JSON path")->required();
  robust->add_option("--config", rb_config, "Run configuration JSON");
  robust->callback([&] {
    std::map<std::string, double> perturbed;
    for (const std::string& entry : rb_perturbed) {
      const auto eq = entry.find('=');
      if (eq == std::string::npos || eq == 0)
        throw figforge::ConfigError("expected name=value", {{"got", entry}});
      try {
        perturbed[entry.substr(0, eq)] = std::stod(entry.substr(eq + 1));
      } catch (const std::exception&) {
        throw figforge::ConfigError("expected name=value with numeric value",
                                    {{"got", entry}});
      }
    }
    const auto report = figforge::robustness_ratio(rb_clean, perturbed);
    write_effective_config(rb_out, load_config_or_default(rb_config));
    emit(json{{"ratios", report.ratios}, {"average", report.average}}, rb_out);
  });

  // wilcoxon
  std::string wx_a;
  std::string wx_b;
  std::string wx_out;
  std::string wx_config;
  auto* wilcoxon = app.add_subcommand(
      "wilcoxon", "Paired signed-rank test over two number files");
  wilcoxon->add_option("--a", wx_a, "JSONL of numbers, one per line")
      ->required();
  wilcoxon->add_option("--b", wx_b, "JSONL of numbers, one per line")
      ->required();
  wilcoxon->add_option("--out", wx_out, "Report JSON path")->required();
  wilcoxon->add_option("--config", wx_config, "Run configuration JSON");
  wilcoxon->callback([&] {
    const auto result = figforge::wilcoxon_signed_rank(
        read_number_lines(wx_a), read_number_lines(wx_b));
    write_effective_config(wx_out, load_config_or_default(wx_config));
    emit(stat_to_json(result), wx_out);
  });

  // mmd
  std::string mm_x;
  std::string mm_y;
  std::string mm_out;
  std::string mm_config;
  int mm_permutations = 100;
  double mm_sigma = 0.0;
  std::uint64_t mm_seed = 0;
  auto* mmd = app.add_subcommand(
      "mmd", "Kernel two-sample test with permutation p-value");
  mmd->add_option("--x", mm_x, "First sample (EMBF)")->required();
  mmd->add_option("--y", mm_y, "Second sample (EMBF)")->required();
  mmd->add_option("--permutations", mm_permutations, "Permutation count");
  auto* mm_sigma_opt = mmd->add_option("--sigma", mm_sigma,
                                       "RBF bandwidth (default: median "
                                       "heuristic)");
  mmd->add_option("--seed", mm_seed, "Permutation RNG seed");
  mmd->add_option("--out", mm_out, "Report JSON path")->required();
  mmd->add_option("--config", mm_config, "Run configuration JSON");
  mmd->callback([&] {
    const auto x = figforge::read_embeddings(mm_x);
    const auto y = figforge::read_embeddings(mm_y);
    const double sigma = mm_sigma_opt->count() > 0
                             ? mm_sigma
                             : figforge::median_heuristic_sigma(x, y);
    const auto result =
        figforge::mmd_permutation_test(x, y, mm_permutations, sigma, mm_seed);
    json report = stat_to_json(result);
    report["sigma"] = sigma;
    report["permutations"] = mm_permutations;
    write_effective_config(mm_out, load_config_or_default(mm_config));
    emit(report, mm_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << json{{"code", "usage_error"}, {"message", e.what()}}.dump()
              << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const figforge::IoError& e) {
    std::cerr << json{{"code", e.code()},
                      {"message", e.what()},
                      {"context", e.context()}}
                     .dump()
              << '\n';
    return 2;
  } catch (const figforge::Error& e) {
    std::cerr << json{{"code", e.code()},
                      {"message", e.what()},
                      {"context", e.context()}}
                     .dump()
              << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"code", "internal_error"}, {"message", e.what()}}.dump()
              << '\n';
    return 1;
  }
}
