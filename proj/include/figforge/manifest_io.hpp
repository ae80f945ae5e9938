#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "figforge/types.hpp"

namespace figforge {

// JSONL readers/writers. One JSON object per line, UTF-8, no BOM. Writers
// emit keys in sorted order so identical inputs give identical bytes.
// Readers enforce the exact key set per row and cite the 1-based line
// number in every diagnostic.

// Streams one parsed value per line to fn(line_no, value); malformed JSON
// raises a ValidationError citing the line.
void for_each_jsonl(
    const std::filesystem::path& path,
    const std::function<void(std::size_t, const nlohmann::json&)>& fn);

// One row per line via dump() (sorted keys), trailing newline after each.
void write_jsonl(const std::filesystem::path& path,
                 const std::vector<nlohmann::json>& rows);

// Rejects objects whose key set differs from `keys`, citing `where`.
void require_exact_keys(const nlohmann::json& obj,
                        const std::vector<const char*>& keys,
                        const std::string& where);

nlohmann::json manifest_to_json(const FigureManifest& m);
FigureManifest manifest_from_json(const nlohmann::json& j);

std::vector<FigureManifest> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<FigureManifest>& manifests);

std::vector<DetectionSet> read_detections(const std::filesystem::path& path);
void write_detections(const std::filesystem::path& path,
                      const std::vector<DetectionSet>& sets);

std::vector<CompoundRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path,
                   const std::vector<CompoundRecord>& records);

std::vector<SubfigurePair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path,
                 const std::vector<SubfigurePair>& pairs);

// COCO-style annotation document: one category {id:1, name:"subfigure"},
// image and annotation ids dense from 1 in input order, bbox as [x,y,w,h].
// Duplicate figure_id -> ValidationError.
nlohmann::json export_coco(const std::vector<FigureManifest>& manifests);
void write_coco(const std::filesystem::path& path,
                const std::vector<FigureManifest>& manifests);

// EMBF binary embedding format:
//   bytes 0..7   magic "EMBF0001"
//   bytes 8..11  u32 little-endian n (rows)
//   bytes 12..15 u32 little-endian d (columns)
//   bytes 16..   n*d IEEE-754 f32 little-endian, row-major
// Row ids live in the sidecar "<path>.ids.jsonl", one JSON string per line.
// write_embeddings rejects non-finite values; read_embeddings rejects, with
// distinct positional diagnostics: magic mismatch, file size disagreeing
// with the header, non-finite payload values, and sidecar/row-count skew.
void write_embeddings(const std::filesystem::path& path,
                      const EmbeddingMatrix& m);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

}  // namespace figforge
