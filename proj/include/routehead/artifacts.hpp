// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// On-disk formats. Every artifact is written atomically and records the
// content hashes of the inputs it was derived from.
//
// Extractor dump directory (input to ingest):
//   meta.json              {"dataset", "layers", "heads_per_layer", "d_q", ["model"]}
//   docs.jsonl             {"query_id", "doc_ids": [...]}             one per query
//   scores.jsonl           {"query_id", "head_flat", "scores": [...]} one per (query, head)
//   scores.bin             packed alternative to scores.jsonl (see read_packed_scores)
//   embeddings.jsonl       {"query_id", "embedding": [...]}            one per query
//   token_attention.jsonl  optional {"query_id", "head_flat", "query_tokens",
//                                    "weights": [[...]], "column_doc": [...]}
//
// Ingested dataset directory:
//   manifest.json, scores.bin (per query M x N float32 LE), embeddings.bin
//   (per query d_q float32 LE).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "routehead/label_search.hpp"
#include "routehead/pool.hpp"
#include "routehead/relevance.hpp"
#include "routehead/router.hpp"

namespace routehead {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

std::string read_file(const fs::path& path);
/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const fs::path& path, std::string_view bytes);
void write_json_atomic(const fs::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const fs::path& path);

// ---------------------------------------------------------------------------
// Dump and dataset

enum class ScoreFormat { kJsonl, kPacked };

struct DumpMeta {
  std::string dataset;
  std::string model;
  std::uint32_t layers = 0;
  std::uint32_t heads_per_layer = 0;
  std::uint32_t d_q = 0;

  std::uint32_t num_heads() const { return layers * heads_per_layer; }
};

struct ScoreRecord {
  std::string query_id;
  std::uint32_t head_flat = 0;
  std::vector<float> scores;
};

/// Packed score records: magic "RHSC", u32 version, then per record
/// u32 id length, id bytes, u32 head_flat, u32 count, count float32 LE.
std::string encode_packed_scores(std::span<const ScoreRecord> records);
std::vector<ScoreRecord> read_packed_scores(const fs::path& path);

TokenAttentionRecord parse_token_attention(const nlohmann::json& j,
                                           std::uint32_t heads_per_layer);
std::vector<TokenAttentionRecord> read_token_attention(const fs::path& path,
                                                       std::uint32_t heads_per_layer);

struct ManifestQuery {
  std::string query_id;
  std::vector<std::string> doc_ids;
  std::uint64_t scores_offset = 0;
  std::uint64_t embedding_offset = 0;
};

struct Manifest {
  DumpMeta meta;
  std::vector<ManifestQuery> queries;
  std::string scores_sha256;
  std::string embeddings_sha256;
  std::string content_hash;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
  /// Hash over everything except `content_hash` itself.
  std::string compute_content_hash() const;
};

struct Dataset {
  fs::path dir;
  Manifest manifest;
  std::vector<HeadScoreMatrix> matrices;      // all M heads, flat order
  std::vector<QueryEmbedding> embeddings;

  std::vector<HeadId> all_heads() const;
  const HeadScoreMatrix* matrix_for(const std::string& query_id) const;
  const QueryEmbedding* embedding_for(const std::string& query_id) const;
};

/// Validates a dump directory and writes the ingested dataset into `out_dir`.
Manifest ingest_dump(const fs::path& dump_dir, const fs::path& out_dir,
                     ScoreFormat format);

/// Loads `manifest.json` (or the manifest path itself) and verifies file hashes.
Dataset load_dataset(const fs::path& manifest_or_dir);

// ---------------------------------------------------------------------------
// Pool, labels, router weights

struct PoolArtifact {
  HeadPool pool;
  MetricConfig metric;
  DumpMeta model;            // layers / heads_per_layer / d_q the pool was built for
  std::string manifest_hash;
  std::string qrels_hash;
};

nlohmann::json pool_to_json(const PoolArtifact& artifact);
PoolArtifact pool_from_json(const nlohmann::json& j);
PoolArtifact read_pool(const fs::path& path);

struct LabelsArtifact {
  SearchConfig config;
  std::vector<HeadId> pool_heads;
  std::vector<PseudoLabel> labels;
  std::vector<LabelResult> failures;
  std::vector<std::string> warnings;
  std::string manifest_hash;
  std::string qrels_hash;
  std::string pool_hash;
  bool with_traces = false;
};

nlohmann::json labels_to_json(const LabelsArtifact& artifact);
LabelsArtifact labels_from_json(const nlohmann::json& j);
LabelsArtifact read_labels(const fs::path& path);

inline constexpr std::uint32_t kRouterFormatVersion = 1;

/// "RHRT", u32 version, u32 d_q, u32 d_h, u32 K, u64 seed, then float32 LE
/// E (K x d_h), W1 (d_q x d_h), b (d_h), W2 (d_h).
std::string encode_router(const RouterParams& params);
RouterParams decode_router(std::string_view bytes);
RouterParams read_router(const fs::path& path);

/// Sidecar written next to the weights as `<weights>.json`.
fs::path router_sidecar_path(const fs::path& weights);

// ---------------------------------------------------------------------------
// TREC run files

struct RunQuery {
  std::string query_id;
  std::vector<std::pair<std::string, double>> docs;  // score descending
};

struct RunFile {
  std::vector<RunQuery> queries;
  const RunQuery* find(const std::string& query_id) const;
};

/// `qid Q0 doc rank score tag`. Per query, entries are ordered by score
/// descending, then by rank column ascending.
RunFile parse_trec_run(std::istream& in, const std::string& source = "<run>");
RunFile read_trec_run(const fs::path& path);
std::string format_trec_run(const RunFile& run, const std::string& tag);

}  // namespace routehead
