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

#include "routehead/artifacts.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "routehead/error.hpp"

namespace routehead {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "binary artifacts assume a little-endian host");

namespace {

[[noreturn]] void format_error(const std::string& where, const std::string& what) {
  throw Error(ErrorCategory::kFormat, fmt::format("{}: {}", where, what));
}

void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::string& out, std::uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_f32(std::string& out, float v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) {
      format_error(fmt::format("{}@{}", source_, pos_), "truncated record");
    }
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      format_error(fmt::format("{}@{}", source_, pos_), "truncated record");
    }
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }
  const std::string& source() const { return source_; }

 private:
  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCategory::kIo, fmt::format("cannot open '{}'", path.string()));
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = fmt::format("{}:{}", path.filename().string(), line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      format_error(where, fmt::format("invalid JSON ({})", e.what()));
    }
    if (!j.is_object()) format_error(where, "expected a JSON object");
    try {
      fn(j, where);
    } catch (const json::exception& e) {
      format_error(where, e.what());
    }
  }
}

std::string require_string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    format_error(where, fmt::format("missing string field '{}'", key));
  }
  return j.at(key).get<std::string>();
}

std::uint32_t require_uint(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number_integer() || j.at(key).get<std::int64_t>() < 0) {
    format_error(where, fmt::format("missing non-negative integer field '{}'", key));
  }
  const auto v = j.at(key).get<std::uint64_t>();
  if (v > UINT32_MAX) format_error(where, fmt::format("field '{}' too large", key));
  return static_cast<std::uint32_t>(v);
}

// Accepts only finite numbers; JSON writers emit NaN/Inf as null.
std::vector<double> require_numbers(const json& j, const char* key,
                                    const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    format_error(where, fmt::format("missing array field '{}'", key));
  }
  std::vector<double> out;
  out.reserve(j.at(key).size());
  std::size_t idx = 0;
  for (const json& v : j.at(key)) {
    if (!v.is_number()) {
      format_error(where, fmt::format("'{}'[{}] is not a finite number", key, idx));
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
      format_error(where, fmt::format("'{}'[{}] is not a finite number", key, idx));
    }
    out.push_back(d);
    ++idx;
  }
  return out;
}

json meta_to_json(const DumpMeta& meta) {
  json j = {{"dataset", meta.dataset},
            {"layers", meta.layers},
            {"heads_per_layer", meta.heads_per_layer},
            {"num_heads", meta.num_heads()},
            {"d_q", meta.d_q}};
  if (!meta.model.empty()) j["model"] = meta.model;
  return j;
}

DumpMeta meta_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) format_error(where, "expected a JSON object");
  DumpMeta meta;
  meta.dataset = require_string(j, "dataset", where);
  if (j.contains("model")) meta.model = require_string(j, "model", where);
  meta.layers = require_uint(j, "layers", where);
  meta.heads_per_layer = require_uint(j, "heads_per_layer", where);
  meta.d_q = require_uint(j, "d_q", where);
  if (meta.layers == 0 || meta.heads_per_layer == 0 || meta.d_q == 0) {
    format_error(where, "layers, heads_per_layer and d_q must be positive");
  }
  if (j.contains("num_heads") && require_uint(j, "num_heads", where) != meta.num_heads()) {
    format_error(where, "num_heads != layers x heads_per_layer");
  }
  return meta;
}

json model_signature(const DumpMeta& meta) {
  return {{"layers", meta.layers},
          {"heads_per_layer", meta.heads_per_layer},
          {"d_q", meta.d_q}};
}

json metric_to_json(const MetricConfig& m) {
  return {{"cutoff", m.cutoff}, {"gain", gain_name(m.gain)}};
}

MetricConfig metric_from_json(const json& j) {
  MetricConfig m;
  m.cutoff = j.at("cutoff").get<int>();
  m.gain = parse_gain(j.at("gain").get<std::string>());
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Files and hashing

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error(ErrorCategory::kIo, "sha256 digest failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCategory::kIo, fmt::format("cannot open '{}'", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorCategory::kIo,
                  fmt::format("cannot write '{}'", tmp.string()));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw Error(ErrorCategory::kIo,
                  fmt::format("short write to '{}'", tmp.string()));
    }
  }
  fs::rename(tmp, path);
}

void write_json_atomic(const fs::path& path, const json& doc) {
  write_file_atomic(path, doc.dump(2) + "\n");
}

json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    format_error(path.string(), fmt::format("invalid JSON ({})", e.what()));
  }
}

// ---------------------------------------------------------------------------
// Packed scores and token attention

std::string encode_packed_scores(std::span<const ScoreRecord> records) {
  std::string out = "RHSC";
  put_u32(out, 1);
  for (const ScoreRecord& r : records) {
    put_u32(out, static_cast<std::uint32_t>(r.query_id.size()));
    out += r.query_id;
    put_u32(out, r.head_flat);
    put_u32(out, static_cast<std::uint32_t>(r.scores.size()));
    for (float s : r.scores) put_f32(out, s);
  }
  return out;
}

std::vector<ScoreRecord> read_packed_scores(const fs::path& path) {
  const std::string bytes = read_file(path);
  ByteReader reader(bytes, path.filename().string());
  if (reader.get_string(4) != "RHSC") format_error(reader.source(), "bad magic");
  if (reader.get<std::uint32_t>() != 1) {
    format_error(reader.source(), "unsupported packed score version");
  }
  std::vector<ScoreRecord> out;
  while (!reader.done()) {
    ScoreRecord r;
    r.query_id = reader.get_string(reader.get<std::uint32_t>());
    r.head_flat = reader.get<std::uint32_t>();
    const auto n = reader.get<std::uint32_t>();
    r.scores.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) r.scores.push_back(reader.get<float>());
    out.push_back(std::move(r));
  }
  return out;
}

TokenAttentionRecord parse_token_attention(const json& j,
                                           std::uint32_t heads_per_layer) {
  const std::string where = "token attention";
  TokenAttentionRecord r;
  r.query_id = require_string(j, "query_id", where);
  r.head = HeadId::from_flat(require_uint(j, "head_flat", where), heads_per_layer);
  r.query_tokens = require_uint(j, "query_tokens", where);
  if (!j.contains("column_doc") || !j.at("column_doc").is_array()) {
    format_error(where, "missing array field 'column_doc'");
  }
  for (const json& c : j.at("column_doc")) {
    if (!c.is_number_integer() || c.get<std::int64_t>() < 0) format_error(where, "column_doc entries must be doc indices");
    r.column_doc.push_back(c.get<std::size_t>());
  }
  if (!j.contains("weights") || !j.at("weights").is_array() ||
      j.at("weights").size() != r.query_tokens) {
    format_error(where, "'weights' must have one row per query token");
  }
  for (const json& row : j.at("weights")) {
    if (!row.is_array() || row.size() != r.column_doc.size()) {
      format_error(where, "attention row length differs from column_doc");
    }
    for (const json& w : row) {
      if (!w.is_number()) format_error(where, "attention weight is not a number");
      r.weights.push_back(w.get<double>());
    }
  }
  validate(r);
  return r;
}

std::vector<TokenAttentionRecord> read_token_attention(const fs::path& path,
                                                       std::uint32_t heads_per_layer) {
  std::vector<TokenAttentionRecord> out;
  for_each_jsonl(path, [&](const json& j, const std::string& where) {
    try {
      out.push_back(parse_token_attention(j, heads_per_layer));
    } catch (const Error& e) {
      format_error(where, e.what());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Manifest and dataset

json Manifest::to_json() const {
  json queries_json = json::array();
  for (const ManifestQuery& q : queries) {
    queries_json.push_back({{"query_id", q.query_id},
                            {"doc_ids", q.doc_ids},
                            {"scores_offset", q.scores_offset},
                            {"embedding_offset", q.embedding_offset}});
  }
  json j = {{"format", "routehead.manifest"},
            {"version", 1},
            {"meta", meta_to_json(meta)},
            {"scores_file", "scores.bin"},
            {"scores_sha256", scores_sha256},
            {"embeddings_file", "embeddings.bin"},
            {"embeddings_sha256", embeddings_sha256},
            {"queries", queries_json}};
  if (!content_hash.empty()) j["content_hash"] = content_hash;
  return j;
}

Manifest Manifest::from_json(const json& j) {
  try {
    if (j.at("format") != "routehead.manifest") {
      format_error("manifest", "not a routehead manifest");
    }
    Manifest m;
    m.meta = meta_from_json(j.at("meta"), "manifest meta");
    m.scores_sha256 = j.at("scores_sha256").get<std::string>();
    m.embeddings_sha256 = j.at("embeddings_sha256").get<std::string>();
    m.content_hash = j.value("content_hash", "");
    for (const json& q : j.at("queries")) {
      m.queries.push_back({q.at("query_id").get<std::string>(),
                           q.at("doc_ids").get<std::vector<std::string>>(),
                           q.at("scores_offset").get<std::uint64_t>(),
                           q.at("embedding_offset").get<std::uint64_t>()});
    }
    return m;
  } catch (const json::exception& e) {
    format_error("manifest", e.what());
  }
}

std::string Manifest::compute_content_hash() const {
  Manifest copy = *this;
  copy.content_hash.clear();
  return sha256_hex(copy.to_json().dump());
}

std::vector<HeadId> Dataset::all_heads() const {
  std::vector<HeadId> heads;
  for (std::uint32_t f = 0; f < manifest.meta.num_heads(); ++f) {
    heads.push_back(HeadId::from_flat(f, manifest.meta.heads_per_layer));
  }
  return heads;
}

const HeadScoreMatrix* Dataset::matrix_for(const std::string& query_id) const {
  for (const HeadScoreMatrix& m : matrices) {
    if (m.query_id == query_id) return &m;
  }
  return nullptr;
}

const QueryEmbedding* Dataset::embedding_for(const std::string& query_id) const {
  for (const QueryEmbedding& e : embeddings) {
    if (e.query_id == query_id) return &e;
  }
  return nullptr;
}

Manifest ingest_dump(const fs::path& dump_dir, const fs::path& out_dir,
                     ScoreFormat format) {
  Manifest manifest;
  manifest.meta = meta_from_json(read_json(dump_dir / "meta.json"), "meta.json");
  const DumpMeta& meta = manifest.meta;
  const std::uint32_t num_heads = meta.num_heads();

  std::unordered_map<std::string, std::size_t> query_index;
  for_each_jsonl(dump_dir / "docs.jsonl", [&](const json& j, const std::string& where) {
    ManifestQuery q;
    q.query_id = require_string(j, "query_id", where);
    if (!j.contains("doc_ids") || !j.at("doc_ids").is_array()) {
      format_error(where, "missing array field 'doc_ids'");
    }
    q.doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
    if (q.doc_ids.empty()) format_error(where, "empty candidate list");
    std::unordered_set<std::string> seen;
    for (const std::string& d : q.doc_ids) {
      if (!seen.insert(d).second) format_error(where, fmt::format("duplicate doc id '{}'", d));
    }
    if (!query_index.emplace(q.query_id, manifest.queries.size()).second) {
      format_error(where, fmt::format("duplicate query id '{}'", q.query_id));
    }
    manifest.queries.push_back(std::move(q));
  });
  if (manifest.queries.empty()) format_error("docs.jsonl", "no queries");

  // scores[q][head] -> N floats
  std::vector<std::vector<std::vector<float>>> scores(
      manifest.queries.size(), std::vector<std::vector<float>>(num_heads));
  auto accept_scores = [&](const std::string& query_id, std::uint32_t head,
                           std::vector<float> values, const std::string& where) {
    auto it = query_index.find(query_id);
    if (it == query_index.end()) {
      format_error(where, fmt::format("unknown query id '{}'", query_id));
    }
    if (head >= num_heads) {
      format_error(where, fmt::format("head_flat {} >= M={}", head, num_heads));
    }
    const ManifestQuery& q = manifest.queries[it->second];
    if (values.size() != q.doc_ids.size()) {
      format_error(where, fmt::format("{} scores for {} candidate docs",
                                      values.size(), q.doc_ids.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i]) || values[i] < 0.0f) {
        format_error(where, fmt::format("score for doc '{}' is negative or "
                                        "non-finite",
                                        q.doc_ids[i]));
      }
    }
    auto& slot = scores[it->second][head];
    if (!slot.empty()) {
      format_error(where, fmt::format("duplicate record for query '{}' head {}",
                                      query_id, head));
    }
    slot = std::move(values);
  };

  if (format == ScoreFormat::kJsonl) {
    for_each_jsonl(dump_dir / "scores.jsonl", [&](const json& j, const std::string& where) {
      const auto values = require_numbers(j, "scores", where);
      accept_scores(require_string(j, "query_id", where),
                    require_uint(j, "head_flat", where),
                    std::vector<float>(values.begin(), values.end()), where);
    });
  } else {
    std::size_t index = 0;
    for (ScoreRecord& r : read_packed_scores(dump_dir / "scores.bin")) {
      accept_scores(r.query_id, r.head_flat, std::move(r.scores),
                    fmt::format("scores.bin record {}", index++));
    }
  }
  for (std::size_t q = 0; q < scores.size(); ++q) {
    for (std::uint32_t h = 0; h < num_heads; ++h) {
      if (scores[q][h].empty()) {
        format_error("scores", fmt::format("no record for query '{}' head {}",
                                           manifest.queries[q].query_id, h));
      }
    }
  }

  std::vector<std::vector<float>> embeddings(manifest.queries.size());
  for_each_jsonl(dump_dir / "embeddings.jsonl", [&](const json& j, const std::string& where) {
    const std::string query_id = require_string(j, "query_id", where);
    auto it = query_index.find(query_id);
    if (it == query_index.end()) {
      format_error(where, fmt::format("unknown query id '{}'", query_id));
    }
    const auto values = require_numbers(j, "embedding", where);
    if (values.size() != meta.d_q) {
      format_error(where, fmt::format("embedding has {} dims, d_q={}",
                                      values.size(), meta.d_q));
    }
    if (!embeddings[it->second].empty()) {
      format_error(where, fmt::format("duplicate embedding for '{}'", query_id));
    }
    embeddings[it->second].assign(values.begin(), values.end());
  });
  for (std::size_t q = 0; q < embeddings.size(); ++q) {
    if (embeddings[q].empty()) {
      format_error("embeddings.jsonl", fmt::format("no embedding for query '{}'",
                                                   manifest.queries[q].query_id));
    }
  }

  // Token-level dumps, when present, must reproduce the exported scores.
  const fs::path token_path = dump_dir / "token_attention.jsonl";
  if (fs::exists(token_path)) {
    for (const TokenAttentionRecord& r :
         read_token_attention(token_path, meta.heads_per_layer)) {
      const std::string where = fmt::format("token_attention.jsonl query '{}' head {}",
                                            r.query_id, r.head.flat);
      auto it = query_index.find(r.query_id);
      if (it == query_index.end() || r.head.flat >= num_heads) {
        format_error(where, "unknown query or head");
      }
      const auto& stored = scores[it->second][r.head.flat];
      for (std::size_t doc : r.column_doc) {
        if (doc >= stored.size()) format_error(where, "column_doc out of range");
      }
      for (std::size_t i = 0; i < stored.size(); ++i) {
        if (std::find(r.column_doc.begin(), r.column_doc.end(), i) == r.column_doc.end()) {
          continue;
        }
        const double recomputed = score_doc_under_head(r, i);
        if (std::abs(recomputed - static_cast<double>(stored[i])) > 1e-4) {
          format_error(where, fmt::format("doc {} exported score {} disagrees with "
                                          "token-level recomputation {}",
                                          i, stored[i], recomputed));
        }
      }
    }
  }

  std::string scores_bytes;
  std::string embedding_bytes;
  for (std::size_t q = 0; q < manifest.queries.size(); ++q) {
    manifest.queries[q].scores_offset = scores_bytes.size();
    for (std::uint32_t h = 0; h < num_heads; ++h) {
      for (float s : scores[q][h]) put_f32(scores_bytes, s);
    }
    manifest.queries[q].embedding_offset = embedding_bytes.size();
    for (float v : embeddings[q]) put_f32(embedding_bytes, v);
  }
  manifest.scores_sha256 = sha256_hex(scores_bytes);
  manifest.embeddings_sha256 = sha256_hex(embedding_bytes);
  manifest.content_hash = manifest.compute_content_hash();

  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "scores.bin", scores_bytes);
  write_file_atomic(out_dir / "embeddings.bin", embedding_bytes);
  write_json_atomic(out_dir / "manifest.json", manifest.to_json());
  return manifest;
}

Dataset load_dataset(const fs::path& manifest_or_dir) {
  const fs::path manifest_path = fs::is_directory(manifest_or_dir)
                                     ? manifest_or_dir / "manifest.json"
                                     : manifest_or_dir;
  Dataset ds;
  ds.dir = manifest_path.parent_path();
  ds.manifest = Manifest::from_json(read_json(manifest_path));
  const Manifest& m = ds.manifest;
  if (m.compute_content_hash() != m.content_hash) {
    throw Error(ErrorCategory::kLineage,
                fmt::format("{}: content hash mismatch", manifest_path.string()));
  }
  const std::string scores_bytes = read_file(ds.dir / "scores.bin");
  const std::string embedding_bytes = read_file(ds.dir / "embeddings.bin");
  if (sha256_hex(scores_bytes) != m.scores_sha256) {
    throw Error(ErrorCategory::kLineage, "scores.bin does not match manifest hash");
  }
  if (sha256_hex(embedding_bytes) != m.embeddings_sha256) {
    throw Error(ErrorCategory::kLineage, "embeddings.bin does not match manifest hash");
  }

  const std::uint32_t num_heads = m.meta.num_heads();
  const std::vector<HeadId> heads = ds.all_heads();
  for (const ManifestQuery& q : m.queries) {
    const std::size_t n = q.doc_ids.size();
    const std::size_t need = std::size_t{num_heads} * n * sizeof(float);
    if (q.scores_offset + need > scores_bytes.size() ||
        q.embedding_offset + m.meta.d_q * sizeof(float) > embedding_bytes.size()) {
      format_error(manifest_path.string(),
                   fmt::format("offsets for query '{}' out of range", q.query_id));
    }
    HeadScoreMatrix matrix;
    matrix.query_id = q.query_id;
    matrix.head_ids = heads;
    matrix.doc_ids = q.doc_ids;
    matrix.scores.resize(std::size_t{num_heads} * n);
    const char* src = scores_bytes.data() + q.scores_offset;
    for (std::size_t k = 0; k < matrix.scores.size(); ++k) {
      float v;
      std::memcpy(&v, src + k * sizeof(float), sizeof v);
      matrix.scores[k] = v;
    }
    ds.matrices.push_back(std::move(matrix));

    QueryEmbedding e{q.query_id, std::vector<double>(m.meta.d_q)};
    const char* esrc = embedding_bytes.data() + q.embedding_offset;
    for (std::size_t k = 0; k < m.meta.d_q; ++k) {
      float v;
      std::memcpy(&v, esrc + k * sizeof(float), sizeof v);
      e.values[k] = v;
    }
    ds.embeddings.push_back(std::move(e));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Pool

json pool_to_json(const PoolArtifact& a) {
  json heads = json::array();
  for (std::size_t p = 0; p < a.pool.size(); ++p) {
    const HeadId& h = a.pool.heads[p];
    heads.push_back({{"flat", h.flat},
                     {"layer", h.layer},
                     {"head", h.head},
                     {"solo_score", a.pool.solo_scores[p]}});
  }
  return {{"format", "routehead.pool"},
          {"version", 1},
          {"k", a.pool.size()},
          {"metric", metric_to_json(a.metric)},
          {"model", model_signature(a.model)},
          {"inputs", {{"manifest", a.manifest_hash}, {"qrels", a.qrels_hash}}},
          {"heads", heads}};
}

PoolArtifact pool_from_json(const json& j) {
  try {
    if (j.at("format") != "routehead.pool") format_error("pool", "not a pool artifact");
    PoolArtifact a;
    a.metric = metric_from_json(j.at("metric"));
    a.model.layers = j.at("model").at("layers").get<std::uint32_t>();
    a.model.heads_per_layer = j.at("model").at("heads_per_layer").get<std::uint32_t>();
    a.model.d_q = j.at("model").at("d_q").get<std::uint32_t>();
    a.manifest_hash = j.at("inputs").at("manifest").get<std::string>();
    a.qrels_hash = j.at("inputs").at("qrels").get<std::string>();
    a.pool.provenance = a.manifest_hash;
    for (const json& h : j.at("heads")) {
      a.pool.heads.push_back(HeadId::from_flat(h.at("flat").get<std::uint32_t>(),
                                               a.model.heads_per_layer));
      a.pool.solo_scores.push_back(h.at("solo_score").get<double>());
    }
    if (a.pool.size() != j.at("k").get<std::size_t>()) {
      format_error("pool", "head count differs from k");
    }
    return a;
  } catch (const json::exception& e) {
    format_error("pool", e.what());
  }
}

PoolArtifact read_pool(const fs::path& path) { return pool_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// Labels

namespace {

json trace_to_json(const std::vector<SearchEvent>& trace) {
  json out = json::array();
  for (const SearchEvent& e : trace) {
    json ev = {{"kind", e.kind == SearchEvent::Kind::kAdd ? "add" : "swap"},
               {"added", e.added.flat},
               {"objective", e.objective}};
    if (e.removed) ev["removed"] = e.removed->flat;
    out.push_back(ev);
  }
  return out;
}

HeadId pool_head(const std::vector<HeadId>& pool_heads, std::uint32_t flat) {
  for (const HeadId& h : pool_heads) {
    if (h.flat == flat) return h;
  }
  format_error("labels", fmt::format("trace references head {} outside the pool", flat));
}

std::vector<SearchEvent> trace_from_json(const json& j,
                                         const std::vector<HeadId>& pool_heads) {
  std::vector<SearchEvent> out;
  for (const json& ev : j) {
    SearchEvent e;
    e.kind = ev.at("kind") == "add" ? SearchEvent::Kind::kAdd : SearchEvent::Kind::kSwap;
    e.added = pool_head(pool_heads, ev.at("added").get<std::uint32_t>());
    if (ev.contains("removed")) {
      e.removed = pool_head(pool_heads, ev.at("removed").get<std::uint32_t>());
    }
    e.objective = ev.at("objective").get<double>();
    out.push_back(e);
  }
  return out;
}

}  // namespace

json labels_to_json(const LabelsArtifact& a) {
  json pool_heads = json::array();
  for (const HeadId& h : a.pool_heads) {
    pool_heads.push_back({{"flat", h.flat}, {"layer", h.layer}, {"head", h.head}});
  }
  json labels = json::array();
  for (const PseudoLabel& l : a.labels) {
    json row = {{"query_id", l.query_id},
                {"y", l.y},
                {"achieved_ndcg", l.achieved_ndcg},
                {"forward_ndcg", l.forward_ndcg},
                {"swap_cap_hit", l.swap_cap_hit}};
    if (a.with_traces) row["trace"] = trace_to_json(l.trace);
    labels.push_back(row);
  }
  json failures = json::array();
  for (const LabelResult& f : a.failures) {
    failures.push_back({{"query_id", f.query_id}, {"error", f.error}});
  }
  return {{"format", "routehead.labels"},
          {"version", 1},
          {"config",
           {{"budget", a.config.budget},
            {"epsilon", a.config.epsilon},
            {"max_swap_iters", a.config.max_swap_iters},
            {"metric", metric_to_json(a.config.metric)}}},
          {"inputs",
           {{"manifest", a.manifest_hash}, {"qrels", a.qrels_hash}, {"pool", a.pool_hash}}},
          {"pool_heads", pool_heads},
          {"labels", labels},
          {"failures", failures},
          {"warnings", a.warnings}};
}

LabelsArtifact labels_from_json(const json& j) {
  try {
    if (j.at("format") != "routehead.labels") format_error("labels", "not a labels artifact");
    LabelsArtifact a;
    const json& c = j.at("config");
    a.config.budget = c.at("budget").get<std::size_t>();
    a.config.epsilon = c.at("epsilon").get<double>();
    a.config.max_swap_iters = c.at("max_swap_iters").get<std::size_t>();
    a.config.metric = metric_from_json(c.at("metric"));
    a.manifest_hash = j.at("inputs").at("manifest").get<std::string>();
    a.qrels_hash = j.at("inputs").at("qrels").get<std::string>();
    a.pool_hash = j.at("inputs").at("pool").get<std::string>();
    for (const json& h : j.at("pool_heads")) {
      a.pool_heads.push_back({h.at("layer").get<std::uint32_t>(),
                              h.at("head").get<std::uint32_t>(),
                              h.at("flat").get<std::uint32_t>()});
    }
    for (const json& row : j.at("labels")) {
      PseudoLabel l;
      l.query_id = row.at("query_id").get<std::string>();
      l.y = row.at("y").get<std::vector<std::uint8_t>>();
      l.achieved_ndcg = row.at("achieved_ndcg").get<double>();
      l.forward_ndcg = row.at("forward_ndcg").get<double>();
      l.swap_cap_hit = row.at("swap_cap_hit").get<bool>();
      if (l.y.size() != a.pool_heads.size()) {
        format_error("labels", fmt::format("label for '{}' has {} entries, pool has {}",
                                           l.query_id, l.y.size(), a.pool_heads.size()));
      }
      if (row.contains("trace")) {
        a.with_traces = true;
        l.trace = trace_from_json(row.at("trace"), a.pool_heads);
      }
      a.labels.push_back(std::move(l));
    }
    for (const json& f : j.at("failures")) {
      LabelResult r;
      r.query_id = f.at("query_id").get<std::string>();
      r.error = f.at("error").get<std::string>();
      a.failures.push_back(std::move(r));
    }
    a.warnings = j.at("warnings").get<std::vector<std::string>>();
    return a;
  } catch (const json::exception& e) {
    format_error("labels", e.what());
  }
}

LabelsArtifact read_labels(const fs::path& path) {
  return labels_from_json(read_json(path));
}

// ---------------------------------------------------------------------------
// Router weights

std::string encode_router(const RouterParams& params) {
  params.check();
  std::string out = "RHRT";
  put_u32(out, kRouterFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(params.d_q));
  put_u32(out, static_cast<std::uint32_t>(params.d_h));
  put_u32(out, static_cast<std::uint32_t>(params.num_heads));
  put_u64(out, params.seed);
  for (const auto* block : {&params.head_embeddings, &params.projection,
                            &params.bias, &params.output}) {
    for (double v : *block) put_f32(out, static_cast<float>(v));
  }
  return out;
}

RouterParams decode_router(std::string_view bytes) {
  ByteReader reader(bytes, "router weights");
  if (reader.get_string(4) != "RHRT") format_error("router weights", "bad magic");
  if (reader.get<std::uint32_t>() != kRouterFormatVersion) {
    format_error("router weights", "unsupported version");
  }
  RouterParams params;
  params.d_q = reader.get<std::uint32_t>();
  params.d_h = reader.get<std::uint32_t>();
  params.num_heads = reader.get<std::uint32_t>();
  params.seed = reader.get<std::uint64_t>();
  params.head_embeddings.resize(params.num_heads * params.d_h);
  params.projection.resize(params.d_q * params.d_h);
  params.bias.resize(params.d_h);
  params.output.resize(params.d_h);
  for (auto* block : {&params.head_embeddings, &params.projection, &params.bias,
                      &params.output}) {
    for (double& v : *block) {
      const float f = reader.get<float>();
      if (!std::isfinite(f)) format_error("router weights", "non-finite weight");
      v = f;
    }
  }
  if (!reader.done()) format_error("router weights", "trailing bytes");
  return params;
}

RouterParams read_router(const fs::path& path) { return decode_router(read_file(path)); }

fs::path router_sidecar_path(const fs::path& weights) {
  fs::path p = weights;
  p += ".json";
  return p;
}

// ---------------------------------------------------------------------------
// Runs

const RunQuery* RunFile::find(const std::string& query_id) const {
  for (const RunQuery& q : queries) {
    if (q.query_id == query_id) return &q;
  }
  return nullptr;
}

RunFile parse_trec_run(std::istream& in, const std::string& source) {
  struct Entry {
    std::string doc;
    long rank;
    double score;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Entry>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string qid, q0, doc, rank_text, score_text, tag, extra;
    if (!(fields >> qid)) continue;
    if (!(fields >> q0 >> doc >> rank_text >> score_text >> tag) || (fields >> extra)) {
      format_error(fmt::format("{}:{}", source, line_no),
                   "expected 'qid Q0 doc rank score tag'");
    }
    Entry e{doc, 0, 0.0};
    try {
      e.rank = std::stol(rank_text);
      e.score = std::stod(score_text);
    } catch (const std::exception&) {
      format_error(fmt::format("{}:{}", source, line_no), "bad rank or score");
    }
    if (!std::isfinite(e.score)) {
      format_error(fmt::format("{}:{}", source, line_no), "non-finite score");
    }
    auto [it, inserted] = entries.try_emplace(qid);
    if (inserted) order.push_back(qid);
    for (const Entry& prev : it->second) {
      if (prev.doc == doc) {
        format_error(fmt::format("{}:{}", source, line_no),
                     fmt::format("duplicate doc '{}' for query '{}'", doc, qid));
      }
    }
    it->second.push_back(std::move(e));
  }
  RunFile run;
  for (const std::string& qid : order) {
    auto& list = entries[qid];
    std::stable_sort(list.begin(), list.end(), [](const Entry& a, const Entry& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.rank < b.rank;
    });
    RunQuery q{qid, {}};
    for (const Entry& e : list) q.docs.emplace_back(e.doc, e.score);
    run.queries.push_back(std::move(q));
  }
  return run;
}

RunFile read_trec_run(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCategory::kIo, fmt::format("cannot open run '{}'", path.string()));
  }
  return parse_trec_run(in, path.string());
}

std::string format_trec_run(const RunFile& run, const std::string& tag) {
  std::string out;
  for (const RunQuery& q : run.queries) {
    std::size_t rank = 1;
    for (const auto& [doc, score] : q.docs) {
      out += fmt::format("{} Q0 {} {} {:.9g} {}\n", q.query_id, doc, rank++, score, tag);
    }
  }
  return out;
}

}  // namespace routehead
