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

#include "routehead/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "routehead/error.hpp"

namespace routehead {

HeadId HeadId::from_flat(std::uint32_t flat, std::uint32_t heads_per_layer) {
  if (heads_per_layer == 0) {
    throw Error(ErrorCategory::kInvalidArgument, "heads_per_layer must be > 0");
  }
  return HeadId{flat / heads_per_layer, flat % heads_per_layer, flat};
}

HeadId HeadId::from_layer_head(std::uint32_t layer, std::uint32_t head,
                               std::uint32_t heads_per_layer) {
  if (head >= heads_per_layer) {
    throw Error(ErrorCategory::kInvalidArgument,
                fmt::format("head {} out of range for {} heads per layer", head,
                            heads_per_layer));
  }
  return HeadId{layer, head, layer * heads_per_layer + head};
}

HeadSet normalize_head_set(HeadSet heads) {
  std::sort(heads.begin(), heads.end());
  if (std::adjacent_find(heads.begin(), heads.end()) != heads.end()) {
    throw Error(ErrorCategory::kInvalidArgument, "duplicate head in head set");
  }
  return heads;
}

void validate(const TokenAttentionRecord& record) {
  const std::size_t cols = record.columns();
  if (record.weights.size() != record.query_tokens * cols) {
    throw Error(ErrorCategory::kFormat,
                fmt::format("attention record for query '{}' head {}: {} weights "
                            "for {} x {} shape",
                            record.query_id, record.head.flat,
                            record.weights.size(), record.query_tokens, cols));
  }
  for (std::size_t z = 0; z < record.query_tokens; ++z) {
    double mass = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double w = record.at(z, j);
      if (!std::isfinite(w) || w < 0.0) {
        throw Error(ErrorCategory::kFormat,
                    fmt::format("attention record for query '{}' head {}: "
                                "weight ({}, {}) is negative or non-finite",
                                record.query_id, record.head.flat, z, j));
      }
      mass += w;
    }
    if (mass > 1.0 + 1e-4) {
      throw Error(ErrorCategory::kFormat,
                  fmt::format("attention record for query '{}' head {}: row {} "
                              "mass {} exceeds 1",
                              record.query_id, record.head.flat, z, mass));
    }
  }
}

double score_doc_under_head(const TokenAttentionRecord& record,
                            std::size_t doc_index) {
  if (record.query_tokens == 0) {
    throw Error(ErrorCategory::kDegenerate, "degenerate query");
  }
  const std::size_t cols = record.columns();
  double total = 0.0;
  bool found = false;
  for (std::size_t j = 0; j < cols; ++j) {
    if (record.column_doc[j] != doc_index) continue;
    found = true;
    for (std::size_t z = 0; z < record.query_tokens; ++z) {
      total += record.at(z, j);
    }
  }
  if (!found) {
    throw Error(ErrorCategory::kNotFound,
                fmt::format("unknown document {}", doc_index));
  }
  return total / static_cast<double>(record.query_tokens);
}

std::optional<std::size_t> HeadScoreMatrix::row_of(const HeadId& head) const {
  auto it = std::find(head_ids.begin(), head_ids.end(), head);
  if (it == head_ids.end()) return std::nullopt;
  return static_cast<std::size_t>(it - head_ids.begin());
}

void validate(const HeadScoreMatrix& matrix) {
  if (matrix.scores.size() != matrix.num_heads() * matrix.num_docs()) {
    throw Error(ErrorCategory::kDimension,
                fmt::format("score matrix for query '{}' has {} entries, "
                            "expected {} x {}",
                            matrix.query_id, matrix.scores.size(),
                            matrix.num_heads(), matrix.num_docs()));
  }
  std::unordered_set<std::uint32_t> heads;
  for (const HeadId& h : matrix.head_ids) {
    if (!heads.insert(h.flat).second) {
      throw Error(ErrorCategory::kFormat,
                  fmt::format("score matrix for query '{}' repeats head {}",
                              matrix.query_id, h.flat));
    }
  }
  std::unordered_set<std::string> docs;
  for (const std::string& d : matrix.doc_ids) {
    if (!docs.insert(d).second) {
      throw Error(ErrorCategory::kFormat,
                  fmt::format("score matrix for query '{}' repeats doc '{}'",
                              matrix.query_id, d));
    }
  }
  for (std::size_t k = 0; k < matrix.scores.size(); ++k) {
    const double s = matrix.scores[k];
    if (!std::isfinite(s) || s < 0.0) {
      throw Error(ErrorCategory::kFormat,
                  fmt::format("score matrix for query '{}': head {} doc '{}' "
                              "score is negative or non-finite",
                              matrix.query_id,
                              matrix.head_ids[k / matrix.num_docs()].flat,
                              matrix.doc_ids[k % matrix.num_docs()]));
    }
  }
}

HeadScoreMatrix build_score_matrix(std::span<const TokenAttentionRecord> records,
                                   std::span<const HeadId> heads,
                                   std::span<const std::string> doc_ids) {
  if (heads.empty()) {
    throw Error(ErrorCategory::kInvalidArgument, "empty head list");
  }
  HeadScoreMatrix matrix;
  matrix.head_ids.assign(heads.begin(), heads.end());
  matrix.doc_ids.assign(doc_ids.begin(), doc_ids.end());
  matrix.scores.reserve(heads.size() * doc_ids.size());

  std::vector<std::string> missing;
  for (const HeadId& h : heads) {
    auto it = std::find_if(records.begin(), records.end(),
                           [&](const TokenAttentionRecord& r) {
                             return r.head == h;
                           });
    if (it == records.end()) missing.push_back(std::to_string(h.flat));
  }
  if (!missing.empty()) {
    throw Error(ErrorCategory::kNotFound,
                fmt::format("missing attention record for head(s) {}",
                            fmt::join(missing, ", ")));
  }

  const std::vector<std::size_t>* span_map = nullptr;
  for (const HeadId& h : heads) {
    const TokenAttentionRecord& record = *std::find_if(
        records.begin(), records.end(),
        [&](const TokenAttentionRecord& r) { return r.head == h; });
    if (span_map == nullptr) {
      span_map = &record.column_doc;
      matrix.query_id = record.query_id;
    } else if (*span_map != record.column_doc) {
      throw Error(ErrorCategory::kFormat,
                  fmt::format("attention record for head {} has a different "
                              "span map",
                              h.flat));
    }
    for (std::size_t i = 0; i < doc_ids.size(); ++i) {
      matrix.scores.push_back(score_doc_under_head(record, i));
    }
  }
  return matrix;
}

std::vector<double> sum_rows(const HeadScoreMatrix& matrix,
                             std::span<const std::size_t> rows) {
  std::vector<double> out(matrix.num_docs(), 0.0);
  for (std::size_t m : rows) {
    const auto r = matrix.row(m);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += r[i];
  }
  return out;
}

AggregatedScores aggregate(const HeadScoreMatrix& matrix,
                           std::span<const HeadId> selected) {
  if (selected.empty()) {
    throw Error(ErrorCategory::kInvalidArgument, "empty head set");
  }
  HeadSet heads = normalize_head_set(HeadSet(selected.begin(), selected.end()));
  std::vector<std::size_t> rows;
  rows.reserve(heads.size());
  for (const HeadId& h : heads) {
    auto row = matrix.row_of(h);
    if (!row) {
      throw Error(ErrorCategory::kNotFound,
                  fmt::format("head {} not present in score matrix for query "
                              "'{}'",
                              h.flat, matrix.query_id));
    }
    rows.push_back(*row);
  }
  std::sort(rows.begin(), rows.end());
  return AggregatedScores{matrix.query_id, matrix.doc_ids,
                          sum_rows(matrix, rows), std::move(heads)};
}

std::vector<std::size_t> rank_indices(std::span<const double> scores,
                                      std::span<const std::string> doc_ids) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return doc_ids[a] < doc_ids[b];
  });
  return order;
}

std::vector<std::string> rank(const AggregatedScores& agg) {
  std::vector<std::string> out;
  out.reserve(agg.doc_ids.size());
  for (std::size_t i : rank_indices(agg.scores, agg.doc_ids)) {
    out.push_back(agg.doc_ids[i]);
  }
  return out;
}

}  // namespace routehead
