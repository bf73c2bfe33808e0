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

// Attention-derived document relevance: per-head scores from token-level
// attention, head-set aggregation, and the ranking they induce.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace routehead {

/// One attention head, addressed both by (layer, head) and by its flat index
/// `layer * heads_per_layer + head`. Ordering and equality use the flat index.
struct HeadId {
  std::uint32_t layer = 0;
  std::uint32_t head = 0;
  std::uint32_t flat = 0;

  static HeadId from_flat(std::uint32_t flat, std::uint32_t heads_per_layer);
  static HeadId from_layer_head(std::uint32_t layer, std::uint32_t head,
                                std::uint32_t heads_per_layer);

  friend bool operator==(const HeadId& a, const HeadId& b) {
    return a.flat == b.flat;
  }
  friend std::strong_ordering operator<=>(const HeadId& a, const HeadId& b) {
    return a.flat <=> b.flat;
  }
};

using HeadSet = std::vector<HeadId>;

/// Sorts by flat index and rejects duplicates.
HeadSet normalize_head_set(HeadSet heads);

/// Raw attention from the query tokens of one query to the document tokens of
/// its candidates, for a single head. `weights` is row-major with one row per
/// query token and one column per document token; `column_doc[j]` is the
/// candidate index owning column j.
struct TokenAttentionRecord {
  std::string query_id;
  HeadId head;
  std::size_t query_tokens = 0;
  std::vector<double> weights;
  std::vector<std::size_t> column_doc;

  std::size_t columns() const { return column_doc.size(); }
  double at(std::size_t z, std::size_t j) const {
    return weights[z * columns() + j];
  }
};

/// Checks shape, non-negativity and the per-row mass bound (<= 1 + 1e-4).
/// Throws Error(kFormat) naming the violated invariant.
void validate(const TokenAttentionRecord& record);

/// Mean over query tokens of the attention mass landing on `doc_index`.
double score_doc_under_head(const TokenAttentionRecord& record,
                            std::size_t doc_index);

/// Per-query table of head x document relevance scores, row-major.
struct HeadScoreMatrix {
  std::string query_id;
  std::vector<HeadId> head_ids;
  std::vector<std::string> doc_ids;
  std::vector<double> scores;

  std::size_t num_heads() const { return head_ids.size(); }
  std::size_t num_docs() const { return doc_ids.size(); }
  double at(std::size_t m, std::size_t i) const {
    return scores[m * num_docs() + i];
  }
  std::span<const double> row(std::size_t m) const {
    return {scores.data() + m * num_docs(), num_docs()};
  }
  std::optional<std::size_t> row_of(const HeadId& head) const;
};

/// Non-negative finite scores, unique heads and unique doc ids.
void validate(const HeadScoreMatrix& matrix);

/// Tabulates score_doc_under_head over `heads` x documents. Records may come
/// in any order; exactly one per requested head is used.
HeadScoreMatrix build_score_matrix(std::span<const TokenAttentionRecord> records,
                                   std::span<const HeadId> heads,
                                   std::span<const std::string> doc_ids);

struct AggregatedScores {
  std::string query_id;
  std::vector<std::string> doc_ids;
  std::vector<double> scores;
  HeadSet selected_heads;
};

/// Unweighted sum of the selected heads' rows. Rows are accumulated in matrix
/// row order so the result does not depend on the order of `selected`.
AggregatedScores aggregate(const HeadScoreMatrix& matrix,
                           std::span<const HeadId> selected);

/// Same as aggregate() but addressed by matrix row and without bookkeeping.
/// `rows` must be sorted ascending.
std::vector<double> sum_rows(const HeadScoreMatrix& matrix,
                             std::span<const std::size_t> rows);

/// Indices of `scores` sorted by score descending, ties by doc id ascending.
std::vector<std::size_t> rank_indices(std::span<const double> scores,
                                      std::span<const std::string> doc_ids);

std::vector<std::string> rank(const AggregatedScores& agg);

}  // namespace routehead
