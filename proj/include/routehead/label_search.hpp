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

// Offline construction of per-query head-set pseudo-labels: greedy forward
// selection under a size budget, then one-swap hill climbing.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "routehead/metrics.hpp"
#include "routehead/pool.hpp"
#include "routehead/relevance.hpp"

namespace routehead {

struct SearchConfig {
  std::size_t budget = 8;
  double epsilon = 0.0;
  std::size_t max_swap_iters = 100;
  MetricConfig metric;
};

struct SearchEvent {
  enum class Kind { kAdd, kSwap };
  Kind kind = Kind::kAdd;
  HeadId added;
  std::optional<HeadId> removed;  // set for swaps
  double objective = 0.0;         // after the move
};

struct PseudoLabel {
  std::string query_id;
  std::vector<std::uint8_t> y;  // aligned with pool order
  double achieved_ndcg = 0.0;
  double forward_ndcg = 0.0;
  std::vector<SearchEvent> trace;
  bool swap_cap_hit = false;

  HeadSet selected(const HeadPool& pool) const;
};

struct SearchOutcome {
  HeadSet heads;
  double objective = 0.0;
  std::vector<SearchEvent> trace;
  bool cap_hit = false;
};

/// Greedy growth from the empty set (objective 0). Each step adds the pool
/// head with the best nDCG after inclusion, ties to the lowest flat index,
/// and only if it strictly improves the current objective.
SearchOutcome forward_select_traced(const HeadScoreMatrix& matrix,
                                    const QueryJudgments& judgments,
                                    const HeadPool& pool,
                                    const SearchConfig& config);
HeadSet forward_select(const HeadScoreMatrix& matrix,
                       const QueryJudgments& judgments, const HeadPool& pool,
                       const SearchConfig& config);

/// Best-improvement one-swap local search. A swap is applied only when it
/// beats the current objective by more than `config.epsilon`; ties between
/// swaps go to the smallest (removed.flat, added.flat).
SearchOutcome swap_refine_traced(const HeadSet& initial,
                                 const HeadScoreMatrix& matrix,
                                 const QueryJudgments& judgments,
                                 const HeadPool& pool,
                                 const SearchConfig& config);
HeadSet swap_refine(const HeadSet& initial, const HeadScoreMatrix& matrix,
                    const QueryJudgments& judgments, const HeadPool& pool,
                    const SearchConfig& config);

/// nDCG of the ranking produced by summing `heads` (empty set scores 0).
double set_objective(const HeadScoreMatrix& matrix,
                     const QueryJudgments& judgments, const HeadSet& heads,
                     const MetricConfig& metric = {});

/// Multi-hot encoding of `heads` over the pool order.
std::vector<std::uint8_t> multi_hot(const HeadSet& heads, const HeadPool& pool);

PseudoLabel search_label(const QueryInstance& query, const HeadPool& pool,
                         const SearchConfig& config);

struct LabelResult {
  std::string query_id;
  std::optional<PseudoLabel> label;
  std::string error;  // set iff !label
};

/// Runs search_label per query; failures become records, order is preserved.
std::vector<LabelResult> search_labels(std::span<const QueryInstance> queries,
                                       const HeadPool& pool,
                                       const SearchConfig& config);

struct OracleResult {
  HeadSet best;
  double ndcg = 0.0;
  std::size_t evaluated = 0;
};

inline constexpr std::size_t kOracleMaxPool = 16;

/// Enumerates every non-empty subset of the pool with at most `max_size`
/// heads. Ties go to the lexicographically smallest flat-index tuple.
OracleResult exhaustive_oracle(const HeadScoreMatrix& matrix,
                               const QueryJudgments& judgments,
                               const HeadPool& pool, std::size_t max_size,
                               const MetricConfig& metric = {});

}  // namespace routehead
