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

#include "routehead/pool.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "routehead/error.hpp"

namespace routehead {

namespace {

std::vector<std::size_t> rows_for(const HeadId& head,
                                  std::span<const QueryInstance> queries) {
  std::vector<std::size_t> rows;
  rows.reserve(queries.size());
  for (const QueryInstance& q : queries) {
    auto row = q.matrix.row_of(head);
    if (!row) {
      throw Error(ErrorCategory::kNotFound,
                  fmt::format("head {} missing from score matrix of query '{}'",
                              head.flat, q.matrix.query_id));
    }
    rows.push_back(*row);
  }
  return rows;
}

double mean_solo(std::span<const std::size_t> rows,
                 std::span<const QueryInstance> queries,
                 std::span<const RankObjective> objectives) {
  std::vector<double> values;
  values.reserve(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    values.push_back(objectives[q].evaluate(queries[q].matrix.row(rows[q])));
  }
  return mean_ndcg(values);
}

std::vector<RankObjective> objectives_for(std::span<const QueryInstance> queries,
                                          const MetricConfig& config) {
  std::vector<RankObjective> out;
  out.reserve(queries.size());
  for (const QueryInstance& q : queries) {
    out.emplace_back(q.matrix.doc_ids, q.judgments, config);
  }
  return out;
}

}  // namespace

double solo_head_score(const HeadId& head, std::span<const QueryInstance> queries,
                       const MetricConfig& config) {
  if (queries.empty()) {
    throw Error(ErrorCategory::kInvalidArgument, "no queries to score heads on");
  }
  const auto rows = rows_for(head, queries);
  const auto objectives = objectives_for(queries, config);
  return mean_solo(rows, queries, objectives);
}

HeadPool build_pool(std::span<const HeadId> all_heads,
                    std::span<const QueryInstance> queries, std::size_t k,
                    const MetricConfig& config, std::string provenance) {
  if (k == 0) {
    throw Error(ErrorCategory::kInvalidArgument, "pool size K must be >= 1");
  }
  if (k > all_heads.size()) {
    throw Error(ErrorCategory::kInvalidArgument,
                fmt::format("pool size K={} exceeds the {} available heads", k,
                            all_heads.size()));
  }
  if (queries.empty()) {
    throw Error(ErrorCategory::kInvalidArgument, "no queries to score heads on");
  }
  const HeadSet heads = normalize_head_set(
      HeadSet(all_heads.begin(), all_heads.end()));
  const auto objectives = objectives_for(queries, config);

  std::vector<double> scores;
  scores.reserve(heads.size());
  for (const HeadId& h : heads) {
    scores.push_back(mean_solo(rows_for(h, queries), queries, objectives));
  }

  std::vector<std::size_t> order(heads.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // `heads` is sorted by flat index, so a stable sort keeps that as tie-break.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  HeadPool pool;
  pool.provenance = std::move(provenance);
  for (std::size_t r = 0; r < k; ++r) {
    pool.heads.push_back(heads[order[r]]);
    pool.solo_scores.push_back(scores[order[r]]);
  }
  return pool;
}

HeadPool truncate(const HeadPool& pool, std::size_t k) {
  if (k == 0 || k > pool.size()) {
    throw Error(ErrorCategory::kInvalidArgument,
                fmt::format("cannot take top-{} of a pool of {} heads", k,
                            pool.size()));
  }
  HeadPool out;
  out.heads.assign(pool.heads.begin(), pool.heads.begin() + k);
  out.solo_scores.assign(pool.solo_scores.begin(),
                         pool.solo_scores.begin() + k);
  out.provenance = pool.provenance;
  return out;
}

}  // namespace routehead
