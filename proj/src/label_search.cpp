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

#include "routehead/label_search.hpp"

#include <algorithm>
#include <bit>
#include <limits>

#include <fmt/format.h>

#include "routehead/error.hpp"

namespace routehead {

namespace {

// Evaluates head sets given as pool positions. Matrix rows are summed in
// ascending row order, which is exactly what aggregate() does, so values
// agree bit-for-bit with set_objective().
class SetEvaluator {
 public:
  SetEvaluator(const HeadScoreMatrix& matrix, const QueryJudgments& judgments,
               const HeadPool& pool, const MetricConfig& metric)
      : matrix_(matrix), objective_(matrix.doc_ids, judgments, metric) {
    if (pool.size() == 0) {
      throw Error(ErrorCategory::kInvalidArgument, "empty head pool");
    }
    pool_rows_.reserve(pool.size());
    for (const HeadId& h : pool.heads) {
      auto row = matrix.row_of(h);
      if (!row) {
        throw Error(ErrorCategory::kNotFound,
                    fmt::format("pool head {} missing from score matrix of "
                                "query '{}'",
                                h.flat, matrix.query_id));
      }
      pool_rows_.push_back(*row);
    }
    by_flat_.resize(pool.size());
    for (std::size_t p = 0; p < pool.size(); ++p) by_flat_[p] = p;
    std::sort(by_flat_.begin(), by_flat_.end(), [&](std::size_t a, std::size_t b) {
      return pool.heads[a].flat < pool.heads[b].flat;
    });
  }

  double operator()(std::span<const std::size_t> positions) const {
    if (positions.empty()) return 0.0;
    std::vector<std::size_t> rows;
    rows.reserve(positions.size());
    for (std::size_t p : positions) rows.push_back(pool_rows_[p]);
    std::sort(rows.begin(), rows.end());
    return objective_.evaluate(sum_rows(matrix_, rows));
  }

  // Pool positions in ascending flat-index order.
  const std::vector<std::size_t>& by_flat() const { return by_flat_; }

 private:
  const HeadScoreMatrix& matrix_;
  RankObjective objective_;
  std::vector<std::size_t> pool_rows_;
  std::vector<std::size_t> by_flat_;
};

bool contains(const std::vector<std::size_t>& set, std::size_t p) {
  return std::find(set.begin(), set.end(), p) != set.end();
}

HeadSet to_heads(const std::vector<std::size_t>& positions,
                 const HeadPool& pool) {
  HeadSet out;
  out.reserve(positions.size());
  for (std::size_t p : positions) out.push_back(pool.heads[p]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> to_positions(const HeadSet& heads,
                                      const HeadPool& pool) {
  std::vector<std::size_t> out;
  out.reserve(heads.size());
  for (const HeadId& h : heads) {
    auto it = std::find(pool.heads.begin(), pool.heads.end(), h);
    if (it == pool.heads.end()) {
      throw Error(ErrorCategory::kInvalidArgument,
                  fmt::format("head {} is not in the pool", h.flat));
    }
    out.push_back(static_cast<std::size_t>(it - pool.heads.begin()));
  }
  return out;
}

void check_config(const SearchConfig& config, const HeadPool& pool) {
  if (pool.size() == 0) {
    throw Error(ErrorCategory::kInvalidArgument, "empty head pool");
  }
  if (config.budget == 0 || config.budget > pool.size()) {
    throw Error(ErrorCategory::kInvalidArgument,
                fmt::format("budget P={} must be in [1, K={}]", config.budget,
                            pool.size()));
  }
  if (!(config.epsilon >= 0.0)) {
    throw Error(ErrorCategory::kInvalidArgument, "swap tolerance must be >= 0");
  }
  if (config.max_swap_iters == 0) {
    throw Error(ErrorCategory::kInvalidArgument, "max_swap_iters must be >= 1");
  }
}

}  // namespace

HeadSet PseudoLabel::selected(const HeadPool& pool) const {
  HeadSet out;
  for (std::size_t p = 0; p < y.size() && p < pool.size(); ++p) {
    if (y[p]) out.push_back(pool.heads[p]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

SearchOutcome forward_select_traced(const HeadScoreMatrix& matrix,
                                    const QueryJudgments& judgments,
                                    const HeadPool& pool,
                                    const SearchConfig& config) {
  check_config(config, pool);
  const SetEvaluator eval(matrix, judgments, pool, config.metric);

  SearchOutcome out;
  std::vector<std::size_t> current;
  while (current.size() < config.budget) {
    std::optional<std::size_t> best;
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> trial = current;
    trial.push_back(0);
    for (std::size_t p : eval.by_flat()) {
      if (contains(current, p)) continue;
      trial.back() = p;
      const double value = eval(trial);
      if (value > best_value) {
        best_value = value;
        best = p;
      }
    }
    if (!best || !(best_value > out.objective)) break;
    current.push_back(*best);
    out.objective = best_value;
    out.trace.push_back(
        {SearchEvent::Kind::kAdd, pool.heads[*best], std::nullopt, best_value});
  }
  out.heads = to_heads(current, pool);
  return out;
}

HeadSet forward_select(const HeadScoreMatrix& matrix,
                       const QueryJudgments& judgments, const HeadPool& pool,
                       const SearchConfig& config) {
  return forward_select_traced(matrix, judgments, pool, config).heads;
}

SearchOutcome swap_refine_traced(const HeadSet& initial,
                                 const HeadScoreMatrix& matrix,
                                 const QueryJudgments& judgments,
                                 const HeadPool& pool,
                                 const SearchConfig& config) {
  check_config(config, pool);
  const SetEvaluator eval(matrix, judgments, pool, config.metric);

  std::vector<std::size_t> current = to_positions(normalize_head_set(initial), pool);
  SearchOutcome out;
  out.objective = eval(current);
  if (current.empty()) return out;

  // Selected heads are scanned in flat order too, so the first strict maximum
  // found is the lexicographically smallest (u.flat, v.flat) pair.
  auto flat_of = [&](std::size_t p) { return pool.heads[p].flat; };
  std::size_t swaps = 0;
  for (;;) {
    std::vector<std::size_t> selected = current;
    std::sort(selected.begin(), selected.end(),
              [&](std::size_t a, std::size_t b) { return flat_of(a) < flat_of(b); });

    double best_value = -std::numeric_limits<double>::infinity();
    std::size_t best_u = 0, best_v = 0;
    bool found = false;
    for (std::size_t u : selected) {
      for (std::size_t v : eval.by_flat()) {
        if (contains(current, v)) continue;
        std::vector<std::size_t> trial = current;
        *std::find(trial.begin(), trial.end(), u) = v;
        const double value = eval(trial);
        if (value > best_value) {
          best_value = value;
          best_u = u;
          best_v = v;
          found = true;
        }
      }
    }
    if (!found || !(best_value - out.objective > config.epsilon)) break;
    if (swaps == config.max_swap_iters) {
      out.cap_hit = true;
      break;
    }
    *std::find(current.begin(), current.end(), best_u) = best_v;
    out.objective = best_value;
    out.trace.push_back({SearchEvent::Kind::kSwap, pool.heads[best_v],
                         pool.heads[best_u], best_value});
    ++swaps;
  }
  out.heads = to_heads(current, pool);
  return out;
}

HeadSet swap_refine(const HeadSet& initial, const HeadScoreMatrix& matrix,
                    const QueryJudgments& judgments, const HeadPool& pool,
                    const SearchConfig& config) {
  return swap_refine_traced(initial, matrix, judgments, pool, config).heads;
}

double set_objective(const HeadScoreMatrix& matrix,
                     const QueryJudgments& judgments, const HeadSet& heads,
                     const MetricConfig& metric) {
  if (heads.empty()) return 0.0;
  const AggregatedScores agg = aggregate(matrix, heads);
  return RankObjective(matrix.doc_ids, judgments, metric).evaluate(agg.scores);
}

std::vector<std::uint8_t> multi_hot(const HeadSet& heads, const HeadPool& pool) {
  std::vector<std::uint8_t> y(pool.size(), 0);
  for (std::size_t p : to_positions(heads, pool)) y[p] = 1;
  return y;
}

PseudoLabel search_label(const QueryInstance& query, const HeadPool& pool,
                         const SearchConfig& config) {
  const SearchOutcome forward =
      forward_select_traced(query.matrix, query.judgments, pool, config);
  const SearchOutcome refined = swap_refine_traced(
      forward.heads, query.matrix, query.judgments, pool, config);

  PseudoLabel label;
  label.query_id = query.matrix.query_id;
  label.y = multi_hot(refined.heads, pool);
  label.forward_ndcg = forward.objective;
  label.achieved_ndcg = refined.objective;
  label.trace = forward.trace;
  label.trace.insert(label.trace.end(), refined.trace.begin(),
                     refined.trace.end());
  label.swap_cap_hit = refined.cap_hit;
  return label;
}

std::vector<LabelResult> search_labels(std::span<const QueryInstance> queries,
                                       const HeadPool& pool,
                                       const SearchConfig& config) {
  std::vector<LabelResult> out;
  out.reserve(queries.size());
  for (const QueryInstance& q : queries) {
    LabelResult result;
    result.query_id = q.matrix.query_id;
    try {
      result.label = search_label(q, pool, config);
    } catch (const std::exception& e) {
      result.error = e.what();
    }
    out.push_back(std::move(result));
  }
  return out;
}

OracleResult exhaustive_oracle(const HeadScoreMatrix& matrix,
                               const QueryJudgments& judgments,
                               const HeadPool& pool, std::size_t max_size,
                               const MetricConfig& metric) {
  if (pool.size() > kOracleMaxPool) {
    throw Error(ErrorCategory::kInvalidArgument,
                "oracle limited to <= 16 heads");
  }
  if (max_size == 0 || max_size > pool.size()) {
    throw Error(ErrorCategory::kInvalidArgument,
                fmt::format("oracle max_size {} must be in [1, {}]", max_size,
                            pool.size()));
  }
  const SetEvaluator eval(matrix, judgments, pool, metric);
  const std::vector<std::size_t>& order = eval.by_flat();
  const std::size_t n = order.size();

  OracleResult out;
  out.ndcg = -std::numeric_limits<double>::infinity();
  std::vector<std::uint32_t> best_tuple;
  std::vector<std::size_t> positions;
  std::vector<std::uint32_t> tuple;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) > max_size) continue;
    positions.clear();
    tuple.clear();
    for (std::size_t b = 0; b < n; ++b) {
      if (mask & (1u << b)) {
        positions.push_back(order[b]);
        tuple.push_back(pool.heads[order[b]].flat);
      }
    }
    const double value = eval(positions);
    ++out.evaluated;
    if (value > out.ndcg || (value == out.ndcg && tuple < best_tuple)) {
      out.ndcg = value;
      best_tuple = tuple;
      out.best = to_heads(positions, pool);
    }
  }
  return out;
}

}  // namespace routehead
