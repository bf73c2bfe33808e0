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

#include <algorithm>
#include <cmath>
#include <limits>

#include <doctest.h>

#include "routehead/error.hpp"
#include "routehead/label_search.hpp"
#include "test_util.hpp"

using namespace routehead;
using routehead::testing::Gen;
using routehead::testing::make_matrix;
using routehead::testing::pool_of;

namespace {

const std::vector<std::string> kDocs{"a", "b", "c"};

// Only {h1, h3} ranks the single relevant doc first; every other subset
// scores 1/log2(3).
QueryInstance pair_instance() {
  return {make_matrix({{0.5, 0.6, 0.0}, {0.0, 0.3, 0.0}, {0.3, 0.0, 0.4}},
                      routehead::testing::flat_heads(3, 1), kDocs),
          {{"a", 1}}};
}

// Greedy should take h2 (best single) then h3.
QueryInstance greedy_instance() {
  return {make_matrix({{0.1, 0.1, 0.9, 0.9}, {0.9, 0.1, 0.5, 0.0}, {0.0, 0.9, 0.1, 0.5}},
                      routehead::testing::flat_heads(3, 1), {"a", "b", "c", "d"}),
          {{"a", 1}, {"b", 1}}};
}

// Independent greedy: replays the forward rule step by step with set_objective.
HeadSet reference_greedy(const QueryInstance& q, const HeadPool& pool, std::size_t budget) {
  HeadSet current;
  double value = 0.0;
  while (current.size() < budget) {
    double best = -1.0;
    std::optional<HeadId> pick;
    for (const HeadId& h : pool.heads) {
      if (std::find(current.begin(), current.end(), h) != current.end()) continue;
      HeadSet trial = current;
      trial.push_back(h);
      std::sort(trial.begin(), trial.end());
      const double v = set_objective(q.matrix, q.judgments, trial);
      if (v > best || (v == best && h < *pick)) {
        best = v;
        pick = h;
      }
    }
    if (!pick || best <= value) break;
    current.push_back(*pick);
    std::sort(current.begin(), current.end());
    value = best;
  }
  return current;
}

QueryInstance random_instance(Gen& gen, std::size_t heads, std::size_t docs) {
  std::vector<std::vector<double>> rows(heads, std::vector<double>(docs));
  for (auto& r : rows) {
    for (double& v : r) v = gen.uniform();
  }
  QueryInstance q{make_matrix(rows), {}};
  for (const auto& d : q.matrix.doc_ids) {
    if (gen.coin(0.25)) q.judgments[d] = gen.integer(1, 3);
  }
  return q;
}

}  // namespace

TEST_CASE("forward_select") {
  SearchConfig cfg;
  cfg.budget = 2;

  SUBCASE("perfect single head stops growth") {
    const QueryInstance q{make_matrix({{0.9, 0.1}, {0.2, 0.8}}), {{"d1", 1}}};
    const HeadPool pool = pool_of(q.matrix.head_ids);
    CHECK(set_objective(q.matrix, q.judgments, {q.matrix.head_ids[0]}) == 1.0);
    CHECK(forward_select(q.matrix, q.judgments, pool, cfg) == HeadSet{q.matrix.head_ids[0]});
  }
  SUBCASE("no positive judgments gives the empty set") {
    const QueryInstance q{make_matrix({{0.9, 0.1}, {0.2, 0.8}}), {{"d1", 0}}};
    CHECK(forward_select(q.matrix, q.judgments, pool_of(q.matrix.head_ids), cfg).empty());
  }
  SUBCASE("greedy path h2 then h3") {
    const QueryInstance q = greedy_instance();
    const HeadPool pool = pool_of(q.matrix.head_ids);
    cfg.budget = 3;
    const SearchOutcome out = forward_select_traced(q.matrix, q.judgments, pool, cfg);
    const HeadSet expected{q.matrix.head_ids[1], q.matrix.head_ids[2]};
    CHECK(out.heads == expected);
    CHECK(reference_greedy(q, pool, 3) == expected);
    REQUIRE(out.trace.size() == 2);
    CHECK(out.trace[0].added == q.matrix.head_ids[1]);
    CHECK(out.trace[1].added == q.matrix.head_ids[2]);
    CHECK(out.objective == 1.0);
  }
  SUBCASE("errors") {
    const QueryInstance q = greedy_instance();
    CHECK_THROWS_AS(forward_select(q.matrix, q.judgments, HeadPool{}, cfg), Error);
    cfg.budget = 4;
    CHECK_THROWS_AS(forward_select(q.matrix, q.judgments, pool_of(q.matrix.head_ids), cfg),
                    Error);
    cfg.budget = 1;
    const HeadPool foreign = pool_of({HeadId::from_flat(99, 128)});
    CHECK_THROWS_AS(forward_select(q.matrix, q.judgments, foreign, cfg), Error);
  }
}

TEST_CASE("swap_refine") {
  const QueryInstance q = pair_instance();
  const auto& h = q.matrix.head_ids;
  const HeadPool pool = pool_of(h);
  SearchConfig cfg;
  cfg.budget = 2;

  const double before = set_objective(q.matrix, q.judgments, {h[0], h[1]});
  CHECK(before == doctest::Approx(1.0 / std::log2(3.0)));

  // Exhaustive one-swap oracle from {h1, h2}.
  double best = -1.0;
  HeadSet best_set;
  for (std::size_t u : {0u, 1u}) {
    HeadSet trial{h[u == 0 ? 1 : 0], h[2]};
    std::sort(trial.begin(), trial.end());
    const double v = set_objective(q.matrix, q.judgments, trial);
    if (v > best) best = v, best_set = trial;
  }
  CHECK(best_set == HeadSet{h[0], h[2]});

  const SearchOutcome out = swap_refine_traced({h[0], h[1]}, q.matrix, q.judgments, pool, cfg);
  CHECK(out.heads == best_set);
  CHECK(out.objective == best);
  REQUIRE(out.trace.size() == 1);
  CHECK(out.trace[0].kind == SearchEvent::Kind::kSwap);
  CHECK(*out.trace[0].removed == h[1]);
  CHECK(out.trace[0].added == h[2]);

  // Already optimal.
  CHECK(swap_refine({h[0], h[2]}, q.matrix, q.judgments, pool, cfg) == HeadSet{h[0], h[2]});

  // Tolerance above the available gain.
  cfg.epsilon = 0.5;
  CHECK(swap_refine({h[0], h[1]}, q.matrix, q.judgments, pool, cfg) == HeadSet{h[0], h[1]});

  CHECK(swap_refine({}, q.matrix, q.judgments, pool, cfg).empty());
  CHECK_THROWS_AS(swap_refine({HeadId::from_flat(42, 64)}, q.matrix, q.judgments, pool, cfg),
                  Error);
}

TEST_CASE("swap cap is reported") {
  const QueryInstance q = pair_instance();
  const auto& h = q.matrix.head_ids;
  SearchConfig cfg;
  cfg.budget = 2;
  cfg.max_swap_iters = 1;
  // One swap is enough here, so the cap is not hit.
  CHECK_FALSE(swap_refine_traced({h[0], h[1]}, q.matrix, q.judgments, pool_of(h), cfg).cap_hit);

  Gen gen(41);
  bool saw_cap = false;
  for (int trial = 0; trial < 300 && !saw_cap; ++trial) {
    const QueryInstance r = random_instance(gen, 8, 10);
    const HeadPool pool = pool_of(r.matrix.head_ids);
    const HeadSet start{r.matrix.head_ids[6], r.matrix.head_ids[7]};
    const auto full = swap_refine_traced(start, r.matrix, r.judgments, pool, SearchConfig{});
    if (full.trace.size() >= 2) {
      const auto capped = swap_refine_traced(start, r.matrix, r.judgments, pool, cfg);
      CHECK(capped.cap_hit);
      CHECK(capped.trace.size() == 1);
      saw_cap = true;
    }
  }
  CHECK(saw_cap);
}

TEST_CASE("search_label and search_labels") {
  SearchConfig cfg;
  cfg.budget = 2;

  const QueryInstance useful{make_matrix({{0.0, 0.0, 0.0}, {0.1, 0.9, 0.3}, {0.0, 0.0, 0.0}}),
                             {{"d2", 1}}};
  const HeadPool pool = pool_of(useful.matrix.head_ids);
  const PseudoLabel one_hot = search_label(useful, pool, cfg);
  CHECK(one_hot.y == std::vector<std::uint8_t>{0, 1, 0});
  CHECK(one_hot.achieved_ndcg == 1.0);

  QueryInstance unjudged = useful;
  unjudged.matrix.query_id = "unjudged";
  unjudged.judgments.clear();
  const PseudoLabel empty = search_label(unjudged, pool, cfg);
  CHECK(empty.y == std::vector<std::uint8_t>{0, 0, 0});
  CHECK(empty.achieved_ndcg == 0.0);

  QueryInstance broken = useful;
  broken.matrix.query_id = "broken";
  broken.matrix.head_ids[2] = HeadId::from_flat(77, 128);

  const std::vector<QueryInstance> batch{useful, broken, unjudged};
  const auto results = search_labels(batch, pool, cfg);
  REQUIRE(results.size() == 3);
  CHECK(results[0].label.has_value());
  CHECK_FALSE(results[1].label.has_value());
  CHECK(results[1].query_id == "broken");
  CHECK_FALSE(results[1].error.empty());
  CHECK(results[2].query_id == "unjudged");
  CHECK(results[2].label.has_value());
}

TEST_CASE("exhaustive_oracle") {
  const QueryInstance q = pair_instance();
  const auto& h = q.matrix.head_ids;

  const HeadPool two = pool_of({h[0], h[1]});
  CHECK(exhaustive_oracle(q.matrix, q.judgments, two, 2).evaluated == 3);

  const OracleResult best = exhaustive_oracle(q.matrix, q.judgments, pool_of(h), 2);
  CHECK(best.best == HeadSet{h[0], h[2]});
  CHECK(best.ndcg == 1.0);
  CHECK(best.evaluated == 6);

  SearchConfig cfg;
  cfg.budget = 2;
  const PseudoLabel label = search_label(q, pool_of(h), cfg);
  CHECK(label.selected(pool_of(h)) == best.best);

  const HeadPool big = pool_of(routehead::testing::flat_heads(17));
  CHECK_THROWS_WITH_AS(exhaustive_oracle(q.matrix, q.judgments, big, 2),
                       "oracle limited to <= 16 heads", Error);
  CHECK_THROWS_AS(exhaustive_oracle(q.matrix, q.judgments, two, 3), Error);
}

TEST_CASE("property: search invariants on random instances") {
  Gen gen(42);
  SearchConfig cfg;
  cfg.budget = 3;
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t heads = gen.integer(3, 8);
    const QueryInstance q = random_instance(gen, heads, gen.integer(3, 15));
    const HeadPool pool = pool_of(q.matrix.head_ids);
    const PseudoLabel label = search_label(q, pool, cfg);

    double prev = 0.0;
    std::size_t adds = 0;
    for (const SearchEvent& e : label.trace) {
      if (e.kind == SearchEvent::Kind::kAdd) {
        CHECK(e.objective > prev);
        ++adds;
      } else {
        CHECK(e.objective - prev > cfg.epsilon);
      }
      prev = e.objective;
    }
    CHECK(adds <= cfg.budget);
    const HeadSet selected = label.selected(pool);
    CHECK(selected.size() == adds);
    CHECK(label.achieved_ndcg >= label.forward_ndcg);
    CHECK(label.achieved_ndcg == set_objective(q.matrix, q.judgments, selected));
    CHECK(forward_select(q.matrix, q.judgments, pool, cfg) ==
          reference_greedy(q, pool, cfg.budget));

    const OracleResult oracle = exhaustive_oracle(q.matrix, q.judgments, pool, cfg.budget);
    CHECK(oracle.ndcg >= label.achieved_ndcg);

    const PseudoLabel again = search_label(q, pool, cfg);
    CHECK(again.y == label.y);
    CHECK(again.achieved_ndcg == label.achieved_ndcg);
    CHECK(again.trace.size() == label.trace.size());
  }
}

TEST_CASE("property: single signal head is found exactly") {
  Gen gen(43);
  SearchConfig cfg;
  cfg.budget = 3;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t heads = gen.integer(3, 8), docs = gen.integer(2, 12);
    std::vector<std::vector<double>> rows(heads, std::vector<double>(docs, 0.0));
    QueryInstance q{make_matrix(rows), {}};
    const std::size_t signal = gen.integer(0, static_cast<int>(heads) - 1);
    bool any = false;
    for (std::size_t i = 0; i < docs; ++i) {
      const int g = gen.coin(0.3) ? gen.integer(1, 3) : 0;
      any |= g > 0;
      if (g > 0) q.judgments[q.matrix.doc_ids[i]] = g;
      q.matrix.scores[signal * docs + i] = g + 0.01 * gen.uniform();
    }
    const HeadPool pool = pool_of(q.matrix.head_ids);
    const PseudoLabel label = search_label(q, pool, cfg);
    const OracleResult oracle = exhaustive_oracle(q.matrix, q.judgments, pool, cfg.budget);
    CHECK(oracle.ndcg - label.achieved_ndcg == 0.0);
    CHECK(label.achieved_ndcg == (any ? 1.0 : 0.0));
  }
}
