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

#include <cmath>

#include <doctest.h>

#include "routehead/error.hpp"
#include "routehead/pool.hpp"
#include "test_util.hpp"

using namespace routehead;
using routehead::testing::Gen;
using routehead::testing::make_matrix;

namespace {

// Two docs, d1 relevant. A head "wins" a query when it scores d1 above d2.
// With cutoff 1 a win is nDCG 1 and a loss is nDCG 0.
std::vector<QueryInstance> win_loss_queries(const std::vector<int>& wins_per_head,
                                            int num_queries) {
  std::vector<QueryInstance> out;
  for (int q = 0; q < num_queries; ++q) {
    std::vector<std::vector<double>> rows;
    for (int wins : wins_per_head) {
      rows.push_back(q < wins ? std::vector<double>{0.9, 0.1}
                              : std::vector<double>{0.1, 0.9});
    }
    QueryInstance inst{make_matrix(rows), {{"d1", 1}}};
    inst.matrix.query_id = "q" + std::to_string(q);
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace

TEST_CASE("solo_head_score") {
  const MetricConfig top1{1, Gain::kLinear};
  auto perfect = win_loss_queries({1}, 1);
  CHECK(solo_head_score(perfect[0].matrix.head_ids[0], perfect) == 1.0);

  // Flat scores: the tie-break puts d3 last, so the lone positive sits at rank 3.
  std::vector<QueryInstance> flat{{make_matrix({{0.2, 0.2, 0.2}}), {{"d3", 1}}}};
  CHECK(solo_head_score(flat[0].matrix.head_ids[0], flat) ==
        doctest::Approx(1.0 / std::log2(4.0)).epsilon(1e-15));

  auto half = win_loss_queries({1}, 2);
  CHECK(solo_head_score(half[0].matrix.head_ids[0], half, top1) == 0.5);

  CHECK_THROWS_AS(solo_head_score(HeadId::from_flat(9, 16), half), Error);
  CHECK_THROWS_AS(solo_head_score(half[0].matrix.head_ids[0], {}), Error);
}

TEST_CASE("build_pool keeps the best K heads") {
  const MetricConfig top1{1, Gain::kLinear};
  const auto queries = win_loss_queries({9, 5, 7}, 10);
  const auto heads = queries[0].matrix.head_ids;

  const HeadPool pool = build_pool(heads, queries, 2, top1);
  CHECK(pool.heads == std::vector<HeadId>{heads[0], heads[2]});
  CHECK(pool.solo_scores[0] == doctest::Approx(0.9));
  CHECK(pool.solo_scores[1] == doctest::Approx(0.7));

  const HeadPool all = build_pool(heads, queries, 3, top1);
  CHECK(all.heads == std::vector<HeadId>{heads[0], heads[2], heads[1]});

  const auto tied = win_loss_queries({4, 6, 4}, 10);
  const HeadPool tie_pool = build_pool(tied[0].matrix.head_ids, tied, 3, top1);
  CHECK(tie_pool.heads[1].flat == 0);
  CHECK(tie_pool.heads[2].flat == 2);

  CHECK_THROWS_AS(build_pool(heads, queries, 4, top1), Error);
  CHECK_THROWS_AS(build_pool(heads, queries, 0, top1), Error);
  CHECK_THROWS_AS(build_pool(heads, {}, 1, top1), Error);
  CHECK(truncate(all, 1).heads == std::vector<HeadId>{heads[0]});
  CHECK_THROWS_AS(truncate(all, 4), Error);
}

TEST_CASE("property: pool prefix, rescaling and determinism") {
  Gen gen(31);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t num_heads = gen.integer(2, 10);
    const std::size_t docs = gen.integer(2, 8);
    std::vector<QueryInstance> queries;
    for (int q = gen.integer(1, 5); q > 0; --q) {
      std::vector<std::vector<double>> rows(num_heads, std::vector<double>(docs));
      for (auto& r : rows) {
        for (double& v : r) v = gen.uniform();
      }
      QueryInstance inst{make_matrix(rows), {}};
      for (const auto& d : inst.matrix.doc_ids) {
        if (gen.coin(0.3)) inst.judgments[d] = gen.integer(1, 2);
      }
      queries.push_back(std::move(inst));
    }
    const auto heads = queries[0].matrix.head_ids;
    const std::size_t k = gen.integer(1, static_cast<int>(num_heads));
    const HeadPool full = build_pool(heads, queries, num_heads);
    const HeadPool top = build_pool(heads, queries, k);
    CHECK(std::equal(top.heads.begin(), top.heads.end(), full.heads.begin()));
    for (std::size_t i = 1; i < full.size(); ++i) {
      CHECK(full.solo_scores[i - 1] >= full.solo_scores[i]);
    }

    auto scaled = queries;
    const std::size_t victim = gen.integer(0, static_cast<int>(num_heads) - 1);
    const double c = gen.uniform(0.1, 10.0);
    for (auto& q : scaled) {
      for (std::size_t i = 0; i < docs; ++i) q.matrix.scores[victim * docs + i] *= c;
    }
    CHECK(build_pool(heads, scaled, k).heads == top.heads);
    CHECK(build_pool(heads, queries, k).solo_scores == top.solo_scores);
  }
}
