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
#include <numeric>
#include <sstream>

#include <doctest.h>

#include "routehead/error.hpp"
#include "routehead/metrics.hpp"
#include "routehead/relevance.hpp"
#include "test_util.hpp"

using namespace routehead;
using routehead::testing::Gen;

namespace {

// Brute force from the definition: the ideal DCG is the best DCG over every
// ordering of the judged documents.
double dcg_of(const std::vector<int>& grades_in_order, int k, Gain gain) {
  double dcg = 0.0;
  for (std::size_t r = 0; r < grades_in_order.size() && r < static_cast<std::size_t>(k); ++r) {
    const int g = grades_in_order[r];
    const double gv = gain == Gain::kLinear ? g : std::pow(2.0, g) - 1.0;
    dcg += gv / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg;
}

double brute_force_ndcg(const std::vector<std::string>& ranking,
                        const QueryJudgments& judgments, int k, Gain gain) {
  std::vector<int> ranked;
  for (const auto& d : ranking) {
    auto it = judgments.find(d);
    ranked.push_back(it == judgments.end() ? 0 : it->second);
  }
  std::vector<int> judged;
  for (const auto& [d, g] : judgments) judged.push_back(g);
  std::sort(judged.begin(), judged.end());
  double ideal = 0.0;
  do {
    ideal = std::max(ideal, dcg_of(judged, k, gain));
  } while (std::next_permutation(judged.begin(), judged.end()));
  return ideal == 0.0 ? 0.0 : dcg_of(ranked, k, gain) / ideal;
}

struct Instance {
  std::vector<std::string> ranking;
  QueryJudgments judgments;
  int k;
  Gain gain;
};

Instance random_instance(Gen& gen) {
  Instance in;
  const int n = gen.integer(1, 6);
  in.ranking = routehead::testing::doc_names(n);
  for (int i = n - 1; i > 0; --i) std::swap(in.ranking[i], in.ranking[gen.integer(0, i)]);
  for (int i = 0; i < n; ++i) {
    if (gen.coin(0.8)) in.judgments[in.ranking[i]] = gen.integer(0, 3);
  }
  // Judged documents that were never retrieved still count towards the ideal.
  for (int extra = gen.integer(0, 2); extra > 0; --extra) {
    in.judgments["x" + std::to_string(extra)] = gen.integer(0, 3);
  }
  in.k = gen.integer(1, 7);
  in.gain = gen.coin() ? Gain::kLinear : Gain::kExponential;
  return in;
}

}  // namespace

TEST_CASE("ndcg hand cases") {
  const QueryJudgments rels{{"d1", 1}, {"d2", 0}};
  const std::vector<std::string> ideal{"d1", "d2"}, inverted{"d2", "d1"};
  CHECK(ndcg_at_k(ideal, rels, {}) == 1.0);
  CHECK(ndcg_at_k(inverted, rels, {}) == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-15));
  CHECK(ndcg_at_k(inverted, rels, {}) == doctest::Approx(0.63093).epsilon(1e-5));

  const QueryJudgments zeros{{"d1", 0}, {"d2", 0}};
  CHECK(ndcg_at_k(ideal, zeros, {}) == 0.0);
  CHECK(ndcg_at_k(ideal, QueryJudgments{}, {}) == 0.0);

  // Exponential gain: grade 2 -> 3, grade 1 -> 1.
  const QueryJudgments graded{{"a", 2}, {"b", 1}};
  const std::vector<std::string> ba{"b", "a"};
  const double expected = (1.0 + 3.0 / std::log2(3.0)) / (3.0 + 1.0 / std::log2(3.0));
  CHECK(ndcg_at_k(ba, graded, {10, Gain::kExponential}) ==
        doctest::Approx(expected).epsilon(1e-14));

  CHECK_THROWS_AS(ndcg_at_k(std::vector<std::string>{}, rels, {}), Error);
  CHECK_THROWS_AS(ndcg_at_k(ideal, rels, {0, Gain::kLinear}), Error);
}

TEST_CASE("mean_ndcg") {
  CHECK(mean_ndcg(std::vector<double>{1.0, 0.0}) == 0.5);
  CHECK(mean_ndcg(std::vector<double>{0.63093}) == 0.63093);
  CHECK(mean_ndcg(std::vector<double>{0.2, 0.4, 0.6}) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_AS(mean_ndcg(std::vector<double>{}), Error);
}

TEST_CASE("qrels parsing") {
  std::istringstream in("q1 0 d1 2\n\nq1 0 d2 0\nq2 Q0 d9 1\n");
  const Qrels q = parse_trec_qrels(in);
  CHECK(q.num_queries() == 2);
  CHECK(q.for_query("q1").at("d1") == 2);
  CHECK(q.has_positive("q1"));
  CHECK_FALSE(q.contains("q3"));
  CHECK(q.for_query("q3").empty());

  std::istringstream bad_fields("q1 0 d1\n");
  CHECK_THROWS_AS(parse_trec_qrels(bad_fields), Error);
  std::istringstream bad_grade("q1 0 d1 x\n");
  CHECK_THROWS_AS(parse_trec_qrels(bad_grade), Error);
  std::istringstream negative("q1 0 d1 -1\n");
  CHECK_THROWS_AS(parse_trec_qrels(negative), Error);
}

TEST_CASE("property: ndcg matches the brute-force definition") {
  Gen gen(21);
  for (int trial = 0; trial < 400; ++trial) {
    const Instance in = random_instance(gen);
    const double v = ndcg_at_k(in.ranking, in.judgments, {in.k, in.gain});
    CHECK(std::abs(v - brute_force_ndcg(in.ranking, in.judgments, in.k, in.gain)) <= 1e-12);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-15);
  }
}

TEST_CASE("property: ndcg ordering invariants") {
  Gen gen(22);
  for (int trial = 0; trial < 300; ++trial) {
    const Instance in = random_instance(gen);
    const MetricConfig cfg{in.k, in.gain};
    const double base = ndcg_at_k(in.ranking, in.judgments, cfg);

    // Shuffling below the cutoff changes nothing.
    auto tail = in.ranking;
    if (tail.size() > static_cast<std::size_t>(in.k) + 1) {
      std::reverse(tail.begin() + in.k, tail.end());
      CHECK(ndcg_at_k(tail, in.judgments, cfg) == base);
    }

    // Promoting a better document over its neighbour never hurts.
    auto grade = [&](const std::string& d) {
      auto it = in.judgments.find(d);
      return it == in.judgments.end() ? 0 : it->second;
    };
    for (std::size_t r = 0; r + 1 < in.ranking.size() && r + 1 < static_cast<std::size_t>(in.k); ++r) {
      if (grade(in.ranking[r + 1]) > grade(in.ranking[r])) {
        auto swapped = in.ranking;
        std::swap(swapped[r], swapped[r + 1]);
        CHECK(ndcg_at_k(swapped, in.judgments, cfg) >= base);
      }
    }

    // A fully sorted ranking containing every positive is ideal.
    auto sorted = in.ranking;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [&](const auto& a, const auto& b) { return grade(a) > grade(b); });
    bool all_positives_present = true;
    for (const auto& [d, g] : in.judgments) {
      if (g > 0 && std::find(sorted.begin(), sorted.end(), d) == sorted.end()) {
        all_positives_present = false;
      }
    }
    const double best = ndcg_at_k(sorted, in.judgments, cfg);
    if (all_positives_present && best > 0.0) CHECK(best == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("RankObjective agrees with ndcg_at_k over rank()") {
  Gen gen(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = gen.integer(1, 12);
    const auto docs = routehead::testing::doc_names(n);
    QueryJudgments j;
    for (const auto& d : docs) {
      if (gen.coin(0.3)) j[d] = gen.integer(1, 3);
    }
    std::vector<double> scores(n);
    for (double& s : scores) s = gen.integer(0, 3) * 0.5;
    const MetricConfig cfg{gen.integer(1, 10), gen.coin() ? Gain::kLinear : Gain::kExponential};
    const AggregatedScores agg{"q", docs, scores, {HeadId{}}};
    CHECK(RankObjective(docs, j, cfg).evaluate(scores) == ndcg_at_k(rank(agg), j, cfg));
  }
}
