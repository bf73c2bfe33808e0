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

#include <cstddef>
#include <istream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace routehead {

/// Graded judgments for one query: doc id -> grade (>= 0).
using QueryJudgments = std::unordered_map<std::string, int>;

/// TREC qrels keyed by query id. Unjudged documents have grade 0.
class Qrels {
 public:
  void set(const std::string& query_id, const std::string& doc_id, int grade);

  /// Judgments for `query_id`, or an empty map if the query was never judged.
  const QueryJudgments& for_query(const std::string& query_id) const;
  bool contains(const std::string& query_id) const;
  bool has_positive(const std::string& query_id) const;
  std::size_t num_queries() const { return judgments_.size(); }

 private:
  std::unordered_map<std::string, QueryJudgments> judgments_;
};

/// Parses `query_id iter doc_id grade` lines; blank lines are skipped.
Qrels parse_trec_qrels(std::istream& in, const std::string& source = "<qrels>");
Qrels read_trec_qrels(const std::string& path);

enum class Gain { kLinear, kExponential };

struct MetricConfig {
  int cutoff = 10;
  Gain gain = Gain::kLinear;
};

Gain parse_gain(const std::string& name);
std::string gain_name(Gain gain);

/// DCG@k / IDCG@k with 1/log2(rank + 1) discount. The ideal ordering is built
/// from every positively judged document of the query, whether or not it was
/// retrieved. Returns 0 when the query has no positive judgment.
double ndcg_at_k(std::span<const std::string> ranking,
                 const QueryJudgments& judgments, const MetricConfig& config);

double mean_ndcg(std::span<const double> per_query);

/// nDCG of the ranking induced by a score vector over a fixed candidate list.
/// Grades and the ideal DCG are resolved once so repeated evaluation (as in
/// head-set search) only pays for the sort.
class RankObjective {
 public:
  RankObjective(std::span<const std::string> doc_ids,
                const QueryJudgments& judgments, const MetricConfig& config);

  double evaluate(std::span<const double> scores) const;
  double ideal_dcg() const { return ideal_dcg_; }

 private:
  std::vector<std::string> doc_ids_;
  std::vector<int> grades_;
  MetricConfig config_;
  double ideal_dcg_ = 0.0;
};

}  // namespace routehead
