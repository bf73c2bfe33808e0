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

#include "routehead/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "routehead/error.hpp"
#include "routehead/relevance.hpp"

namespace routehead {

namespace {

double gain_of(int grade, Gain gain) {
  if (grade <= 0) return 0.0;
  return gain == Gain::kLinear ? static_cast<double>(grade)
                               : std::exp2(static_cast<double>(grade)) - 1.0;
}

double discount(std::size_t rank_from_one) {
  return 1.0 / std::log2(static_cast<double>(rank_from_one) + 1.0);
}

double ideal_dcg(const QueryJudgments& judgments, const MetricConfig& config) {
  std::vector<int> grades;
  for (const auto& [doc, grade] : judgments) {
    if (grade > 0) grades.push_back(grade);
  }
  std::sort(grades.begin(), grades.end(), std::greater<>());
  const std::size_t limit =
      std::min(grades.size(), static_cast<std::size_t>(config.cutoff));
  double dcg = 0.0;
  for (std::size_t r = 0; r < limit; ++r) {
    dcg += gain_of(grades[r], config.gain) * discount(r + 1);
  }
  return dcg;
}

void check_config(const MetricConfig& config) {
  if (config.cutoff < 1) {
    throw Error(ErrorCategory::kInvalidArgument, "nDCG cutoff must be >= 1");
  }
}

}  // namespace

void Qrels::set(const std::string& query_id, const std::string& doc_id,
                int grade) {
  if (grade < 0) {
    throw Error(ErrorCategory::kFormat,
                fmt::format("negative grade {} for query '{}' doc '{}'", grade,
                            query_id, doc_id));
  }
  judgments_[query_id][doc_id] = grade;
}

const QueryJudgments& Qrels::for_query(const std::string& query_id) const {
  static const QueryJudgments kEmpty;
  auto it = judgments_.find(query_id);
  return it == judgments_.end() ? kEmpty : it->second;
}

bool Qrels::contains(const std::string& query_id) const {
  return judgments_.count(query_id) > 0;
}

bool Qrels::has_positive(const std::string& query_id) const {
  const QueryJudgments& j = for_query(query_id);
  return std::any_of(j.begin(), j.end(),
                     [](const auto& kv) { return kv.second > 0; });
}

Qrels parse_trec_qrels(std::istream& in, const std::string& source) {
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string query_id, iteration, doc_id, grade_text, extra;
    if (!(fields >> query_id)) continue;
    if (!(fields >> iteration >> doc_id >> grade_text) || (fields >> extra)) {
      throw Error(ErrorCategory::kFormat,
                  fmt::format("{}:{}: expected 'query_id iter doc_id grade'",
                              source, line_no));
    }
    int grade = 0;
    try {
      std::size_t used = 0;
      grade = std::stoi(grade_text, &used);
      if (used != grade_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCategory::kFormat,
                  fmt::format("{}:{}: grade '{}' is not an integer", source,
                              line_no, grade_text));
    }
    if (grade < 0) {
      throw Error(ErrorCategory::kFormat,
                  fmt::format("{}:{}: grade must be non-negative", source,
                              line_no));
    }
    qrels.set(query_id, doc_id, grade);
  }
  return qrels;
}

Qrels read_trec_qrels(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCategory::kIo, fmt::format("cannot open qrels '{}'", path));
  }
  return parse_trec_qrels(in, path);
}

Gain parse_gain(const std::string& name) {
  if (name == "linear") return Gain::kLinear;
  if (name == "exponential") return Gain::kExponential;
  throw Error(ErrorCategory::kInvalidArgument,
              fmt::format("unknown gain '{}'", name));
}

std::string gain_name(Gain gain) {
  return gain == Gain::kLinear ? "linear" : "exponential";
}

double ndcg_at_k(std::span<const std::string> ranking,
                 const QueryJudgments& judgments, const MetricConfig& config) {
  check_config(config);
  if (ranking.empty()) {
    throw Error(ErrorCategory::kInvalidArgument, "empty ranking");
  }
  const double ideal = ideal_dcg(judgments, config);
  if (ideal <= 0.0) return 0.0;
  const std::size_t limit =
      std::min(ranking.size(), static_cast<std::size_t>(config.cutoff));
  double dcg = 0.0;
  for (std::size_t r = 0; r < limit; ++r) {
    auto it = judgments.find(ranking[r]);
    if (it != judgments.end()) {
      dcg += gain_of(it->second, config.gain) * discount(r + 1);
    }
  }
  return dcg / ideal;
}

double mean_ndcg(std::span<const double> per_query) {
  if (per_query.empty()) {
    throw Error(ErrorCategory::kInvalidArgument, "mean of empty list");
  }
  return std::accumulate(per_query.begin(), per_query.end(), 0.0) /
         static_cast<double>(per_query.size());
}

RankObjective::RankObjective(std::span<const std::string> doc_ids,
                             const QueryJudgments& judgments,
                             const MetricConfig& config)
    : doc_ids_(doc_ids.begin(), doc_ids.end()), config_(config) {
  check_config(config);
  grades_.reserve(doc_ids_.size());
  for (const std::string& d : doc_ids_) {
    auto it = judgments.find(d);
    grades_.push_back(it == judgments.end() ? 0 : it->second);
  }
  ideal_dcg_ = routehead::ideal_dcg(judgments, config);
}

double RankObjective::evaluate(std::span<const double> scores) const {
  if (scores.size() != doc_ids_.size()) {
    throw Error(ErrorCategory::kDimension,
                fmt::format("score vector has {} entries for {} documents",
                            scores.size(), doc_ids_.size()));
  }
  if (ideal_dcg_ <= 0.0 || scores.empty()) return 0.0;
  const std::vector<std::size_t> order = rank_indices(scores, doc_ids_);
  const std::size_t limit =
      std::min(order.size(), static_cast<std::size_t>(config_.cutoff));
  double dcg = 0.0;
  for (std::size_t r = 0; r < limit; ++r) {
    dcg += gain_of(grades_[order[r]], config_.gain) * discount(r + 1);
  }
  return dcg / ideal_dcg_;
}

}  // namespace routehead
