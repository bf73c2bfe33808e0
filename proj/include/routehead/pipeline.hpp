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

// The offline pipeline as callable commands. Each command reads its inputs
// from disk, checks their lineage, and writes its artifact atomically. The
// CLI is a thin flag-parsing layer over these functions.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "routehead/artifacts.hpp"
#include "routehead/label_search.hpp"
#include "routehead/metrics.hpp"
#include "routehead/router.hpp"
#include "routehead/synth.hpp"

namespace routehead {

struct IngestOptions {
  fs::path dump_dir;
  fs::path out_dir;
  ScoreFormat format = ScoreFormat::kJsonl;
};

Manifest cmd_ingest(const IngestOptions& options);

struct PoolOptions {
  fs::path manifest;
  fs::path qrels;
  fs::path out;
  std::size_t k = 64;
  MetricConfig metric;
};

PoolArtifact cmd_pool(const PoolOptions& options, std::ostream& log);

struct LabelSearchOptions {
  fs::path manifest;
  fs::path qrels;
  fs::path pool;
  fs::path out;
  SearchConfig search;
  bool verbose = false;
  bool force = false;
};

LabelsArtifact cmd_label_search(const LabelSearchOptions& options, std::ostream& log);

struct TrainOptions {
  fs::path labels;
  fs::path manifest;
  fs::path out;
  TrainConfig train;
  bool force = false;
};

TrainResult cmd_train(const TrainOptions& options, std::ostream& log);

enum class StrategyKind { kRouter, kStaticTopK, kAllHeads };

struct RerankOptions {
  fs::path manifest;
  fs::path candidates;
  fs::path out;
  StrategyKind strategy = StrategyKind::kAllHeads;
  fs::path weights;  // router
  fs::path pool;     // router, static
  std::size_t k = 16;  // static
  double threshold = 0.5;
  std::size_t fallback_top_n = 1;
  std::string tag;
  bool force = false;
};

StrategyKind parse_strategy(const std::string& name);
std::string strategy_name(StrategyKind kind);

struct RerankResult {
  RunFile run;
  std::size_t appended_docs = 0;  // candidates without scores
  std::size_t unscored_queries = 0;
  std::size_t fallback_queries = 0;
};

RerankResult cmd_rerank(const RerankOptions& options, std::ostream& log);

struct EvalOptions {
  fs::path run;
  fs::path qrels;
  MetricConfig metric;
  bool include_unjudged = false;
  fs::path json_out;  // optional
};

struct EvalReport {
  std::vector<std::pair<std::string, double>> per_query;
  std::vector<std::string> excluded;
  double mean = 0.0;
  MetricConfig metric;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

EvalReport cmd_eval(const EvalOptions& options);

struct OracleCheckOptions {
  fs::path manifest;
  fs::path qrels;
  fs::path pool;
  std::size_t pool_subset = 8;
  std::size_t max_size = 3;
  double epsilon = 0.0;
  std::size_t max_swap_iters = 100;
  fs::path json_out;  // optional
};

struct OracleQueryReport {
  std::string query_id;
  double search_ndcg = 0.0;
  double oracle_ndcg = 0.0;
  double gap = 0.0;
};

struct OracleCheckReport {
  std::vector<OracleQueryReport> queries;
  double attainment_rate = 0.0;
  std::size_t negative_gaps = 0;

  nlohmann::json to_json() const;
};

OracleCheckReport cmd_oracle_check(const OracleCheckOptions& options, std::ostream& log);

/// Search and oracle comparison on in-memory instances; used by oracle-check.
OracleCheckReport oracle_check(std::span<const QueryInstance> queries,
                               const HeadPool& pool, const SearchConfig& config,
                               std::size_t max_size);

SynthSummary cmd_synth(const SynthConfig& config, const fs::path& out);

/// Pairs each manifest query with its judgments (empty when unjudged).
std::vector<QueryInstance> make_instances(const Dataset& dataset, const Qrels& qrels);

}  // namespace routehead
