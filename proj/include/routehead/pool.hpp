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
#include <span>
#include <string>
#include <vector>

#include "routehead/metrics.hpp"
#include "routehead/relevance.hpp"

namespace routehead {

/// A query's head score matrix together with its judgments.
struct QueryInstance {
  HeadScoreMatrix matrix;
  QueryJudgments judgments;
};

/// The compact search space: the K heads with the best solo nDCG, best first.
struct HeadPool {
  std::vector<HeadId> heads;
  std::vector<double> solo_scores;
  std::string provenance;

  std::size_t size() const { return heads.size(); }
};

/// Mean nDCG over `queries` when `head` alone ranks the candidates.
double solo_head_score(const HeadId& head, std::span<const QueryInstance> queries,
                       const MetricConfig& config = {});

/// Top-`k` heads by solo score, ties by ascending flat index.
HeadPool build_pool(std::span<const HeadId> all_heads,
                    std::span<const QueryInstance> queries, std::size_t k,
                    const MetricConfig& config = {},
                    std::string provenance = {});

/// First `k` heads of the pool (the static top-k baseline).
HeadPool truncate(const HeadPool& pool, std::size_t k);

}  // namespace routehead
