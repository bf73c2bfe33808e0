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

// Synthetic extractor dumps for exercising the pipeline without an LM.
//
// Queries fall into clusters. Every cluster owns a few "signal" heads whose
// scores track the relevance grades; for queries of any other cluster those
// same heads, like all remaining heads, emit uniform noise. Query embeddings
// are the cluster prototype plus Gaussian jitter, so the cluster (and hence
// the useful head set) is recoverable from the embedding.

#include <cstdint>
#include <filesystem>
#include <vector>

namespace routehead {

struct SynthConfig {
  std::uint64_t seed = 7;
  std::uint32_t layers = 4;
  std::uint32_t heads_per_layer = 8;
  std::uint32_t d_q = 16;
  std::uint32_t docs_per_query = 30;
  std::uint32_t relevant_per_query = 3;
  std::uint32_t train_queries = 200;
  std::uint32_t test_queries = 100;
  std::uint32_t clusters = 4;
  std::uint32_t signal_heads_per_cluster = 2;
  double signal_scale = 0.04;     // per relevance grade
  double signal_noise = 0.05;     // uniform jitter on signal heads
  double noise_scale = 0.1;       // uniform range of noise heads
  double embedding_noise = 0.3;
  bool packed_scores = false;
};

struct SynthSummary {
  // signal_heads[c] = flat indices carrying signal for cluster c
  std::vector<std::vector<std::uint32_t>> signal_heads;
  std::filesystem::path train_dir;
  std::filesystem::path test_dir;
};

/// Writes `<out>/train` and `<out>/test` dump directories, each with its own
/// qrels.txt and candidates.run.
SynthSummary write_synthetic(const SynthConfig& config,
                             const std::filesystem::path& out);

}  // namespace routehead
