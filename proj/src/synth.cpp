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

#include "routehead/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <fmt/format.h>
#include <json.hpp>

#include "routehead/artifacts.hpp"
#include "routehead/error.hpp"

namespace routehead {

namespace {

using nlohmann::json;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  double normal() {
    // Box-Muller; u1 is kept away from zero.
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

void write_split(const SynthConfig& config, const std::string& prefix,
                 std::uint32_t num_queries,
                 const std::vector<std::vector<double>>& prototypes,
                 const std::vector<std::vector<std::uint32_t>>& signal_heads,
                 Rng& rng, const std::filesystem::path& dir) {
  const std::uint32_t num_heads = config.layers * config.heads_per_layer;
  const std::uint32_t n = config.docs_per_query;

  json meta = {{"dataset", fmt::format("synthetic-{}", prefix)},
               {"model", "synthetic"},
               {"layers", config.layers},
               {"heads_per_layer", config.heads_per_layer},
               {"d_q", config.d_q}};
  std::string docs_jsonl, scores_jsonl, embeddings_jsonl, qrels, run;
  std::vector<ScoreRecord> packed;

  for (std::uint32_t q = 0; q < num_queries; ++q) {
    const std::string qid = fmt::format("{}-{:04d}", prefix, q);
    const std::size_t cluster = q % prototypes.size();

    std::vector<std::string> doc_ids;
    for (std::uint32_t i = 0; i < n; ++i) doc_ids.push_back(fmt::format("{}-d{:03d}", qid, i));

    std::vector<int> grades(n, 0);
    std::vector<std::size_t> slots(n);
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    rng.shuffle(slots);
    for (std::uint32_t r = 0; r < config.relevant_per_query && r < n; ++r) {
      grades[slots[r]] = 1 + static_cast<int>(rng.below(2));
      qrels += fmt::format("{} 0 {} {}\n", qid, doc_ids[slots[r]], grades[slots[r]]);
    }

    docs_jsonl += json({{"query_id", qid}, {"doc_ids", doc_ids}}).dump() + "\n";

    const auto& signal = signal_heads[cluster];
    for (std::uint32_t h = 0; h < num_heads; ++h) {
      const bool is_signal = std::find(signal.begin(), signal.end(), h) != signal.end();
      std::vector<float> scores(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        const double s = is_signal
                             ? config.signal_scale * grades[i] + config.signal_noise * rng.uniform()
                             : config.noise_scale * rng.uniform();
        scores[i] = static_cast<float>(s);
      }
      if (config.packed_scores) {
        packed.push_back({qid, h, scores});
      } else {
        scores_jsonl += json({{"query_id", qid}, {"head_flat", h}, {"scores", scores}}).dump() + "\n";
      }
    }

    std::vector<float> embedding(config.d_q);
    for (std::uint32_t k = 0; k < config.d_q; ++k) {
      embedding[k] = static_cast<float>(prototypes[cluster][k] +
                                        config.embedding_noise * rng.normal());
    }
    embeddings_jsonl += json({{"query_id", qid}, {"embedding", embedding}}).dump() + "\n";

    // First-stage candidates in an arbitrary order with decreasing scores.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::uint32_t r = 0; r < n; ++r) {
      run += fmt::format("{} Q0 {} {} {} bm25\n", qid, doc_ids[order[r]], r + 1, n - r);
    }
  }

  write_json_atomic(dir / "meta.json", meta);
  write_file_atomic(dir / "docs.jsonl", docs_jsonl);
  if (config.packed_scores) {
    write_file_atomic(dir / "scores.bin", encode_packed_scores(packed));
  } else {
    write_file_atomic(dir / "scores.jsonl", scores_jsonl);
  }
  write_file_atomic(dir / "embeddings.jsonl", embeddings_jsonl);
  write_file_atomic(dir / "qrels.txt", qrels);
  write_file_atomic(dir / "candidates.run", run);
}

}  // namespace

SynthSummary write_synthetic(const SynthConfig& config,
                             const std::filesystem::path& out) {
  const std::uint32_t num_heads = config.layers * config.heads_per_layer;
  if (num_heads == 0 || config.d_q == 0 || config.docs_per_query == 0 ||
      config.clusters == 0 || config.train_queries == 0) {
    throw Error(ErrorCategory::kInvalidArgument,
                "synthetic dimensions and counts must be positive");
  }
  if (config.clusters * config.signal_heads_per_cluster > num_heads) {
    throw Error(ErrorCategory::kInvalidArgument,
                fmt::format("{} clusters x {} signal heads exceed M={}",
                            config.clusters, config.signal_heads_per_cluster,
                            num_heads));
  }

  Rng rng(config.seed);
  std::vector<std::uint32_t> heads(num_heads);
  std::iota(heads.begin(), heads.end(), 0u);
  rng.shuffle(heads);

  SynthSummary summary;
  std::size_t next = 0;
  for (std::uint32_t c = 0; c < config.clusters; ++c) {
    std::vector<std::uint32_t> signal(heads.begin() + next,
                                      heads.begin() + next + config.signal_heads_per_cluster);
    std::sort(signal.begin(), signal.end());
    next += config.signal_heads_per_cluster;
    summary.signal_heads.push_back(std::move(signal));
  }

  std::vector<std::vector<double>> prototypes(config.clusters,
                                              std::vector<double>(config.d_q));
  for (auto& p : prototypes) {
    for (double& v : p) v = rng.normal();
  }

  summary.train_dir = out / "train";
  summary.test_dir = out / "test";
  write_split(config, "train", config.train_queries, prototypes,
              summary.signal_heads, rng, summary.train_dir);
  if (config.test_queries > 0) {
    write_split(config, "test", config.test_queries, prototypes,
                summary.signal_heads, rng, summary.test_dir);
  }

  json truth = json::array();
  for (const auto& s : summary.signal_heads) truth.push_back(s);
  write_json_atomic(out / "signal_heads.json", {{"signal_heads", truth}});
  return summary;
}

}  // namespace routehead
