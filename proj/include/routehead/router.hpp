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

// Query-to-head router. Each pool head owns an embedding; a query embedding is
// projected into the same space, gated elementwise by the head embedding and
// reduced to a logit, then squashed by an independent sigmoid per head.
//
//   g        = W1^T e_q + b
//   alpha_m  = W2^T (E_m * g)
//   p_m      = sigmoid(alpha_m)
//
// Training minimizes sum_m BCE(p_m, y_m) + lambda * sum_m p_m per query,
// averaged over the mini-batch.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "routehead/pool.hpp"
#include "routehead/relevance.hpp"

namespace routehead {

struct QueryEmbedding {
  std::string query_id;
  std::vector<double> values;
};

/// Router weights. Matrices are row-major: `head_embeddings` is K x d_h,
/// `projection` (W1) is d_q x d_h.
struct RouterParams {
  std::size_t d_q = 0;
  std::size_t d_h = 0;
  std::size_t num_heads = 0;
  std::uint64_t seed = 0;
  std::vector<double> head_embeddings;
  std::vector<double> projection;
  std::vector<double> bias;
  std::vector<double> output;

  /// Uniform [-0.1, 0.1] weights from `seed`, zero bias.
  static RouterParams initialize(std::size_t d_q, std::size_t d_h,
                                 std::size_t num_heads, std::uint64_t seed);
  static RouterParams zeros_like(const RouterParams& other);

  void check() const;
};

struct RouterOutput {
  std::vector<double> alpha;
  std::vector<double> p;
};

RouterOutput forward(const RouterParams& params, std::span<const double> e_q);

struct LossParts {
  double total = 0.0;
  double route = 0.0;
  double sparse = 0.0;
};

LossParts loss(const RouterOutput& output, std::span<const std::uint8_t> y,
               double lambda);

/// Gradient of the total loss for one query, laid out like RouterParams.
RouterParams backward(const RouterParams& params, std::span<const double> e_q,
                      std::span<const std::uint8_t> y, double lambda);

struct TrainConfig {
  double lambda = 0.01;
  double learning_rate = 0.05;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t hidden_dim = 64;
  double threshold = 0.5;
  std::size_t fallback_top_n = 1;
};

struct TrainingExample {
  std::vector<double> embedding;
  std::vector<std::uint8_t> y;
};

struct EpochLoss {
  std::size_t epoch = 0;
  LossParts mean;
};

struct TrainResult {
  RouterParams params;
  std::vector<EpochLoss> log;
};

/// Seeded mini-batch gradient descent. Batches follow a per-epoch shuffle
/// drawn from the same seed, so results are reproducible bit for bit.
TrainResult train(std::span<const TrainingExample> dataset,
                  const TrainConfig& config);

/// Mean losses of `params` over `dataset`.
LossParts evaluate_loss(const RouterParams& params,
                        std::span<const TrainingExample> dataset, double lambda);

/// Positions with p > threshold; if none, the `fallback_top_n` largest p.
/// `tie_keys` orders equal probabilities (smaller key first); defaults to the
/// position itself.
std::vector<std::size_t> select_positions(std::span<const double> p,
                                          double threshold,
                                          std::size_t fallback_top_n,
                                          std::span<const std::uint32_t> tie_keys = {});

HeadSet select_heads(const RouterParams& params, std::span<const double> e_q,
                     const HeadPool& pool, const TrainConfig& config);

}  // namespace routehead
