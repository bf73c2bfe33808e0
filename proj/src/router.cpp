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

#include "routehead/router.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "routehead/error.hpp"

namespace routehead {

namespace {

constexpr double kProbFloor = 1e-12;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Bit-reproducible draws: mt19937_64 output is fully specified, the
// <random> distributions are not.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void fill_uniform(std::vector<double>& values, std::mt19937_64& rng) {
  for (double& v : values) v = -0.1 + 0.2 * uniform01(rng);
}

void check_dims(const RouterParams& params, std::size_t embedding_size,
                std::size_t label_size) {
  params.check();
  if (embedding_size != params.d_q) {
    throw Error(ErrorCategory::kDimension,
                fmt::format("query embedding has {} dims, router expects {}",
                            embedding_size, params.d_q));
  }
  if (label_size != params.num_heads) {
    throw Error(ErrorCategory::kDimension,
                fmt::format("label has {} heads, router has {}", label_size,
                            params.num_heads));
  }
}

// g = W1^T e_q + b
std::vector<double> project(const RouterParams& params,
                            std::span<const double> e_q) {
  std::vector<double> g = params.bias;
  for (std::size_t i = 0; i < params.d_q; ++i) {
    const double e = e_q[i];
    const double* w = params.projection.data() + i * params.d_h;
    for (std::size_t j = 0; j < params.d_h; ++j) g[j] += w[j] * e;
  }
  return g;
}

void axpy(double a, const std::vector<double>& x, std::vector<double>& y) {
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += a * x[k];
}

}  // namespace

RouterParams RouterParams::initialize(std::size_t d_q, std::size_t d_h,
                                      std::size_t num_heads,
                                      std::uint64_t seed) {
  if (d_q == 0 || d_h == 0 || num_heads == 0) {
    throw Error(ErrorCategory::kInvalidArgument,
                "router dimensions must all be positive");
  }
  RouterParams params;
  params.d_q = d_q;
  params.d_h = d_h;
  params.num_heads = num_heads;
  params.seed = seed;
  params.head_embeddings.resize(num_heads * d_h);
  params.projection.resize(d_q * d_h);
  params.bias.assign(d_h, 0.0);
  params.output.resize(d_h);
  std::mt19937_64 rng(seed);
  fill_uniform(params.head_embeddings, rng);
  fill_uniform(params.projection, rng);
  fill_uniform(params.output, rng);
  return params;
}

RouterParams RouterParams::zeros_like(const RouterParams& other) {
  RouterParams z = other;
  std::fill(z.head_embeddings.begin(), z.head_embeddings.end(), 0.0);
  std::fill(z.projection.begin(), z.projection.end(), 0.0);
  std::fill(z.bias.begin(), z.bias.end(), 0.0);
  std::fill(z.output.begin(), z.output.end(), 0.0);
  return z;
}

void RouterParams::check() const {
  if (head_embeddings.size() != num_heads * d_h ||
      projection.size() != d_q * d_h || bias.size() != d_h ||
      output.size() != d_h) {
    throw Error(ErrorCategory::kDimension,
                fmt::format("router parameter shapes inconsistent with "
                            "d_q={} d_h={} K={}",
                            d_q, d_h, num_heads));
  }
}

RouterOutput forward(const RouterParams& params, std::span<const double> e_q) {
  check_dims(params, e_q.size(), params.num_heads);
  const std::vector<double> g = project(params, e_q);
  RouterOutput out;
  out.alpha.resize(params.num_heads);
  out.p.resize(params.num_heads);
  for (std::size_t m = 0; m < params.num_heads; ++m) {
    const double* e_h = params.head_embeddings.data() + m * params.d_h;
    double a = 0.0;
    for (std::size_t j = 0; j < params.d_h; ++j) {
      a += params.output[j] * (e_h[j] * g[j]);
    }
    out.alpha[m] = a;
    out.p[m] = sigmoid(a);
  }
  return out;
}

LossParts loss(const RouterOutput& output, std::span<const std::uint8_t> y,
               double lambda) {
  if (y.size() != output.p.size()) {
    throw Error(ErrorCategory::kDimension,
                fmt::format("label has {} heads, router output has {}",
                            y.size(), output.p.size()));
  }
  LossParts parts;
  double p_sum = 0.0;
  for (std::size_t m = 0; m < y.size(); ++m) {
    const double p = std::clamp(output.p[m], kProbFloor, 1.0 - kProbFloor);
    parts.route -= y[m] ? std::log(p) : std::log(1.0 - p);
    p_sum += output.p[m];
  }
  parts.sparse = lambda * p_sum;
  parts.total = parts.route + parts.sparse;
  return parts;
}

RouterParams backward(const RouterParams& params, std::span<const double> e_q,
                      std::span<const std::uint8_t> y, double lambda) {
  check_dims(params, e_q.size(), y.size());
  const std::size_t d_h = params.d_h;
  const std::vector<double> g = project(params, e_q);
  const RouterOutput out = forward(params, e_q);

  RouterParams grad = RouterParams::zeros_like(params);
  std::vector<double> dg(d_h, 0.0);
  for (std::size_t m = 0; m < params.num_heads; ++m) {
    const double p = out.p[m];
    const double delta = (p - static_cast<double>(y[m])) + lambda * p * (1.0 - p);
    const double* e_h = params.head_embeddings.data() + m * d_h;
    double* de_h = grad.head_embeddings.data() + m * d_h;
    for (std::size_t j = 0; j < d_h; ++j) {
      de_h[j] = delta * params.output[j] * g[j];
      grad.output[j] += delta * e_h[j] * g[j];
      dg[j] += delta * params.output[j] * e_h[j];
    }
  }
  grad.bias = dg;
  for (std::size_t i = 0; i < params.d_q; ++i) {
    double* dw = grad.projection.data() + i * d_h;
    for (std::size_t j = 0; j < d_h; ++j) dw[j] = e_q[i] * dg[j];
  }
  return grad;
}

LossParts evaluate_loss(const RouterParams& params,
                        std::span<const TrainingExample> dataset,
                        double lambda) {
  if (dataset.empty()) {
    throw Error(ErrorCategory::kInvalidArgument, "empty dataset");
  }
  LossParts sum;
  for (const TrainingExample& ex : dataset) {
    const LossParts l = loss(forward(params, ex.embedding), ex.y, lambda);
    sum.total += l.total;
    sum.route += l.route;
    sum.sparse += l.sparse;
  }
  const double n = static_cast<double>(dataset.size());
  return {sum.total / n, sum.route / n, sum.sparse / n};
}

TrainResult train(std::span<const TrainingExample> dataset,
                  const TrainConfig& config) {
  if (dataset.empty()) {
    throw Error(ErrorCategory::kInvalidArgument, "empty dataset");
  }
  if (config.batch_size == 0 || config.epochs == 0 || config.hidden_dim == 0) {
    throw Error(ErrorCategory::kInvalidArgument,
                "epochs, batch size and hidden dim must be positive");
  }
  if (!(config.learning_rate > 0.0) || !(config.lambda >= 0.0)) {
    throw Error(ErrorCategory::kInvalidArgument,
                "learning rate must be > 0 and lambda >= 0");
  }
  const std::size_t d_q = dataset.front().embedding.size();
  const std::size_t k = dataset.front().y.size();
  for (const TrainingExample& ex : dataset) {
    if (ex.embedding.size() != d_q || ex.y.size() != k) {
      throw Error(ErrorCategory::kDimension,
                  "training examples disagree on embedding or label size");
    }
  }

  TrainResult result;
  result.params = RouterParams::initialize(d_q, config.hidden_dim, k, config.seed);
  RouterParams& params = result.params;

  // Separate stream so the batch order does not shift with parameter count.
  std::mt19937_64 order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[order_rng() % i]);
    }
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      RouterParams grad = RouterParams::zeros_like(params);
      for (std::size_t s = start; s < end; ++s) {
        const TrainingExample& ex = dataset[order[s]];
        const RouterParams g = backward(params, ex.embedding, ex.y, config.lambda);
        axpy(1.0, g.head_embeddings, grad.head_embeddings);
        axpy(1.0, g.projection, grad.projection);
        axpy(1.0, g.bias, grad.bias);
        axpy(1.0, g.output, grad.output);
      }
      const double step = -config.learning_rate / static_cast<double>(end - start);
      axpy(step, grad.head_embeddings, params.head_embeddings);
      axpy(step, grad.projection, params.projection);
      axpy(step, grad.bias, params.bias);
      axpy(step, grad.output, params.output);
    }
    result.log.push_back({epoch + 1, evaluate_loss(params, dataset, config.lambda)});
    if (!std::isfinite(result.log.back().mean.total)) {
      throw Error(ErrorCategory::kDegenerate,
                  fmt::format("training diverged at epoch {} (non-finite loss); "
                              "lower the learning rate",
                              epoch + 1));
    }
  }
  return result;
}

std::vector<std::size_t> select_positions(std::span<const double> p,
                                          double threshold,
                                          std::size_t fallback_top_n,
                                          std::span<const std::uint32_t> tie_keys) {
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < p.size(); ++m) {
    if (p[m] > threshold) out.push_back(m);
  }
  if (!out.empty() || p.empty()) return out;

  auto key = [&](std::size_t m) -> std::uint64_t {
    return tie_keys.empty() ? m : tie_keys[m];
  };
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (p[a] != p[b]) return p[a] > p[b];
    return key(a) < key(b);
  });
  const std::size_t n = std::clamp<std::size_t>(fallback_top_n, 1, p.size());
  out.assign(order.begin(), order.begin() + n);
  std::sort(out.begin(), out.end());
  return out;
}

HeadSet select_heads(const RouterParams& params, std::span<const double> e_q,
                     const HeadPool& pool, const TrainConfig& config) {
  if (pool.size() != params.num_heads) {
    throw Error(ErrorCategory::kDimension,
                fmt::format("router has {} heads, pool has {}", params.num_heads,
                            pool.size()));
  }
  const RouterOutput out = forward(params, e_q);
  std::vector<std::uint32_t> flats;
  flats.reserve(pool.size());
  for (const HeadId& h : pool.heads) flats.push_back(h.flat);
  HeadSet heads;
  for (std::size_t m : select_positions(out.p, config.threshold,
                                        config.fallback_top_n, flats)) {
    heads.push_back(pool.heads[m]);
  }
  std::sort(heads.begin(), heads.end());
  return heads;
}

}  // namespace routehead
