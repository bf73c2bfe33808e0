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
#include <vector>

#include <doctest.h>

#include "routehead/error.hpp"
#include "routehead/router.hpp"
#include "test_util.hpp"

using namespace routehead;
using routehead::testing::Gen;

namespace {

RouterParams random_params(Gen& gen, std::size_t d_q, std::size_t d_h, std::size_t k) {
  RouterParams p = RouterParams::initialize(d_q, d_h, k, 1);
  for (auto* v : {&p.head_embeddings, &p.projection, &p.bias, &p.output}) {
    for (double& x : *v) x = gen.uniform(-1.0, 1.0);
  }
  return p;
}

std::vector<double*> all_weights(RouterParams& p) {
  std::vector<double*> out;
  for (auto* v : {&p.head_embeddings, &p.projection, &p.bias, &p.output}) {
    for (double& x : *v) out.push_back(&x);
  }
  return out;
}

// Clustered embeddings; heads 2c and 2c+1 are positive for cluster c.
std::vector<TrainingExample> separable(Gen& gen, std::size_t n, std::size_t d_q,
                                       std::size_t clusters, std::size_t k) {
  std::vector<std::vector<double>> protos(clusters, std::vector<double>(d_q));
  for (auto& p : protos) {
    for (double& x : p) x = gen.uniform(-1.0, 1.0);
  }
  std::vector<TrainingExample> data;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % clusters;
    TrainingExample ex;
    for (double x : protos[c]) ex.embedding.push_back(x + gen.uniform(-0.1, 0.1));
    ex.y.assign(k, 0);
    ex.y[(2 * c) % k] = 1;
    ex.y[(2 * c + 1) % k] = 1;
    data.push_back(std::move(ex));
  }
  return data;
}

double micro_f1(const RouterParams& params, const std::vector<TrainingExample>& data) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& ex : data) {
    const RouterOutput out = forward(params, ex.embedding);
    for (std::size_t m = 0; m < ex.y.size(); ++m) {
      const bool pred = out.p[m] > 0.5;
      tp += pred && ex.y[m];
      fp += pred && !ex.y[m];
      fn += !pred && ex.y[m];
    }
  }
  return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace

TEST_CASE("forward hand cases") {
  SUBCASE("zero output weights give one half") {
    RouterParams p = RouterParams::initialize(3, 4, 5, 9);
    std::fill(p.output.begin(), p.output.end(), 0.0);
    const RouterOutput out = forward(p, std::vector<double>{1.0, -2.0, 0.5});
    for (double v : out.p) CHECK(v == 0.5);
  }
  SUBCASE("zero head embedding gives one half for that head") {
    RouterParams p = RouterParams::initialize(3, 4, 2, 9);
    std::fill(p.head_embeddings.begin(), p.head_embeddings.begin() + 4, 0.0);
    const RouterOutput out = forward(p, std::vector<double>{1.0, -2.0, 0.5});
    CHECK(out.alpha[0] == 0.0);
    CHECK(out.p[0] == 0.5);
  }
  SUBCASE("one dimensional case") {
    RouterParams p = RouterParams::initialize(1, 1, 1, 0);
    p.projection = {1.0};
    p.bias = {0.0};
    p.head_embeddings = {2.0};
    p.output = {3.0};
    const RouterOutput out = forward(p, std::vector<double>{1.0});
    CHECK(out.alpha[0] == doctest::Approx(6.0));
    CHECK(out.p[0] == doctest::Approx(0.99753).epsilon(1e-5));
  }
  SUBCASE("dimension mismatch") {
    const RouterParams p = RouterParams::initialize(3, 4, 2, 9);
    CHECK_THROWS_AS(forward(p, std::vector<double>{1.0}), Error);
  }
}

TEST_CASE("loss hand cases") {
  const RouterOutput half{{0.0, 0.0}, {0.5, 0.5}};
  const std::vector<std::uint8_t> y{1, 0};
  const LossParts plain = loss(half, y, 0.0);
  CHECK(plain.total == doctest::Approx(2.0 * std::log(2.0)));
  CHECK(plain.total == doctest::Approx(1.38629).epsilon(1e-5));
  const LossParts sparse = loss(half, y, 0.1);
  CHECK(sparse.sparse == doctest::Approx(0.1));
  CHECK(sparse.total == doctest::Approx(1.48629).epsilon(1e-5));

  const RouterOutput saturated{{0.0}, {0.0}};
  CHECK(std::isfinite(loss(saturated, std::vector<std::uint8_t>{1}, 0.0).total));
  CHECK_THROWS_AS(loss(half, std::vector<std::uint8_t>{1}, 0.0), Error);
}

TEST_CASE("property: analytic gradient matches finite differences") {
  Gen gen(51);
  const double h = 1e-5;
  for (int config = 0; config < 24; ++config) {
    const std::size_t d_q = gen.integer(1, 5), d_h = gen.integer(1, 5), k = gen.integer(1, 4);
    RouterParams params = random_params(gen, d_q, d_h, k);
    std::vector<double> e(d_q);
    for (double& x : e) x = gen.uniform(-1.0, 1.0);
    std::vector<std::uint8_t> y(k);
    for (auto& v : y) v = gen.coin() ? 1 : 0;
    const double lambda = gen.coin() ? 0.0 : gen.uniform(0.0, 0.5);

    RouterParams grad = backward(params, e, y, lambda);
    const auto w = all_weights(params);
    const auto g = all_weights(grad);
    REQUIRE(w.size() == g.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = *w[i];
      *w[i] = saved + h;
      const double up = loss(forward(params, e), y, lambda).total;
      *w[i] = saved - h;
      const double down = loss(forward(params, e), y, lambda).total;
      *w[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double scale = std::max({std::abs(numeric), std::abs(*g[i]), 1e-3});
      CHECK(std::abs(numeric - *g[i]) / scale < 1e-4);
    }
  }
}

TEST_CASE("training") {
  Gen gen(52);
  const std::size_t d_q = 8, k = 8;
  const auto data = separable(gen, 200, d_q, 4, k);

  SUBCASE("separable data is learned") {
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.learning_rate = 0.1;
    cfg.hidden_dim = 16;
    const TrainResult result = train(data, cfg);
    CHECK(micro_f1(result.params, data) >= 0.95);
    REQUIRE(result.log.size() == cfg.epochs);
    CHECK(result.log.back().mean.total < result.log.front().mean.total);
  }
  SUBCASE("strong sparsity suppresses activations") {
    TrainConfig cfg;
    cfg.lambda = 1e3;
    cfg.epochs = 20;
    cfg.learning_rate = 0.01;
    cfg.hidden_dim = 8;
    const TrainResult result = train(data, cfg);
    double mean_p = 0.0;
    for (const auto& ex : data) {
      for (double p : forward(result.params, ex.embedding).p) mean_p += p;
    }
    mean_p /= static_cast<double>(data.size() * k);
    CHECK(mean_p < 0.1);
  }
  SUBCASE("a single sample is memorized") {
    const std::vector<TrainingExample> one{data.front()};
    TrainConfig cfg;
    cfg.lambda = 0.0;
    cfg.epochs = 500;
    cfg.learning_rate = 0.5;
    cfg.hidden_dim = 8;
    const TrainResult result = train(one, cfg);
    CHECK(evaluate_loss(result.params, one, 0.0).route < 0.01);
  }
  SUBCASE("training is deterministic") {
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.hidden_dim = 8;
    cfg.seed = 3;
    const TrainResult a = train(data, cfg);
    const TrainResult b = train(data, cfg);
    CHECK(a.params.projection == b.params.projection);
    CHECK(a.params.output == b.params.output);
    CHECK(a.params.head_embeddings == b.params.head_embeddings);
    cfg.seed = 4;
    CHECK(train(data, cfg).params.output != a.params.output);
  }
  SUBCASE("divergence is reported") {
    TrainConfig cfg;
    cfg.learning_rate = 1e6;
    cfg.epochs = 5;
    try {
      train(data, cfg);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::kDegenerate);
    }
  }
  SUBCASE("invalid configuration") {
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(data, cfg), Error);
    CHECK_THROWS_AS(train(std::vector<TrainingExample>{}, TrainConfig{}), Error);
  }
}

TEST_CASE("head selection") {
  const std::vector<double> p{0.9, 0.1, 0.6};
  CHECK(select_positions(p, 0.5, 1) == std::vector<std::size_t>{0, 2});

  const std::vector<double> low{0.2, 0.4, 0.3};
  CHECK(select_positions(low, 0.5, 1) == std::vector<std::size_t>{1});
  CHECK(select_positions(low, 0.5, 2) == std::vector<std::size_t>{1, 2});

  const std::vector<double> tied{0.3, 0.3, 0.3};
  CHECK(select_positions(tied, 0.5, 1) == std::vector<std::size_t>{0});
  const std::vector<std::uint32_t> keys{9, 4, 7};
  CHECK(select_positions(tied, 0.5, 1, keys) == std::vector<std::size_t>{1});
  // The fallback always keeps at least one head.
  CHECK(select_positions(tied, 0.5, 0) == std::vector<std::size_t>{0});

  RouterParams params = RouterParams::initialize(2, 3, 3, 5);
  std::fill(params.output.begin(), params.output.end(), 0.0);
  const HeadPool pool = routehead::testing::pool_of(routehead::testing::flat_heads(3, 10));
  TrainConfig cfg;
  cfg.threshold = 0.4;
  CHECK(select_heads(params, std::vector<double>{1.0, 1.0}, pool, cfg) == pool.heads);
  cfg.threshold = 0.5;
  CHECK(select_heads(params, std::vector<double>{1.0, 1.0}, pool, cfg) ==
        HeadSet{pool.heads[0]});
}
