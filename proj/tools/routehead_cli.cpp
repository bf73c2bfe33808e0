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

// routehead: command-line driver for the offline re-ranking pipeline.

#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "routehead/error.hpp"
#include "routehead/pipeline.hpp"

using namespace routehead;

namespace {

void add_metric_flags(CLI::App* cmd, MetricConfig& metric, std::string& gain) {
  cmd->add_option("--cutoff,-k", metric.cutoff, "nDCG cutoff")
      ->default_val(10)
      ->check(CLI::PositiveNumber);
  cmd->add_option("--gain", gain, "nDCG gain: linear or exponential")
      ->default_val("linear")
      ->check(CLI::IsMember({"linear", "exponential"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-to-head routing for attention-based re-ranking"};
  app.require_subcommand(1);

  // synth
  SynthConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic extractor dump");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--layers", synth.layers)->capture_default_str();
  synth_cmd->add_option("--heads-per-layer", synth.heads_per_layer)->capture_default_str();
  synth_cmd->add_option("--d-q", synth.d_q)->capture_default_str();
  synth_cmd->add_option("--docs", synth.docs_per_query)->capture_default_str();
  synth_cmd->add_option("--relevant", synth.relevant_per_query)->capture_default_str();
  synth_cmd->add_option("--train-queries", synth.train_queries)->capture_default_str();
  synth_cmd->add_option("--test-queries", synth.test_queries)->capture_default_str();
  synth_cmd->add_option("--clusters", synth.clusters)->capture_default_str();
  synth_cmd->add_option("--signal-heads", synth.signal_heads_per_cluster)->capture_default_str();
  synth_cmd->add_option("--signal-scale", synth.signal_scale)->capture_default_str();
  synth_cmd->add_option("--signal-noise", synth.signal_noise)->capture_default_str();
  synth_cmd->add_option("--noise-scale", synth.noise_scale)->capture_default_str();
  synth_cmd->add_option("--embedding-noise", synth.embedding_noise)->capture_default_str();
  synth_cmd->add_flag("--packed", synth.packed_scores, "Write scores.bin instead of scores.jsonl");

  // ingest
  IngestOptions ingest;
  std::string ingest_dump, ingest_out;
  bool ingest_packed = false;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate a dump and build a dataset");
  ingest_cmd->add_option("--dump", ingest_dump, "Extractor dump directory")->required();
  ingest_cmd->add_option("--out", ingest_out, "Dataset directory")->required();
  ingest_cmd->add_flag("--packed", ingest_packed, "Read scores.bin instead of scores.jsonl");

  // pool
  PoolOptions pool;
  std::string pool_manifest, pool_qrels, pool_out, pool_gain;
  auto* pool_cmd = app.add_subcommand("pool", "Build the head pool from solo nDCG");
  pool_cmd->add_option("--manifest", pool_manifest)->required();
  pool_cmd->add_option("--qrels", pool_qrels)->required();
  pool_cmd->add_option("--out", pool_out)->required();
  pool_cmd->add_option("--pool-size,-K", pool.k, "Pool size K")->default_val(64);
  add_metric_flags(pool_cmd, pool.metric, pool_gain);

  // label-search
  LabelSearchOptions labels;
  std::string ls_manifest, ls_qrels, ls_pool, ls_out, ls_gain;
  auto* ls_cmd = app.add_subcommand("label-search", "Search per-query head-set labels");
  ls_cmd->add_option("--manifest", ls_manifest)->required();
  ls_cmd->add_option("--qrels", ls_qrels)->required();
  ls_cmd->add_option("--pool", ls_pool)->required();
  ls_cmd->add_option("--out", ls_out)->required();
  ls_cmd->add_option("--budget,-P", labels.search.budget, "Maximum set size")->default_val(8);
  ls_cmd->add_option("--epsilon", labels.search.epsilon, "Swap tolerance")
      ->default_val(0.0)
      ->check(CLI::NonNegativeNumber);
  ls_cmd->add_option("--max-swap-iters", labels.search.max_swap_iters)->default_val(100);
  ls_cmd->add_flag("--verbose,-v", labels.verbose, "Embed search traces");
  ls_cmd->add_flag("--force", labels.force, "Accept mismatched lineage");
  add_metric_flags(ls_cmd, labels.search.metric, ls_gain);

  // train
  TrainOptions train;
  std::string tr_labels, tr_manifest, tr_out;
  auto* tr_cmd = app.add_subcommand("train", "Train the router on pseudo-labels");
  tr_cmd->add_option("--labels", tr_labels)->required();
  tr_cmd->add_option("--manifest", tr_manifest)->required();
  tr_cmd->add_option("--out", tr_out, "Weights file")->required();
  tr_cmd->add_option("--lambda", train.train.lambda, "Sparsity weight")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  tr_cmd->add_option("--lr", train.train.learning_rate)->capture_default_str()->check(CLI::PositiveNumber);
  tr_cmd->add_option("--epochs", train.train.epochs)->capture_default_str();
  tr_cmd->add_option("--batch-size", train.train.batch_size)->capture_default_str();
  tr_cmd->add_option("--seed", train.train.seed)->capture_default_str();
  tr_cmd->add_option("--d-h", train.train.hidden_dim)->capture_default_str();
  tr_cmd->add_flag("--force", train.force, "Accept mismatched lineage");

  // rerank
  RerankOptions rerank;
  std::string rr_manifest, rr_candidates, rr_out, rr_strategy, rr_weights, rr_pool;
  auto* rr_cmd = app.add_subcommand("rerank", "Re-rank candidate lists");
  rr_cmd->add_option("--manifest", rr_manifest)->required();
  rr_cmd->add_option("--candidates", rr_candidates, "TREC run of first-stage candidates")->required();
  rr_cmd->add_option("--out", rr_out)->required();
  rr_cmd->add_option("--strategy", rr_strategy)
      ->required()
      ->check(CLI::IsMember({"router", "static", "static_top_k", "all", "all_heads"}));
  rr_cmd->add_option("--weights", rr_weights, "Router weights (router)");
  rr_cmd->add_option("--pool", rr_pool, "Pool artifact (router, static)");
  rr_cmd->add_option("--top-k", rerank.k, "Heads kept by the static strategy")->default_val(16);
  rr_cmd->add_option("--threshold", rerank.threshold)->default_val(0.5);
  rr_cmd->add_option("--fallback", rerank.fallback_top_n)->default_val(1);
  rr_cmd->add_option("--tag", rerank.tag);
  rr_cmd->add_flag("--force", rerank.force, "Accept mismatched lineage");

  // eval
  EvalOptions eval;
  std::string ev_run, ev_qrels, ev_json, ev_gain;
  auto* ev_cmd = app.add_subcommand("eval", "nDCG@k of a run");
  ev_cmd->add_option("--run", ev_run)->required();
  ev_cmd->add_option("--qrels", ev_qrels)->required();
  ev_cmd->add_option("--json", ev_json, "Also write a JSON report");
  ev_cmd->add_flag("--include-unjudged", eval.include_unjudged,
                   "Count queries without positive judgments as 0");
  add_metric_flags(ev_cmd, eval.metric, ev_gain);

  // oracle-check
  OracleCheckOptions oracle;
  std::string oc_manifest, oc_qrels, oc_pool, oc_json;
  auto* oc_cmd = app.add_subcommand("oracle-check", "Compare search with exhaustive enumeration");
  oc_cmd->add_option("--manifest", oc_manifest)->required();
  oc_cmd->add_option("--qrels", oc_qrels)->required();
  oc_cmd->add_option("--pool", oc_pool)->required();
  oc_cmd->add_option("--pool-subset", oracle.pool_subset)->default_val(8);
  oc_cmd->add_option("--max-size", oracle.max_size)->default_val(3);
  oc_cmd->add_option("--epsilon", oracle.epsilon)->default_val(0.0);
  oc_cmd->add_option("--json", oc_json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth_cmd) {
      const SynthSummary s = cmd_synth(synth, synth_out);
      std::cerr << fmt::format("synth: wrote {} and {}\n", s.train_dir.string(),
                               s.test_dir.string());
    } else if (*ingest_cmd) {
      ingest.dump_dir = ingest_dump;
      ingest.out_dir = ingest_out;
      ingest.format = ingest_packed ? ScoreFormat::kPacked : ScoreFormat::kJsonl;
      const Manifest m = cmd_ingest(ingest);
      std::cerr << fmt::format("ingest: {} queries, M={}, d_q={}\n", m.queries.size(),
                               m.meta.num_heads(), m.meta.d_q);
      std::cout << m.content_hash << "\n";
    } else if (*pool_cmd) {
      pool.manifest = pool_manifest;
      pool.qrels = pool_qrels;
      pool.out = pool_out;
      pool.metric.gain = parse_gain(pool_gain);
      cmd_pool(pool, std::cerr);
    } else if (*ls_cmd) {
      labels.manifest = ls_manifest;
      labels.qrels = ls_qrels;
      labels.pool = ls_pool;
      labels.out = ls_out;
      labels.search.metric.gain = parse_gain(ls_gain);
      const LabelsArtifact a = cmd_label_search(labels, std::cerr);
      if (!a.failures.empty()) {
        throw Error(ErrorCategory::kDegenerate,
                    fmt::format("{} queries failed label search", a.failures.size()));
      }
    } else if (*tr_cmd) {
      train.labels = tr_labels;
      train.manifest = tr_manifest;
      train.out = tr_out;
      cmd_train(train, std::cerr);
    } else if (*rr_cmd) {
      rerank.manifest = rr_manifest;
      rerank.candidates = rr_candidates;
      rerank.out = rr_out;
      rerank.strategy = parse_strategy(rr_strategy);
      rerank.weights = rr_weights;
      rerank.pool = rr_pool;
      if (rerank.strategy != StrategyKind::kAllHeads && rr_pool.empty()) {
        throw Error(ErrorCategory::kInvalidArgument, "--pool is required for this strategy");
      }
      if (rerank.strategy == StrategyKind::kRouter && rr_weights.empty()) {
        throw Error(ErrorCategory::kInvalidArgument, "--weights is required for the router");
      }
      cmd_rerank(rerank, std::cerr);
    } else if (*ev_cmd) {
      eval.run = ev_run;
      eval.qrels = ev_qrels;
      eval.json_out = ev_json;
      eval.metric.gain = parse_gain(ev_gain);
      std::cout << cmd_eval(eval).to_text();
    } else if (*oc_cmd) {
      oracle.manifest = oc_manifest;
      oracle.qrels = oc_qrels;
      oracle.pool = oc_pool;
      oracle.json_out = oc_json;
      const OracleCheckReport r = cmd_oracle_check(oracle, std::cerr);
      for (const auto& q : r.queries) {
        std::cout << fmt::format("{}\t{:.6f}\t{:.6f}\t{:.6f}\n", q.query_id, q.search_ndcg,
                                 q.oracle_ndcg, q.gap);
      }
      std::cout << fmt::format("attainment_rate\t{:.4f}\n", r.attainment_rate);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << category_name(e.category()) << ": " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
