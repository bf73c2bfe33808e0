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

#include "routehead/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <fmt/format.h>

#include "routehead/error.hpp"

namespace routehead {

using nlohmann::json;

namespace {

void check_lineage(const std::string& what, const std::string& expected,
                   const std::string& actual, bool force, std::ostream& log) {
  if (expected == actual) return;
  const std::string msg = fmt::format("{} was derived from {} but the input is {}",
                                      what, expected.substr(0, 12), actual.substr(0, 12));
  if (!force) throw Error(ErrorCategory::kLineage, msg + " (use --force to override)");
  log << "warning: " << msg << " (forced)\n";
}

void check_signature(const DumpMeta& artifact, const DumpMeta& manifest,
                     const std::string& what) {
  if (artifact.layers != manifest.layers ||
      artifact.heads_per_layer != manifest.heads_per_layer ||
      artifact.d_q != manifest.d_q) {
    throw Error(ErrorCategory::kDimension,
                fmt::format("{} was built for {}x{} heads, d_q={}; dataset has "
                            "{}x{}, d_q={}",
                            what, artifact.layers, artifact.heads_per_layer,
                            artifact.d_q, manifest.layers,
                            manifest.heads_per_layer, manifest.d_q));
  }
}

}  // namespace

std::vector<QueryInstance> make_instances(const Dataset& dataset, const Qrels& qrels) {
  std::vector<QueryInstance> out;
  out.reserve(dataset.matrices.size());
  for (const HeadScoreMatrix& m : dataset.matrices) {
    out.push_back({m, qrels.for_query(m.query_id)});
  }
  return out;
}

Manifest cmd_ingest(const IngestOptions& options) {
  return ingest_dump(options.dump_dir, options.out_dir, options.format);
}

PoolArtifact cmd_pool(const PoolOptions& options, std::ostream& log) {
  const Dataset dataset = load_dataset(options.manifest);
  const Qrels qrels = read_trec_qrels(options.qrels.string());
  if (options.k > dataset.manifest.meta.num_heads()) {
    throw Error(ErrorCategory::kInvalidArgument,
                fmt::format("K={} exceeds M={}", options.k,
                            dataset.manifest.meta.num_heads()));
  }
  const auto instances = make_instances(dataset, qrels);
  PoolArtifact artifact;
  artifact.pool = build_pool(dataset.all_heads(), instances, options.k,
                             options.metric, dataset.manifest.content_hash);
  artifact.metric = options.metric;
  artifact.model = dataset.manifest.meta;
  artifact.manifest_hash = dataset.manifest.content_hash;
  artifact.qrels_hash = sha256_file(options.qrels);
  write_json_atomic(options.out, pool_to_json(artifact));
  log << fmt::format("pool: kept {} of {} heads over {} queries (best solo {:.4f})\n",
                     artifact.pool.size(), dataset.manifest.meta.num_heads(),
                     instances.size(), artifact.pool.solo_scores.front());
  return artifact;
}

LabelsArtifact cmd_label_search(const LabelSearchOptions& options, std::ostream& log) {
  const Dataset dataset = load_dataset(options.manifest);
  const Qrels qrels = read_trec_qrels(options.qrels.string());
  const PoolArtifact pool = read_pool(options.pool);
  check_lineage("pool", pool.manifest_hash, dataset.manifest.content_hash,
                options.force, log);

  LabelsArtifact artifact;
  artifact.config = options.search;
  artifact.pool_heads = pool.pool.heads;
  artifact.manifest_hash = dataset.manifest.content_hash;
  artifact.qrels_hash = sha256_file(options.qrels);
  artifact.pool_hash = sha256_file(options.pool);
  artifact.with_traces = options.verbose;

  const auto instances = make_instances(dataset, qrels);
  for (const QueryInstance& q : instances) {
    if (!qrels.contains(q.matrix.query_id)) {
      artifact.warnings.push_back(
          fmt::format("query '{}' absent from qrels; empty label", q.matrix.query_id));
    }
  }
  for (LabelResult& r : search_labels(instances, pool.pool, options.search)) {
    if (r.label) {
      if (r.label->swap_cap_hit) {
        artifact.warnings.push_back(
            fmt::format("query '{}' hit max_swap_iters", r.query_id));
      }
      artifact.labels.push_back(std::move(*r.label));
    } else {
      artifact.failures.push_back(std::move(r));
    }
  }
  for (const std::string& w : artifact.warnings) log << "warning: " << w << "\n";
  for (const LabelResult& f : artifact.failures) {
    log << "error: query '" << f.query_id << "': " << f.error << "\n";
  }
  write_json_atomic(options.out, labels_to_json(artifact));

  double mean = 0.0;
  std::size_t active = 0;
  for (const PseudoLabel& l : artifact.labels) {
    mean += l.achieved_ndcg;
    active += std::count(l.y.begin(), l.y.end(), 1);
  }
  if (!artifact.labels.empty()) {
    const double n = static_cast<double>(artifact.labels.size());
    log << fmt::format("label-search: {} labels, mean nDCG@{} {:.4f}, mean set size {:.2f}\n",
                       artifact.labels.size(), options.search.metric.cutoff, mean / n,
                       static_cast<double>(active) / n);
  }
  return artifact;
}

TrainResult cmd_train(const TrainOptions& options, std::ostream& log) {
  const LabelsArtifact labels = read_labels(options.labels);
  const Dataset dataset = load_dataset(options.manifest);
  check_lineage("labels", labels.manifest_hash, dataset.manifest.content_hash,
                options.force, log);
  if (labels.labels.empty()) {
    throw Error(ErrorCategory::kInvalidArgument, "labels file contains no labels");
  }

  std::vector<TrainingExample> examples;
  examples.reserve(labels.labels.size());
  for (const PseudoLabel& l : labels.labels) {
    const QueryEmbedding* e = dataset.embedding_for(l.query_id);
    if (e == nullptr) {
      throw Error(ErrorCategory::kNotFound,
                  fmt::format("no embedding for labeled query '{}'", l.query_id));
    }
    examples.push_back({e->values, l.y});
  }

  const TrainConfig& cfg = options.train;
  log << fmt::format("train: lambda={} lr={} epochs={} batch={} d_h={} seed={} "
                     "examples={} K={}\n",
                     cfg.lambda, cfg.learning_rate, cfg.epochs, cfg.batch_size,
                     cfg.hidden_dim, cfg.seed, examples.size(),
                     labels.pool_heads.size());
  TrainResult result = train(examples, cfg);

  json log_json = json::array();
  for (const EpochLoss& e : result.log) {
    log_json.push_back({{"epoch", e.epoch},
                        {"total", e.mean.total},
                        {"route", e.mean.route},
                        {"sparse", e.mean.sparse}});
  }
  json pool_heads = json::array();
  for (const HeadId& h : labels.pool_heads) pool_heads.push_back(h.flat);

  const std::string weights = encode_router(result.params);
  write_file_atomic(options.out, weights);
  write_json_atomic(router_sidecar_path(options.out),
                    {{"format", "routehead.router"},
                     {"version", kRouterFormatVersion},
                     {"weights_sha256", sha256_hex(weights)},
                     {"inputs",
                      {{"labels", sha256_file(options.labels)},
                       {"manifest", dataset.manifest.content_hash},
                       {"pool", labels.pool_hash}}},
                     {"config",
                      {{"lambda", cfg.lambda},
                       {"learning_rate", cfg.learning_rate},
                       {"epochs", cfg.epochs},
                       {"batch_size", cfg.batch_size},
                       {"seed", cfg.seed},
                       {"d_h", cfg.hidden_dim}}},
                     {"pool_heads", pool_heads},
                     {"log", log_json}});
  const LossParts& last = result.log.back().mean;
  log << fmt::format("train: final loss total={:.5f} route={:.5f} sparse={:.5f}\n",
                     last.total, last.route, last.sparse);
  return result;
}

StrategyKind parse_strategy(const std::string& name) {
  if (name == "router") return StrategyKind::kRouter;
  if (name == "static" || name == "static_top_k") return StrategyKind::kStaticTopK;
  if (name == "all" || name == "all_heads") return StrategyKind::kAllHeads;
  throw Error(ErrorCategory::kInvalidArgument, fmt::format("unknown strategy '{}'", name));
}

std::string strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kRouter: return "router";
    case StrategyKind::kStaticTopK: return "static_top_k";
    case StrategyKind::kAllHeads: return "all_heads";
  }
  return "unknown";
}

RerankResult cmd_rerank(const RerankOptions& options, std::ostream& log) {
  const Dataset dataset = load_dataset(options.manifest);
  const RunFile candidates = read_trec_run(options.candidates);
  const DumpMeta& meta = dataset.manifest.meta;

  HeadSet fixed_heads;
  std::optional<PoolArtifact> pool;
  std::optional<RouterParams> router;
  TrainConfig select_config;
  select_config.threshold = options.threshold;
  select_config.fallback_top_n = options.fallback_top_n;

  switch (options.strategy) {
    case StrategyKind::kAllHeads:
      fixed_heads = dataset.all_heads();
      break;
    case StrategyKind::kStaticTopK: {
      pool = read_pool(options.pool);
      check_signature(pool->model, meta, "pool");
      fixed_heads = truncate(pool->pool, options.k).heads;
      std::sort(fixed_heads.begin(), fixed_heads.end());
      break;
    }
    case StrategyKind::kRouter: {
      if (!(options.threshold > 0.0 && options.threshold < 1.0) ||
          options.fallback_top_n == 0) {
        throw Error(ErrorCategory::kInvalidArgument,
                    "threshold must be in (0, 1) and fallback >= 1");
      }
      pool = read_pool(options.pool);
      check_signature(pool->model, meta, "pool");
      router = read_router(options.weights);
      const json sidecar = read_json(router_sidecar_path(options.weights));
      check_lineage("router", sidecar.at("inputs").at("pool").get<std::string>(),
                    sha256_file(options.pool), options.force, log);
      if (router->d_q != meta.d_q || router->num_heads != pool->pool.size()) {
        throw Error(ErrorCategory::kDimension,
                    fmt::format("router expects d_q={} K={}; dataset d_q={}, pool K={}",
                                router->d_q, router->num_heads, meta.d_q,
                                pool->pool.size()));
      }
      break;
    }
  }

  RerankResult result;
  for (const RunQuery& cq : candidates.queries) {
    RunQuery out{cq.query_id, {}};
    const HeadScoreMatrix* matrix = dataset.matrix_for(cq.query_id);
    if (matrix == nullptr) {
      ++result.unscored_queries;
      result.appended_docs += cq.docs.size();
      out.docs = cq.docs;
      result.run.queries.push_back(std::move(out));
      continue;
    }

    HeadSet heads = fixed_heads;
    if (router) {
      const QueryEmbedding* e = dataset.embedding_for(cq.query_id);
      const RouterOutput ro = forward(*router, e->values);
      if (std::none_of(ro.p.begin(), ro.p.end(),
                       [&](double p) { return p > options.threshold; })) {
        ++result.fallback_queries;
      }
      heads = select_heads(*router, e->values, pool->pool, select_config);
    }
    const AggregatedScores agg = aggregate(*matrix, heads);

    std::unordered_map<std::string, std::size_t> doc_index;
    for (std::size_t i = 0; i < matrix->doc_ids.size(); ++i) {
      doc_index.emplace(matrix->doc_ids[i], i);
    }
    std::vector<std::string> scored_ids;
    std::vector<double> scored;
    std::vector<std::string> missing;
    for (const auto& [doc, bm25] : cq.docs) {
      auto it = doc_index.find(doc);
      if (it == doc_index.end()) {
        missing.push_back(doc);
      } else {
        scored_ids.push_back(doc);
        scored.push_back(agg.scores[it->second]);
      }
    }
    for (std::size_t i : rank_indices(scored, scored_ids)) {
      out.docs.emplace_back(scored_ids[i], scored[i]);
    }
    // Unscored candidates keep their first-stage order below every scored doc.
    double floor = out.docs.empty() ? 0.0 : out.docs.back().second;
    for (const std::string& doc : missing) {
      floor -= 1.0;
      out.docs.emplace_back(doc, floor);
    }
    result.appended_docs += missing.size();
    result.run.queries.push_back(std::move(out));
  }

  const std::string tag =
      options.tag.empty() ? "routehead-" + strategy_name(options.strategy) : options.tag;
  write_file_atomic(options.out, format_trec_run(result.run, tag));
  if (result.appended_docs > 0) {
    log << fmt::format("warning: {} candidate docs had no scores and were appended\n",
                       result.appended_docs);
  }
  if (result.unscored_queries > 0) {
    log << fmt::format("warning: {} queries missing from the dataset kept first-stage order\n",
                       result.unscored_queries);
  }
  if (result.fallback_queries > 0) {
    log << fmt::format("rerank: fallback selection used for {} queries\n",
                       result.fallback_queries);
  }
  log << fmt::format("rerank: {} queries with strategy {}\n", result.run.queries.size(),
                     strategy_name(options.strategy));
  return result;
}

json EvalReport::to_json() const {
  json per = json::array();
  for (const auto& [qid, v] : per_query) per.push_back({{"query_id", qid}, {"ndcg", v}});
  return {{"metric", fmt::format("ndcg_cut_{}", metric.cutoff)},
          {"gain", gain_name(metric.gain)},
          {"mean", mean},
          {"num_queries", per_query.size()},
          {"excluded", excluded},
          {"per_query", per}};
}

std::string EvalReport::to_text() const {
  std::string out;
  for (const auto& [qid, v] : per_query) {
    out += fmt::format("ndcg_cut_{}\t{}\t{:.4f}\n", metric.cutoff, qid, v);
  }
  out += fmt::format("ndcg_cut_{}\tall\t{:.4f}\n", metric.cutoff, mean);
  if (!excluded.empty()) {
    out += fmt::format("# {} queries without positive judgments excluded\n", excluded.size());
  }
  return out;
}

EvalReport cmd_eval(const EvalOptions& options) {
  const RunFile run = read_trec_run(options.run);
  const Qrels qrels = read_trec_qrels(options.qrels.string());
  EvalReport report;
  report.metric = options.metric;
  std::vector<double> values;
  for (const RunQuery& q : run.queries) {
    if (!qrels.has_positive(q.query_id) && !options.include_unjudged) {
      report.excluded.push_back(q.query_id);
      continue;
    }
    std::vector<std::string> ranking;
    ranking.reserve(q.docs.size());
    for (const auto& [doc, score] : q.docs) ranking.push_back(doc);
    const double v = ndcg_at_k(ranking, qrels.for_query(q.query_id), options.metric);
    report.per_query.emplace_back(q.query_id, v);
    values.push_back(v);
  }
  if (values.empty()) {
    throw Error(ErrorCategory::kDegenerate, "no judged queries in run");
  }
  report.mean = mean_ndcg(values);
  if (!options.json_out.empty()) write_json_atomic(options.json_out, report.to_json());
  return report;
}

json OracleCheckReport::to_json() const {
  json per = json::array();
  for (const OracleQueryReport& q : queries) {
    per.push_back({{"query_id", q.query_id},
                   {"search_ndcg", q.search_ndcg},
                   {"oracle_ndcg", q.oracle_ndcg},
                   {"gap", q.gap}});
  }
  return {{"attainment_rate", attainment_rate},
          {"negative_gaps", negative_gaps},
          {"queries", per}};
}

OracleCheckReport oracle_check(std::span<const QueryInstance> queries,
                               const HeadPool& pool, const SearchConfig& config,
                               std::size_t max_size) {
  OracleCheckReport report;
  std::size_t attained = 0;
  for (const QueryInstance& q : queries) {
    const PseudoLabel label = search_label(q, pool, config);
    const OracleResult oracle =
        exhaustive_oracle(q.matrix, q.judgments, pool, max_size, config.metric);
    OracleQueryReport r{q.matrix.query_id, label.achieved_ndcg, oracle.ndcg,
                        oracle.ndcg - label.achieved_ndcg};
    if (r.gap < 0.0) ++report.negative_gaps;
    if (r.gap == 0.0) ++attained;
    report.queries.push_back(std::move(r));
  }
  if (!queries.empty()) {
    report.attainment_rate =
        static_cast<double>(attained) / static_cast<double>(queries.size());
  }
  return report;
}

OracleCheckReport cmd_oracle_check(const OracleCheckOptions& options, std::ostream& log) {
  const Dataset dataset = load_dataset(options.manifest);
  const Qrels qrels = read_trec_qrels(options.qrels.string());
  const PoolArtifact pool = read_pool(options.pool);
  check_signature(pool.model, dataset.manifest.meta, "pool");
  if (options.pool_subset > kOracleMaxPool) {
    throw Error(ErrorCategory::kInvalidArgument, "oracle limited to <= 16 heads");
  }
  const HeadPool subset = truncate(pool.pool, options.pool_subset);
  SearchConfig config;
  config.budget = options.max_size;
  config.epsilon = options.epsilon;
  config.max_swap_iters = options.max_swap_iters;
  config.metric = pool.metric;

  const auto instances = make_instances(dataset, qrels);
  OracleCheckReport report = oracle_check(instances, subset, config, options.max_size);
  if (!options.json_out.empty()) write_json_atomic(options.json_out, report.to_json());
  double worst = 0.0;
  for (const auto& q : report.queries) worst = std::max(worst, q.gap);
  log << fmt::format("oracle-check: {} queries, pool {} heads, max size {}: "
                     "attainment {:.3f}, max gap {:.4f}, negative gaps {}\n",
                     report.queries.size(), subset.size(), options.max_size,
                     report.attainment_rate, worst, report.negative_gaps);
  if (report.negative_gaps > 0) {
    throw Error(ErrorCategory::kDegenerate,
                fmt::format("{} queries where search beat the exhaustive oracle",
                            report.negative_gaps));
  }
  return report;
}

SynthSummary cmd_synth(const SynthConfig& config, const fs::path& out) {
  return write_synthetic(config, out);
}

}  // namespace routehead
