#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kgf/bench/benchmark.hpp"
#include "kgf/eval/boundary.hpp"
#include "kgf/eval/drift.hpp"
#include "kgf/eval/metrics.hpp"
#include "kgf/kg/graph.hpp"
#include "kgf/kg/templates.hpp"
#include "kgf/lm/model.hpp"
#include "kgf/lm/tokenizer.hpp"
#include "kgf/lm/train.hpp"
#include "kgf/pipeline/config.hpp"
#include "kgf/unlearn/trainer.hpp"

namespace kgf::pipeline {

kg::KnowledgeGraph make_world(const ExperimentConfig& cfg);

/// bench.targets = 0 builds every eligible target.
bench::Benchmark make_benchmark(const kg::KnowledgeGraph& g, const ExperimentConfig& cfg);

struct CorpusStats {
  std::size_t pairs = 0;
  std::size_t direct_qa = 0;  // direct question forms of benchmark targets present in the corpus
  std::size_t held_out = 0;
};

struct BaseModel {
  lm::Tokenizer tok;
  lm::Model<float> model;
  lm::PretrainResult training;
  CorpusStats corpus;
  bench::KnownPartition known;
};

/// Builds the corpus (multi-hop benchmark questions held out when configured),
/// pretrains until direct-probe recall reaches the target, then drops probes
/// the model does not know.
BaseModel pretrain_model(const kg::KnowledgeGraph& g, const std::vector<bench::BenchmarkCase>& cases,
                         const ExperimentConfig& cfg, const lm::EpochCallback& on_epoch = {});

/// filter_known with batched greedy decoding.
bench::KnownPartition filter_known_batched(lm::Model<float>& model, const lm::Tokenizer& tok,
                                           const std::vector<bench::Probe>& probes);

/// One case per target, rebuilt from a probe dataset (targets come from the direct probes).
std::vector<bench::BenchmarkCase> cases_from_probes(const kg::KnowledgeGraph& g,
                                                    const std::vector<bench::Probe>& probes);

struct Subset {
  std::vector<bench::BenchmarkCase> cases;
  std::vector<bench::Probe> probes;
};

/// Samples up to n cases that still have probes, kept in benchmark order.
Subset select_subset(const std::vector<bench::BenchmarkCase>& cases, const std::vector<bench::Probe>& probes,
                     std::size_t n, std::uint64_t seed);

/// Probes of the subset that are ever evaluated (everything but forget_train).
std::vector<bench::Probe> evaluation_probes(const Subset& s);

struct Baseline {
  std::vector<eval::ProbeOutcome> outcomes;
  double kcs_pre = 0.0;
  eval::MetricsReport metrics;
};

Baseline evaluate_baseline(lm::Model<float>& base, const lm::Tokenizer& tok, const Subset& subset);

struct RunOptions {
  double epsilon = eval::kDefaultEpsilon;
  bool drift = true;
};

struct MethodResult {
  MethodResult(unlearn::UnlearnConfig c, lm::Model<float> m) : config(std::move(c)), model(std::move(m)) {}

  unlearn::UnlearnConfig config;
  unlearn::UnlearnRun run;
  eval::MetricsReport metrics;
  eval::BoundaryReport boundary_pre;
  eval::BoundaryReport boundary_post;
  std::optional<eval::DriftReport> drift;
  std::vector<eval::ProbeOutcome> outcomes;
  lm::Model<float> model;  // the unlearned policy (the base itself for ICU)
  bool diverged = false;
  std::string failure;
};

/// Prepares data, unlearns a copy of `base`, and evaluates it.
/// A diverged run is returned with diverged = true and the restored adapters.
MethodResult run_method(const kg::KnowledgeGraph& g, const lm::Model<float>& base, const lm::Tokenizer& tok,
                        const Subset& subset, const Baseline& baseline, const unlearn::UnlearnConfig& ucfg,
                        const RunOptions& opts = {});

/// Evaluates an already unlearned policy against the base.
MethodResult evaluate_policy(const kg::KnowledgeGraph& g, const lm::Model<float>& base, lm::Model<float> policy,
                             const lm::Tokenizer& tok, const Subset& subset, const Baseline& baseline,
                             const unlearn::UnlearnConfig& ucfg, const RunOptions& opts = {});

struct SweepPoint {
  double learning_rate = 0.0;
  bool ok = true;
  double hmean = 0.0;
  double forget_ue = 0.0;  // mean of the forget-side UEs, breaks Hmean ties
  std::string failure;
};

/// Index of the point with the highest Hmean; ties go to the higher forget UE,
/// then to the earlier grid entry. Failed points are never selected.
std::optional<std::size_t> select_best(const std::vector<SweepPoint>& points);

double mean_forget_ue(const eval::MetricsReport& m);

struct SweepResult {
  std::vector<SweepPoint> points;
  std::vector<MethodResult> runs;  // parallel to points
  std::optional<std::size_t> best;
};

SweepResult sweep(const kg::KnowledgeGraph& g, const lm::Model<float>& base, const lm::Tokenizer& tok,
                  const Subset& subset, const Baseline& baseline, const unlearn::UnlearnConfig& ucfg,
                  const std::vector<double>& lr_grid, const RunOptions& opts = {});

}  // namespace kgf::pipeline
