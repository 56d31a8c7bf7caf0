#include "kgf/pipeline/stages.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "kgf/eval/rouge.hpp"
#include "kgf/kg/world.hpp"
#include "kgf/lm/corpus.hpp"

namespace kgf::pipeline {
namespace {

std::vector<lm::TextPair> pairs_of(const std::vector<bench::Probe>& probes, bool icu) {
  std::vector<lm::TextPair> out;
  out.reserve(probes.size());
  for (const auto& p : probes) out.push_back({icu ? unlearn::icu_wrap(p.question) : p.question, p.answer});
  return out;
}

struct BoundarySets {
  std::vector<lm::TextPair> forget, retain, neighbors;
};

BoundarySets boundary_sets(const Subset& s, const unlearn::UnlearnData& data, bool icu) {
  std::vector<bench::Probe> forget, retain;
  for (const auto& p : s.probes) {
    if (p.type == bench::ProbeType::Direct || p.type == bench::ProbeType::Paraphrase) forget.push_back(p);
    if (p.split == bench::Split::RetainEval) retain.push_back(p);
  }
  BoundarySets out{pairs_of(forget, icu), pairs_of(retain, icu), {}};
  for (const auto& set : data.neighbors) {
    for (const auto& n : set.items) out.neighbors.push_back({icu ? unlearn::icu_wrap(n.question) : n.question, n.answer});
  }
  return out;
}

eval::DriftReport drift_of(const lm::Model<float>& base, const lm::Model<float>& policy, const lm::Tokenizer& tok,
                           const Subset& s, const unlearn::UnlearnData& data) {
  std::vector<std::string> targets, neighbors, distant;
  std::vector<eval::GradientProbe> grads;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    targets.push_back(data.items[i].probe.question);
    eval::GradientProbe gp;
    gp.forget = {data.items[i].probe.question, data.items[i].probe.answer};
    for (const auto& n : data.neighbors[i].items) {
      neighbors.push_back(n.question);
      gp.neighbors.push_back({n.question, n.answer});
      gp.weights.push_back(n.weight);
    }
    grads.push_back(std::move(gp));
  }
  for (const auto& p : s.probes) {
    if (p.split == bench::Split::RetainEval) distant.push_back(p.question);
  }
  return eval::drift_report(base, policy, tok, targets, neighbors, distant, grads);
}

MethodResult evaluate_with(const lm::Model<float>& base, lm::Model<float> policy, const lm::Tokenizer& tok,
                           const Subset& subset, const Baseline& baseline, const unlearn::UnlearnConfig& ucfg,
                           const unlearn::UnlearnData& data, const RunOptions& opts) {
  const bool icu = ucfg.method == unlearn::Method::ICU;
  MethodResult r(ucfg, std::move(policy));
  r.outcomes = eval::run_probes(r.model, tok, evaluation_probes(subset), icu);
  r.metrics = eval::summarize(r.outcomes, baseline.kcs_pre);
  lm::Model<float> reference = base;
  const auto sets = boundary_sets(subset, data, icu);
  r.boundary_pre = eval::boundary_report(reference, reference, tok, sets.forget, sets.retain, sets.neighbors, opts.epsilon);
  r.boundary_post = eval::boundary_report(r.model, reference, tok, sets.forget, sets.retain, sets.neighbors, opts.epsilon);
  if (opts.drift && !icu) r.drift = drift_of(base, r.model, tok, subset, data);
  return r;
}

}  // namespace

kg::KnowledgeGraph make_world(const ExperimentConfig& cfg) {
  return kg::generate_world(kg::WorldConfig::desk_default(cfg.world_seed));
}

bench::Benchmark make_benchmark(const kg::KnowledgeGraph& g, const ExperimentConfig& cfg) {
  std::size_t n = cfg.bench_targets;
  if (n == 0) {
    bench::ChainIndex chains(g);
    try {
      n = bench::select_targets(g, chains, g.triples().size() + 1, cfg.bench_seed, cfg.filtration).size();
    } catch (const bench::SelectionError& e) {
      n = e.achievable();
    }
  }
  return bench::build_benchmark(g, n, cfg.bench_seed, cfg.filtration);
}

bench::KnownPartition filter_known_batched(lm::Model<float>& model, const lm::Tokenizer& tok,
                                           const std::vector<bench::Probe>& probes) {
  std::vector<std::string> questions;
  std::vector<int> budgets;
  for (const auto& p : probes) {
    questions.push_back(p.question);
    budgets.push_back(eval::decode_budget(p.hop));
  }
  const auto answers = lm::generate_answers(model, tok, questions, budgets);
  std::map<std::string, std::string> by_id;
  for (std::size_t i = 0; i < probes.size(); ++i) by_id[probes[i].probe_id] = answers[i];
  return bench::filter_known(probes, [&](const bench::Probe& p) { return by_id.at(p.probe_id); });
}

BaseModel pretrain_model(const kg::KnowledgeGraph& g, const std::vector<bench::BenchmarkCase>& cases,
                         const ExperimentConfig& cfg, const lm::EpochCallback& on_epoch) {
  const auto bank = kg::TemplateBank::builtin();
  const auto probes = bench::all_probes(cases);
  lm::CorpusOptions co;
  if (cfg.hold_out_multi_hop) {
    for (const auto& p : probes) {
      if (p.hop > 1) co.held_out.insert(p.question);
    }
  }
  const auto corpus = lm::render_corpus(g, bank, co);
  CorpusStats stats;
  stats.pairs = corpus.size();
  stats.held_out = co.held_out.size();
  std::set<std::string> questions;
  for (const auto& tp : corpus) questions.insert(tp.question);
  std::vector<lm::TextPair> stop;
  for (const auto& p : probes) {
    if (p.type != bench::ProbeType::Direct) continue;
    stop.push_back({p.question, p.answer});
    if (p.family == bench::TemplateFamily::QA && questions.contains(p.question)) ++stats.direct_qa;
  }
  lm::Tokenizer tok = lm::build_tokenizer(g, bank);
  lm::ModelConfig mc = cfg.model;
  mc.vocab_size = tok.size();
  lm::Model<float> model(mc);
  auto training = lm::pretrain(model, tok, corpus, stop, cfg.pretrain, on_epoch);
  auto known = filter_known_batched(model, tok, probes);
  return BaseModel{std::move(tok), std::move(model), std::move(training), stats, std::move(known)};
}

std::vector<bench::BenchmarkCase> cases_from_probes(const kg::KnowledgeGraph& g,
                                                    const std::vector<bench::Probe>& probes) {
  std::vector<bench::BenchmarkCase> cases;
  std::map<std::string, std::size_t> index;
  for (const auto& p : probes) {
    auto [it, fresh] = index.emplace(p.case_id, cases.size());
    if (fresh) {
      bench::BenchmarkCase c;
      c.case_id = p.case_id;
      c.target = bench::resolve_triple(g, p.target);
      cases.push_back(std::move(c));
    }
    cases[it->second].probes.push_back(p);
  }
  return cases;
}

Subset select_subset(const std::vector<bench::BenchmarkCase>& cases, const std::vector<bench::Probe>& probes,
                     std::size_t n, std::uint64_t seed) {
  std::set<std::string> with_probes;
  for (const auto& p : probes) with_probes.insert(p.case_id);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (with_probes.contains(cases[i].case_id)) idx.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(n, idx.size()));
  std::sort(idx.begin(), idx.end());
  Subset s;
  std::set<std::string> ids;
  for (auto i : idx) {
    s.cases.push_back(cases[i]);
    ids.insert(cases[i].case_id);
  }
  for (const auto& p : probes) {
    if (ids.contains(p.case_id)) s.probes.push_back(p);
  }
  return s;
}

std::vector<bench::Probe> evaluation_probes(const Subset& s) {
  std::vector<bench::Probe> out;
  for (const auto& p : s.probes) {
    if (p.split != bench::Split::ForgetTrain) out.push_back(p);
  }
  return out;
}

Baseline evaluate_baseline(lm::Model<float>& base, const lm::Tokenizer& tok, const Subset& subset) {
  Baseline b;
  b.outcomes = eval::run_probes(base, tok, evaluation_probes(subset));
  b.kcs_pre = eval::kcs_of(b.outcomes);
  b.metrics = eval::summarize(b.outcomes, b.kcs_pre);
  return b;
}

MethodResult run_method(const kg::KnowledgeGraph& g, const lm::Model<float>& base, const lm::Tokenizer& tok,
                        const Subset& subset, const Baseline& baseline, const unlearn::UnlearnConfig& ucfg,
                        const RunOptions& opts) {
  const auto bank = kg::TemplateBank::builtin();
  const auto data = unlearn::prepare_unlearning(g, bank, subset.cases, subset.probes, ucfg);
  lm::Model<float> policy = base;
  unlearn::UnlearnRun run;
  std::string failure;
  try {
    run = unlearn::run_unlearn(policy, tok, data, ucfg);
  } catch (const unlearn::DivergenceError& e) {
    failure = e.what();
  }
  MethodResult r = evaluate_with(base, std::move(policy), tok, subset, baseline, ucfg, data, opts);
  r.run = std::move(run);
  r.diverged = !failure.empty();
  r.failure = failure;
  return r;
}

MethodResult evaluate_policy(const kg::KnowledgeGraph& g, const lm::Model<float>& base, lm::Model<float> policy,
                             const lm::Tokenizer& tok, const Subset& subset, const Baseline& baseline,
                             const unlearn::UnlearnConfig& ucfg, const RunOptions& opts) {
  const auto bank = kg::TemplateBank::builtin();
  const auto data = unlearn::prepare_unlearning(g, bank, subset.cases, subset.probes, ucfg);
  return evaluate_with(base, std::move(policy), tok, subset, baseline, ucfg, data, opts);
}

double mean_forget_ue(const eval::MetricsReport& m) {
  double sum = 0.0;
  int n = 0;
  for (double v : {m.ue_direct, m.ue_paraphrase, m.ue_inverse, m.ue_multi_hop}) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n ? sum / n : 0.0;
}

std::optional<std::size_t> select_best(const std::vector<SweepPoint>& points) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!p.ok || std::isnan(p.hmean)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = points[*best];
    if (p.hmean > b.hmean || (p.hmean == b.hmean && p.forget_ue > b.forget_ue)) best = i;
  }
  return best;
}

SweepResult sweep(const kg::KnowledgeGraph& g, const lm::Model<float>& base, const lm::Tokenizer& tok,
                  const Subset& subset, const Baseline& baseline, const unlearn::UnlearnConfig& ucfg,
                  const std::vector<double>& lr_grid, const RunOptions& opts) {
  if (lr_grid.empty()) throw std::invalid_argument("learning-rate grid is empty");
  SweepResult out;
  for (double lr : lr_grid) {
    auto c = ucfg;
    c.learning_rate = lr;
    SweepPoint p;
    p.learning_rate = lr;
    try {
      auto r = run_method(g, base, tok, subset, baseline, c, opts);
      p.ok = !r.diverged;
      p.failure = r.failure;
      p.hmean = r.metrics.hmean;
      p.forget_ue = mean_forget_ue(r.metrics);
      out.runs.push_back(std::move(r));
    } catch (const lm::NumericError& e) {
      p.ok = false;
      p.failure = e.what();
      MethodResult failed(c, base);
      failed.diverged = true;
      failed.failure = e.what();
      out.runs.push_back(std::move(failed));
    }
    out.points.push_back(p);
  }
  out.best = select_best(out.points);
  return out;
}

}  // namespace kgf::pipeline
