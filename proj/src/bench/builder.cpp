#include <algorithm>
#include <random>
#include <set>

#include "kgf/bench/benchmark.hpp"
#include "kgf/kg/algorithms.hpp"

namespace kgf::bench {
namespace {

template <typename T>
void shuffle_with(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
  }
}

struct ChainCounts {
  std::size_t two_hop = 0;
  std::size_t three_hop = 0;
};

ChainCounts unique_chain_counts(const kg::KnowledgeGraph& g,
                                const std::vector<kg::ChainInstance>& chains) {
  ChainCounts c;
  for (const auto& ch : chains) {
    if (!has_unique_answer(g, ch)) continue;
    if (ch.pattern->hops() == 2) ++c.two_hop;
    if (ch.pattern->hops() == 3) ++c.three_hop;
  }
  return c;
}

bool eligible(const kg::KnowledgeGraph& g, const ChainIndex& chains, std::uint32_t index,
              const FiltrationConfig& cfg) {
  const kg::Triple& t = g.triple(index);
  if (!g.relation(t.relation).functional) return false;
  if (g.heads(t.relation, t.tail).size() != 1) return false;
  auto counts = unique_chain_counts(g, chains.through(index));
  if (counts.two_hop < 2 || counts.three_hop < 1) return false;
  return !build_retain_set(g, chains, t, cfg).facts.empty();
}

}  // namespace

ChainIndex::ChainIndex(const kg::KnowledgeGraph& g) : by_triple_(g.triples().size()) {
  for (const auto& p : kg::chain_catalog()) {
    for (auto& inst : kg::enumerate_chains(g, p)) chains_.push_back(std::move(inst));
  }
  for (std::uint32_t i = 0; i < chains_.size(); ++i) {
    for (auto t : chains_[i].triples) by_triple_[t].push_back(i);
  }
}

std::vector<kg::ChainInstance> ChainIndex::through(std::uint32_t triple_index) const {
  std::vector<kg::ChainInstance> out;
  if (triple_index >= by_triple_.size()) return out;
  for (auto i : by_triple_[triple_index]) out.push_back(chains_[i]);
  return out;
}

bool has_unique_answer(const kg::KnowledgeGraph& g, const kg::ChainInstance& chain) {
  auto answers = kg::chain_answers(g, *chain.pattern, chain.head());
  return answers.size() == 1 && answers.front() == chain.answer();
}

std::uint32_t triple_index(const kg::KnowledgeGraph& g, const kg::Triple& t) {
  for (const auto& e : g.out_edges(t.head)) {
    if (e.relation == t.relation && e.tail == t.tail) return e.triple_index;
  }
  throw kg::LookupError("triple " + g.describe(t) + " is not in the graph");
}

void FiltrationConfig::validate() const {
  if (min_geodesic < 1) throw std::invalid_argument("min_geodesic must be >= 1");
  if (bfs_depth < 1) throw std::invalid_argument("bfs_depth must be >= 1");
}

RetainSet build_retain_set(const kg::KnowledgeGraph& g, const ChainIndex& chains,
                           const kg::Triple& target, const FiltrationConfig& cfg) {
  cfg.validate();
  const std::uint32_t index = triple_index(g, target);
  std::set<std::string> excluded_families{g.relation(target.relation).family};
  for (const auto& ch : chains.through(index)) {
    for (auto ti : ch.triples) excluded_families.insert(g.relation(g.triple(ti).relation).family);
  }
  const unsigned depth = std::max(cfg.bfs_depth, cfg.min_geodesic);
  // Paths through the shared subject are trivially short; they do not count.
  kg::PathExclusion exclusion;
  exclusion.nodes.push_back(target.head);
  const auto dist = kg::bfs_distances(g, target.tail, exclusion, depth);

  RetainSet out;
  auto reject = [&](const kg::Triple& c, FiltrationStage stage, std::string reason) {
    out.rejected.push_back(Rejection{c, stage, std::move(reason)});
    ++out.rejected_per_stage[static_cast<std::size_t>(stage) - 1];
  };
  for (const auto& e : g.out_edges(target.head)) {
    const kg::Triple c{target.head, e.relation, e.tail};
    if (c == target) continue;
    const auto& rel = g.relation(e.relation);
    if (!rel.functional) continue;
    if (excluded_families.contains(rel.family)) {
      reject(c, FiltrationStage::Schema, "family " + rel.family + " overlaps the target's chains");
      continue;
    }
    if (e.tail == target.tail || !kg::edges_between(g, target.tail, e.tail).empty()) {
      reject(c, FiltrationStage::NodeDisjoint, "object shares a direct edge with the target object");
      continue;
    }
    if (dist[e.tail.value] <= depth) {
      reject(c, FiltrationStage::LatentPath,
             "path of length " + std::to_string(dist[e.tail.value]) + " to the target object");
      continue;
    }
    out.facts.push_back(c);
  }
  return out;
}

namespace {

std::vector<kg::Triple> eligible_targets(const kg::KnowledgeGraph& g, const ChainIndex& chains,
                                         std::uint64_t seed, const FiltrationConfig& cfg) {
  std::vector<std::uint32_t> candidates;
  for (std::uint32_t i = 0; i < g.triples().size(); ++i) {
    if (eligible(g, chains, i, cfg)) candidates.push_back(i);
  }
  std::mt19937_64 rng(seed);
  shuffle_with(candidates, rng);
  // One target per subject keeps cases from sharing their retain facts.
  std::vector<kg::Triple> out;
  std::set<std::uint32_t> heads;
  for (auto i : candidates) {
    const auto& t = g.triple(i);
    if (heads.insert(t.head.value).second) out.push_back(t);
  }
  return out;
}

}  // namespace

std::vector<kg::Triple> select_targets(const kg::KnowledgeGraph& g, const ChainIndex& chains,
                                       std::size_t n, std::uint64_t seed,
                                       const FiltrationConfig& cfg) {
  auto all = eligible_targets(g, chains, seed, cfg);
  if (all.size() < n) {
    throw SelectionError("requested " + std::to_string(n) + " targets but only " +
                             std::to_string(all.size()) + " chain-bearing triples qualify",
                         all.size());
  }
  all.resize(n);
  return all;
}

Benchmark build_benchmark(const kg::KnowledgeGraph& g, std::size_t n_targets, std::uint64_t seed,
                          const FiltrationConfig& cfg, const kg::TemplateBank& bank) {
  ChainIndex chains(g);
  auto targets = eligible_targets(g, chains, seed, cfg);
  Benchmark b;
  for (const auto& target : targets) {
    if (b.cases.size() == n_targets) break;
    BenchmarkCase c;
    char id[32];
    std::snprintf(id, sizeof id, "case-%03zu", b.cases.size());
    c.case_id = id;
    c.target = target;
    c.forget_neighborhood = kg::khop_neighborhood(g, target.head, cfg.neighborhood_k);
    c.chains = chains.through(triple_index(g, target));
    auto retain = build_retain_set(g, chains, target, cfg);
    c.retain_facts = retain.facts;
    c.provenance = retain.rejected;
    try {
      c.probes = generate_probes(g, c, bank, seed + b.cases.size() + 1);
    } catch (const kg::TemplateError&) {
      throw;
    } catch (const std::runtime_error&) {
      continue;  // resample: this target cannot carry a full probe set
    }
    c.missing_three_hop = std::none_of(c.probes.begin(), c.probes.end(),
                                       [](const Probe& p) { return p.type == ProbeType::ThreeHop; });
    for (std::size_t s = 0; s < 3; ++s) b.stats.rejected_per_stage[s] += retain.rejected_per_stage[s];
    if (c.missing_three_hop) b.stats.missing_three_hop.push_back(c.case_id);
    b.cases.push_back(std::move(c));
  }
  if (b.cases.size() < n_targets) {
    throw SelectionError("requested " + std::to_string(n_targets) + " targets but only " +
                             std::to_string(b.cases.size()) + " cases could be built",
                         b.cases.size());
  }
  b.stats.targets = b.cases.size();
  for (const auto& c : b.cases) {
    b.stats.direct_qa += static_cast<std::size_t>(
        std::count_if(c.probes.begin(), c.probes.end(), [](const Probe& p) {
          return p.type == ProbeType::Direct && p.family == TemplateFamily::QA;
        }));
  }
  return b;
}

std::vector<Probe> all_probes(const std::vector<BenchmarkCase>& cases) {
  std::vector<Probe> out;
  for (const auto& c : cases) out.insert(out.end(), c.probes.begin(), c.probes.end());
  return out;
}

}  // namespace kgf::bench
