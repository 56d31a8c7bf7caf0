#include "kgf/unlearn/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "kgf/kg/algorithms.hpp"

namespace kgf::unlearn {
namespace {

bool touches(const kg::Triple& t, kg::EntityId e) { return t.head == e || t.tail == e; }

bool listed(const std::vector<kg::Triple>& v, const kg::Triple& t) {
  return std::find(v.begin(), v.end(), t) != v.end();
}

NeighborItem render(const kg::KnowledgeGraph& g, const kg::TemplateBank& bank, const kg::Triple& t) {
  NeighborItem item;
  item.triple = t;
  const auto& h = g.entity(t.head).label;
  item.answer = g.entity(t.tail).label;
  item.question = kg::fill(bank.at(g.relation(t.relation).label).qa[0], h, item.answer);
  return item;
}

void normalize(std::vector<NeighborItem>& items) {
  double total = 0.0;
  for (const auto& it : items) total += it.weight;
  for (auto& it : items) it.weight /= total;
}

}  // namespace

void NeighborSet::validate(const kg::Triple& target, const std::string& target_answer) const {
  double total = 0.0;
  for (const auto& it : items) {
    if (!(it.weight > 0.0)) throw NeighborError("neighbor weight must be positive");
    if (it.triple == target) throw NeighborError("neighbor set contains the target fact");
    if (it.answer == target_answer) throw NeighborError("neighbor answer equals the target answer");
    total += it.weight;
  }
  if (!items.empty() && std::abs(total - 1.0) > 1e-9) throw NeighborError("neighbor weights do not sum to one");
}

double neighbor_score(const kg::KnowledgeGraph& g, const kg::Triple& target, const kg::Triple& candidate) {
  const kg::Distance d = kg::geodesic_distance(g, target.head, candidate.head);
  const double proximity = d == kg::kUnreachable ? 0.0 : 1.0 / (1.0 + static_cast<double>(d));
  return 2.0 * touches(candidate, target.head) + 1.0 * touches(candidate, target.tail) + proximity;
}

NeighborSet mine_neighbors(const kg::KnowledgeGraph& g, const kg::Triple& target, const kg::TemplateBank& bank,
                           std::size_t k, const MiningOptions& opts) {
  if (k < 1) throw NeighborError("k must be at least 1");
  if (!g.contains(target)) throw kg::LookupError("target fact is not in the graph");
  const auto hood = kg::khop_neighborhood(g, target.head, opts.hop_radius);
  const std::set<kg::EntityId> within(hood.begin(), hood.end());
  const std::string& target_answer = g.entity(target.tail).label;
  const auto dist = kg::bfs_distances(g, target.head);

  std::vector<NeighborItem> pool;
  for (const auto& t : g.triples()) {
    if (t == target || !(touches(t, target.head) || touches(t, target.tail))) continue;
    if (!within.contains(t.head) || !within.contains(t.tail)) continue;
    if (!g.relation(t.relation).functional || listed(opts.exclude, t)) continue;
    NeighborItem item = render(g, bank, t);
    if (item.answer == target_answer) continue;
    const kg::Distance d = dist[t.head.value];
    item.score = 2.0 * touches(t, target.head) + 1.0 * touches(t, target.tail) +
                 (d == kg::kUnreachable ? 0.0 : 1.0 / (1.0 + static_cast<double>(d)));
    pool.push_back(std::move(item));
  }
  if (pool.empty()) {
    throw NeighborError("no neighbor candidates for " + g.describe(target) + "; widen the hop radius");
  }
  std::sort(pool.begin(), pool.end(), [&](const NeighborItem& a, const NeighborItem& b) {
    if (a.score != b.score) return a.score > b.score;
    const auto da = g.degree(a.triple.head), db = g.degree(b.triple.head);
    if (da != db) return da > db;
    const auto la = std::tie(g.entity(a.triple.head).label, g.relation(a.triple.relation).label,
                             g.entity(a.triple.tail).label);
    const auto lb = std::tie(g.entity(b.triple.head).label, g.relation(b.triple.relation).label,
                             g.entity(b.triple.tail).label);
    return la < lb;
  });
  pool.resize(std::min(k, pool.size()));
  for (auto& it : pool) it.weight = opts.uniform_weights ? 1.0 : it.score;
  normalize(pool);
  NeighborSet set;
  set.k = pool.size();
  set.items = std::move(pool);
  return set;
}

std::size_t corruption_count(double rate, std::size_t n) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("corruption rate must lie in [0, 1]");
  // Scaled by 1e9 and rounded so 0.3 * 10 lands on 3 rather than 2.999...
  const double scaled = std::round(rate * static_cast<double>(n) * 1e9) / 1e9;
  return static_cast<std::size_t>(std::floor(scaled + 0.5));
}

NeighborSet corrupt_neighbors(const kg::KnowledgeGraph& g, const kg::Triple& target, const NeighborSet& set,
                              double rate, std::uint64_t seed, const kg::TemplateBank& bank,
                              const std::vector<kg::Triple>& exclude) {
  const std::size_t n = corruption_count(rate, set.items.size());
  if (n == 0) return set;
  const auto dist = kg::bfs_distances(g, target.head);
  const std::string& target_answer = g.entity(target.tail).label;
  std::vector<kg::Triple> distant;
  for (const auto& t : g.triples()) {
    const kg::Distance d = dist[t.head.value];
    if (d != kg::kUnreachable && d <= kCorruptionMinDistance) continue;
    if (!g.relation(t.relation).functional || listed(exclude, t)) continue;
    if (g.entity(t.tail).label == target_answer) continue;
    distant.push_back(t);
  }
  if (distant.empty()) {
    throw NeighborError("no fact lies beyond distance " + std::to_string(kCorruptionMinDistance) + " of " +
                        g.entity(target.head).label + "; the world is too small for the corruption ablation");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> slots(set.items.size());
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
  std::shuffle(slots.begin(), slots.end(), rng);
  std::shuffle(distant.begin(), distant.end(), rng);

  NeighborSet out = set;
  const double replacement_weight = 1.0 / static_cast<double>(set.items.size());
  for (std::size_t i = 0; i < n; ++i) {
    const kg::Triple& fact = distant[i % distant.size()];
    NeighborItem item = render(g, bank, fact);
    item.score = neighbor_score(g, target, fact);
    item.weight = replacement_weight;
    item.corrupted = true;
    out.items[slots[i]] = std::move(item);
  }
  normalize(out.items);
  return out;
}

}  // namespace kgf::unlearn
