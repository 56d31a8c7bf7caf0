#include "kgf/kg/algorithms.hpp"

#include <algorithm>
#include <deque>

namespace kgf::kg {
namespace {

struct ExclusionMask {
  std::vector<char> triple;
  std::vector<char> node;

  ExclusionMask(const KnowledgeGraph& g, const PathExclusion& ex)
      : triple(g.triples().size(), 0), node(g.entities().size(), 0) {
    for (auto i : ex.triple_indices) {
      if (i < triple.size()) triple[i] = 1;
    }
    for (auto n : ex.nodes) {
      if (n.value < node.size()) node[n.value] = 1;
    }
  }
};

}  // namespace

std::vector<Distance> bfs_distances(const KnowledgeGraph& g, EntityId source,
                                    const PathExclusion& exclusion, Distance max_depth) {
  g.entity(source);
  ExclusionMask mask(g, exclusion);
  std::vector<Distance> dist(g.entities().size(), kUnreachable);
  std::deque<EntityId> frontier;
  dist[source.value] = 0;
  frontier.push_back(source);
  while (!frontier.empty()) {
    EntityId u = frontier.front();
    frontier.pop_front();
    if (dist[u.value] >= max_depth) continue;
    // Excluded nodes are reachable as endpoints but never expanded.
    if (u != source && mask.node[u.value]) continue;
    for (const Incidence& inc : g.incident(u)) {
      if (mask.triple[inc.triple_index]) continue;
      if (dist[inc.neighbor.value] != kUnreachable) continue;
      dist[inc.neighbor.value] = dist[u.value] + 1;
      frontier.push_back(inc.neighbor);
    }
  }
  return dist;
}

std::vector<EntityId> khop_neighborhood(const KnowledgeGraph& g, EntityId entity, unsigned k) {
  auto dist = bfs_distances(g, entity, {}, k);
  std::vector<EntityId> result;
  for (std::uint32_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= k) result.push_back(EntityId{i});
  }
  return result;
}

Distance geodesic_distance(const KnowledgeGraph& g, EntityId a, EntityId b) {
  g.entity(b);
  return bfs_distances(g, a)[b.value];
}

bool path_exists_within_depth(const KnowledgeGraph& g, EntityId a, EntityId b, unsigned depth,
                              const PathExclusion& exclusion) {
  g.entity(b);
  if (a == b) return true;
  auto dist = bfs_distances(g, a, exclusion, depth);
  return dist[b.value] <= depth;
}

std::vector<std::uint32_t> edges_between(const KnowledgeGraph& g, EntityId a, EntityId b) {
  std::vector<std::uint32_t> result;
  for (const Incidence& inc : g.incident(a)) {
    if (inc.neighbor == b) result.push_back(inc.triple_index);
  }
  return result;
}

}  // namespace kgf::kg
