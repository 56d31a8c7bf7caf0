#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "kgf/kg/graph.hpp"

namespace kgf::kg {

using Distance = std::uint32_t;
inline constexpr Distance kUnreachable = std::numeric_limits<Distance>::max();

/// Edges and interior nodes a path search must not use. Excluded nodes may
/// still be the endpoints of the query.
struct PathExclusion {
  std::vector<std::uint32_t> triple_indices;
  std::vector<EntityId> nodes;
};

/// Entities within `k` undirected steps of `entity`, including itself; sorted by id.
std::vector<EntityId> khop_neighborhood(const KnowledgeGraph& g, EntityId entity, unsigned k);

/// Undirected BFS distances from `source` (kUnreachable where disconnected).
std::vector<Distance> bfs_distances(const KnowledgeGraph& g, EntityId source,
                                    const PathExclusion& exclusion = {},
                                    Distance max_depth = kUnreachable);

/// Shortest undirected path length, or kUnreachable.
Distance geodesic_distance(const KnowledgeGraph& g, EntityId a, EntityId b);

/// True iff an undirected path of length <= depth joins a and b while
/// avoiding every excluded triple and excluded interior node.
bool path_exists_within_depth(const KnowledgeGraph& g, EntityId a, EntityId b, unsigned depth,
                              const PathExclusion& exclusion = {});

/// Triple indices of the edges directly joining a and b (either direction).
std::vector<std::uint32_t> edges_between(const KnowledgeGraph& g, EntityId a, EntityId b);

}  // namespace kgf::kg
