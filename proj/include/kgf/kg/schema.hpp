#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgf/kg/graph.hpp"

namespace kgf::kg {

struct PatternStep {
  std::string relation;
  bool inverse = false;  // traverse tail -> head
};

/// A typed relation path h -r1-> m1 -r2-> ... -> t.
struct ChainPattern {
  std::string id;
  EntityType start = EntityType::Person;
  std::vector<PatternStep> steps;

  std::size_t hops() const { return steps.size(); }
};

/// Relation types of the built-in encyclopedic + commonsense schema.
std::span<const RelationType> default_relations();

/// Adds every default relation to `builder`.
void register_default_relations(GraphBuilder& builder);

/// The sixteen multi-hop patterns A..V the world sampler instantiates.
std::span<const ChainPattern> sampler_patterns();

/// Sampler patterns plus the two-hop windows of the three-hop patterns that
/// are not already sampler patterns. This is the catalog used when mining
/// chains through a target edge.
std::span<const ChainPattern> chain_catalog();

const ChainPattern& find_pattern(std::string_view id);

/// Relation labels permitted for retain facts about a subject of `type`.
std::span<const std::string> retain_pool(EntityType type);

/// One matched path: `nodes.size() == hops + 1`, `triples.size() == hops`.
struct ChainInstance {
  const ChainPattern* pattern = nullptr;
  std::vector<EntityId> nodes;
  std::vector<std::uint32_t> triples;

  EntityId head() const { return nodes.front(); }
  EntityId answer() const { return nodes.back(); }
};

std::vector<ChainInstance> enumerate_chains(const KnowledgeGraph& g, const ChainPattern& pattern);

/// All answers reachable from `start` by following `pattern`'s steps.
std::vector<EntityId> chain_answers(const KnowledgeGraph& g, const ChainPattern& pattern,
                                    EntityId start);

}  // namespace kgf::kg
