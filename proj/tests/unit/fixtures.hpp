#pragma once

#include <string>
#include <vector>

#include "kgf/kg/graph.hpp"
#include "kgf/kg/schema.hpp"

namespace fixtures {

struct Edge {
  std::string head, relation, tail;
};

/// Graph over the default schema; entities are declared with their types.
inline kgf::kg::KnowledgeGraph make_graph(const std::vector<std::pair<std::string, kgf::kg::EntityType>>& entities,
                                          const std::vector<Edge>& edges) {
  kgf::kg::GraphBuilder b;
  kgf::kg::register_default_relations(b);
  for (const auto& [label, type] : entities) b.add_entity(label, type);
  for (const auto& e : edges) {
    b.add_triple(*b.find_entity(e.head), *b.find_relation(e.relation), *b.find_entity(e.tail));
  }
  return std::move(b).build();
}

/// Path a - b - c - d of Concept nodes joined by is_a edges.
inline kgf::kg::KnowledgeGraph concept_chain() {
  using kgf::kg::EntityType;
  return make_graph({{"a", EntityType::Concept}, {"b", EntityType::Concept}, {"c", EntityType::Concept}, {"d", EntityType::Concept}},
                    {{"a", "is_a", "b"}, {"b", "is_a", "c"}, {"c", "is_a", "d"}});
}

inline kgf::kg::Triple triple(const kgf::kg::KnowledgeGraph& g, const std::string& h, const std::string& r,
                              const std::string& t) {
  return {g.entity_by_label(h), g.relation_by_label(r), g.entity_by_label(t)};
}

}  // namespace fixtures
