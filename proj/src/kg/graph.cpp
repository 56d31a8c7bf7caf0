#include "kgf/kg/graph.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

namespace kgf::kg {
namespace {

constexpr std::array<std::string_view, kEntityTypeCount> kTypeNames = {
    "Person", "Film", "Organization", "Country", "City",
    "University", "Work", "Language", "Concept"};

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

std::uint64_t triple_key(const Triple& t) {
  // 24 bits per entity, 16 for the relation: ample for desk-scale worlds.
  return (static_cast<std::uint64_t>(t.head.value) << 40) |
         (static_cast<std::uint64_t>(t.relation.value) << 24) | t.tail.value;
}

bool is_safe_label(std::string_view label) {
  if (label.empty() || label.front() == ' ' || label.back() == ' ') return false;
  char prev = 'x';
  for (char c : label) {
    if (c == ' ') {
      if (prev == ' ') return false;
    } else if (!std::isalnum(static_cast<unsigned char>(c))) {
      return false;
    }
    prev = c;
  }
  return true;
}

}  // namespace

std::string_view to_string(EntityType type) {
  return kTypeNames.at(static_cast<std::size_t>(type));
}

std::optional<EntityType> parse_entity_type(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (kTypeNames[i] == name) return static_cast<EntityType>(i);
  }
  return std::nullopt;
}

RelationId GraphBuilder::add_relation(RelationType relation) {
  if (relation.family.empty()) {
    throw GraphError("relation '" + relation.label + "' has an empty family tag");
  }
  if (relation_index_.contains(relation.label)) {
    throw GraphError("duplicate relation label '" + relation.label + "'");
  }
  relation.id = RelationId{static_cast<std::uint32_t>(relations_.size())};
  relation_index_.emplace(relation.label, relation.id);
  relations_.push_back(std::move(relation));
  return relations_.back().id;
}

EntityId GraphBuilder::add_entity(std::string label, EntityType type) {
  if (!is_safe_label(label)) {
    throw GraphError("entity label '" + label + "' is not a space-separated alphanumeric phrase");
  }
  if (entity_index_.contains(label)) {
    throw GraphError("duplicate entity label '" + label + "'");
  }
  EntityId id{static_cast<std::uint32_t>(entities_.size())};
  entity_index_.emplace(label, id);
  entities_.push_back(Entity{id, std::move(label), type});
  return id;
}

bool GraphBuilder::add_triple(EntityId head, RelationId relation, EntityId tail) {
  const Entity& h = entities_.at(head.value);
  const Entity& t = entities_.at(tail.value);
  const RelationType& r = relations_.at(relation.value);
  if (h.type != r.domain || t.type != r.range) {
    throw GraphError("typing violation: (" + h.label + ", " + r.label + ", " + t.label +
                     ") expects " + std::string(to_string(r.domain)) + " -> " +
                     std::string(to_string(r.range)));
  }
  Triple triple{head, relation, tail};
  if (triple_keys_.contains(triple_key(triple))) return false;
  if (r.functional) {
    auto key = pair_key(head.value, relation.value);
    if (auto it = functional_index_.find(key); it != functional_index_.end()) {
      throw GraphError("functional relation '" + r.label + "' already has tail '" +
                       entities_[it->second.value].label + "' for head '" + h.label + "'");
    }
    functional_index_.emplace(key, tail);
  }
  triple_keys_.emplace(triple_key(triple), static_cast<std::uint32_t>(triples_.size()));
  ++tail_use_[pair_key(tail.value, relation.value)];
  triples_.push_back(triple);
  return true;
}

std::optional<EntityId> GraphBuilder::find_entity(std::string_view label) const {
  auto it = entity_index_.find(std::string(label));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> GraphBuilder::find_relation(std::string_view label) const {
  auto it = relation_index_.find(std::string(label));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<EntityId> GraphBuilder::functional_tail(EntityId head, RelationId relation) const {
  auto it = functional_index_.find(pair_key(head.value, relation.value));
  if (it == functional_index_.end()) return std::nullopt;
  return it->second;
}

bool GraphBuilder::has_tail_for(RelationId relation, EntityId tail) const {
  return tail_use_.contains(pair_key(tail.value, relation.value));
}

KnowledgeGraph GraphBuilder::build() && {
  KnowledgeGraph g;
  g.entities_ = std::move(entities_);
  g.relations_ = std::move(relations_);
  g.triples_ = std::move(triples_);
  g.entity_index_ = std::move(entity_index_);
  g.relation_index_ = std::move(relation_index_);
  g.out_.resize(g.entities_.size());
  g.in_.resize(g.entities_.size());
  g.incident_.resize(g.entities_.size());
  for (std::uint32_t i = 0; i < g.triples_.size(); ++i) {
    const Triple& t = g.triples_[i];
    g.out_[t.head.value].push_back(OutEdge{t.relation, t.tail, i});
    g.in_[t.tail.value].push_back(InEdge{t.relation, t.head, i});
    g.incident_[t.head.value].push_back(Incidence{t.tail, i});
    if (t.tail != t.head) g.incident_[t.tail.value].push_back(Incidence{t.head, i});
  }
  return g;
}

KnowledgeGraph GraphBuilder::snapshot() const {
  GraphBuilder copy = *this;
  return std::move(copy).build();
}

const Entity& KnowledgeGraph::entity(EntityId id) const {
  if (!contains(id)) throw LookupError("unknown entity id " + std::to_string(id.value));
  return entities_[id.value];
}

const RelationType& KnowledgeGraph::relation(RelationId id) const {
  if (id.value >= relations_.size()) {
    throw LookupError("unknown relation id " + std::to_string(id.value));
  }
  return relations_[id.value];
}

EntityId KnowledgeGraph::entity_by_label(std::string_view label) const {
  if (auto id = find_entity(label)) return *id;
  throw LookupError("unknown entity '" + std::string(label) + "'");
}

RelationId KnowledgeGraph::relation_by_label(std::string_view label) const {
  if (auto id = find_relation(label)) return *id;
  throw LookupError("unknown relation '" + std::string(label) + "'");
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view label) const {
  auto it = entity_index_.find(std::string(label));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view label) const {
  auto it = relation_index_.find(std::string(label));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

bool KnowledgeGraph::contains(const Triple& t) const {
  if (!contains(t.head)) return false;
  const auto& edges = out_[t.head.value];
  return std::any_of(edges.begin(), edges.end(), [&](const OutEdge& e) {
    return e.relation == t.relation && e.tail == t.tail;
  });
}

std::span<const OutEdge> KnowledgeGraph::out_edges(EntityId id) const {
  entity(id);
  return out_[id.value];
}

std::span<const InEdge> KnowledgeGraph::in_edges(EntityId id) const {
  entity(id);
  return in_[id.value];
}

std::span<const Incidence> KnowledgeGraph::incident(EntityId id) const {
  entity(id);
  return incident_[id.value];
}

std::vector<EntityId> KnowledgeGraph::tails(EntityId head, RelationId relation) const {
  std::vector<EntityId> result;
  for (const OutEdge& e : out_edges(head)) {
    if (e.relation == relation) result.push_back(e.tail);
  }
  return result;
}

std::vector<EntityId> KnowledgeGraph::heads(RelationId relation, EntityId tail) const {
  std::vector<EntityId> result;
  for (const InEdge& e : in_edges(tail)) {
    if (e.relation == relation) result.push_back(e.head);
  }
  return result;
}

std::string KnowledgeGraph::describe(const Triple& t) const {
  return "(" + entity(t.head).label + ", " + relation(t.relation).label + ", " +
         entity(t.tail).label + ")";
}

}  // namespace kgf::kg
