#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgf::kg {

enum class EntityType : std::uint8_t {
  Person,
  Film,
  Organization,
  Country,
  City,
  University,
  Work,
  Language,
  Concept,
};

inline constexpr std::size_t kEntityTypeCount = 9;

std::string_view to_string(EntityType type);
std::optional<EntityType> parse_entity_type(std::string_view name);

struct EntityId {
  std::uint32_t value = 0;
  auto operator<=>(const EntityId&) const = default;
};

struct RelationId {
  std::uint32_t value = 0;
  auto operator<=>(const RelationId&) const = default;
};

struct Entity {
  EntityId id;
  std::string label;
  EntityType type = EntityType::Concept;
};

struct RelationType {
  RelationId id;
  std::string label;
  EntityType domain = EntityType::Concept;
  EntityType range = EntityType::Concept;
  bool functional = true;
  std::string family;
};

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;
  auto operator<=>(const Triple&) const = default;
};

struct OutEdge {
  RelationId relation;
  EntityId tail;
  std::uint32_t triple_index = 0;
};

struct InEdge {
  RelationId relation;
  EntityId head;
  std::uint32_t triple_index = 0;
};

// Undirected incidence: one record per triple endpoint.
struct Incidence {
  EntityId neighbor;
  std::uint32_t triple_index = 0;
};

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KnowledgeGraph;

/// Mutable staging area; `build()` validates and freezes into a KnowledgeGraph.
class GraphBuilder {
 public:
  RelationId add_relation(RelationType relation);
  EntityId add_entity(std::string label, EntityType type);

  /// Returns false (and changes nothing) when the triple already exists.
  /// Throws GraphError on a typing violation or a second tail for a
  /// functional relation.
  bool add_triple(EntityId head, RelationId relation, EntityId tail);

  std::optional<EntityId> find_entity(std::string_view label) const;
  std::optional<RelationId> find_relation(std::string_view label) const;
  const Entity& entity(EntityId id) const { return entities_.at(id.value); }
  const RelationType& relation(RelationId id) const { return relations_.at(id.value); }
  std::size_t entity_count() const { return entities_.size(); }
  std::size_t triple_count() const { return triples_.size(); }

  /// Tail of a functional relation for `head`, if already assigned.
  std::optional<EntityId> functional_tail(EntityId head, RelationId relation) const;
  bool has_tail_for(RelationId relation, EntityId tail) const;

  KnowledgeGraph build() &&;
  /// Frozen copy of the current state; the builder stays usable.
  KnowledgeGraph snapshot() const;

 private:
  std::vector<Entity> entities_;
  std::vector<RelationType> relations_;
  std::vector<Triple> triples_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::unordered_map<std::uint64_t, EntityId> functional_index_;
  std::unordered_map<std::uint64_t, std::uint32_t> tail_use_;
  std::unordered_map<std::uint64_t, std::uint32_t> triple_keys_;
};

/// Immutable typed multigraph of entities and relation-labelled triples.
class KnowledgeGraph {
 public:
  std::span<const Entity> entities() const { return entities_; }
  std::span<const RelationType> relations() const { return relations_; }
  std::span<const Triple> triples() const { return triples_; }

  const Entity& entity(EntityId id) const;
  const RelationType& relation(RelationId id) const;
  const Triple& triple(std::uint32_t index) const { return triples_.at(index); }

  EntityId entity_by_label(std::string_view label) const;
  RelationId relation_by_label(std::string_view label) const;
  std::optional<EntityId> find_entity(std::string_view label) const;
  std::optional<RelationId> find_relation(std::string_view label) const;

  bool contains(EntityId id) const { return id.value < entities_.size(); }
  bool contains(const Triple& t) const;

  std::span<const OutEdge> out_edges(EntityId id) const;
  std::span<const InEdge> in_edges(EntityId id) const;
  std::span<const Incidence> incident(EntityId id) const;

  /// All tails t with (head, relation, t) in the graph.
  std::vector<EntityId> tails(EntityId head, RelationId relation) const;
  /// All heads h with (h, relation, tail) in the graph.
  std::vector<EntityId> heads(RelationId relation, EntityId tail) const;

  /// Undirected degree (number of incident triples).
  std::size_t degree(EntityId id) const { return incident(id).size(); }

  std::string describe(const Triple& t) const;

 private:
  friend class GraphBuilder;
  std::vector<Entity> entities_;
  std::vector<RelationType> relations_;
  std::vector<Triple> triples_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::vector<std::vector<OutEdge>> out_;
  std::vector<std::vector<InEdge>> in_;
  std::vector<std::vector<Incidence>> incident_;
};

}  // namespace kgf::kg

template <>
struct std::hash<kgf::kg::EntityId> {
  std::size_t operator()(const kgf::kg::EntityId& id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
