#include "kgf/kg/schema.hpp"

#include <algorithm>
#include <array>
#include <set>

namespace kgf::kg {
namespace {

using ET = EntityType;

RelationType rel(std::string label, ET domain, ET range, std::string family,
                 bool functional = true) {
  RelationType r;
  r.label = std::move(label);
  r.domain = domain;
  r.range = range;
  r.functional = functional;
  r.family = std::move(family);
  return r;
}

const std::vector<RelationType>& relations_table() {
  static const std::vector<RelationType> table = {
      // Relations that appear in multi-hop chains.
      rel("capital_of", ET::Country, ET::City, "capital"),
      rel("city_country", ET::City, ET::Country, "location"),
      rel("citizenship", ET::Person, ET::Country, "nationality"),
      rel("educated_at", ET::Person, ET::University, "education"),
      rel("university_country", ET::University, ET::Country, "location"),
      rel("person_language", ET::Person, ET::Language, "language"),
      rel("official_language", ET::Country, ET::Language, "language"),
      rel("director", ET::Film, ET::Person, "film_crew"),
      rel("producer", ET::Film, ET::Person, "film_crew"),
      rel("performer", ET::Work, ET::Person, "performance"),
      rel("hq_location", ET::Organization, ET::City, "headquarters"),
      rel("country_of_origin", ET::Film, ET::Country, "origin"),
      // Retain property pools.
      rel("occupation", ET::Person, ET::Concept, "occupation"),
      rel("award", ET::Person, ET::Concept, "award"),
      rel("employer", ET::Person, ET::Organization, "employment"),
      rel("birth_place", ET::Person, ET::City, "nationality"),
      rel("notable_work", ET::Person, ET::Work, "oeuvre"),
      rel("industry", ET::Organization, ET::Concept, "industry"),
      rel("founded_by", ET::Organization, ET::Person, "founder"),
      rel("genre", ET::Film, ET::Concept, "genre"),
      rel("composer", ET::Film, ET::Person, "music"),
      rel("film_language", ET::Film, ET::Language, "language"),
      rel("work_genre", ET::Work, ET::Concept, "genre"),
      rel("continent", ET::Country, ET::Concept, "continent"),
      rel("time_zone", ET::Country, ET::Concept, "time_zone"),
      rel("bordering_sea", ET::Country, ET::Concept, "hydrography"),
      rel("located_near_water", ET::City, ET::Concept, "hydrography"),
      // Commonsense associations with many valid answers.
      rel("is_a", ET::Concept, ET::Concept, "taxonomy", false),
      rel("used_for", ET::Concept, ET::Concept, "purpose", false),
  };
  return table;
}

ChainPattern pattern(std::string id, ET start, std::vector<PatternStep> steps) {
  return ChainPattern{std::move(id), start, std::move(steps)};
}

PatternStep fwd(std::string r) { return PatternStep{std::move(r), false}; }
PatternStep inv(std::string r) { return PatternStep{std::move(r), true}; }

const std::vector<ChainPattern>& sampler_table() {
  static const std::vector<ChainPattern> table = {
      pattern("A", ET::Organization, {fwd("hq_location"), fwd("city_country")}),
      pattern("B", ET::Film, {fwd("director"), fwd("citizenship")}),
      pattern("F", ET::Country, {inv("citizenship"), fwd("person_language")}),
      pattern("H", ET::Work, {fwd("performer"), fwd("citizenship")}),
      pattern("I", ET::Film, {fwd("country_of_origin"), fwd("capital_of")}),
      pattern("J", ET::Person, {fwd("citizenship"), fwd("capital_of")}),
      pattern("K", ET::Film, {fwd("country_of_origin"), fwd("official_language")}),
      pattern("U", ET::Person, {fwd("educated_at"), fwd("university_country")}),
      pattern("C", ET::Organization, {fwd("hq_location"), fwd("city_country"), fwd("capital_of")}),
      pattern("D", ET::Film, {fwd("director"), fwd("citizenship"), fwd("capital_of")}),
      pattern("E", ET::Work, {fwd("performer"), fwd("citizenship"), fwd("capital_of")}),
      pattern("G", ET::Organization,
              {fwd("hq_location"), fwd("city_country"), fwd("official_language")}),
      pattern("L", ET::Film, {fwd("director"), fwd("educated_at"), fwd("university_country")}),
      pattern("S", ET::Film, {fwd("producer"), fwd("citizenship"), fwd("capital_of")}),
      pattern("T", ET::Film, {fwd("producer"), fwd("citizenship"), fwd("official_language")}),
      pattern("V", ET::Person, {fwd("educated_at"), fwd("university_country"), fwd("capital_of")}),
  };
  return table;
}

ET step_source_type(const PatternStep& step) {
  const auto& rels = relations_table();
  auto it = std::find_if(rels.begin(), rels.end(),
                         [&](const RelationType& r) { return r.label == step.relation; });
  return step.inverse ? it->range : it->domain;
}

std::vector<ChainPattern> build_catalog() {
  std::vector<ChainPattern> catalog(sampler_table().begin(), sampler_table().end());
  auto signature = [](const ChainPattern& p) {
    std::string s;
    for (const auto& step : p.steps) s += (step.inverse ? "~" : "") + step.relation + "/";
    return s;
  };
  std::set<std::string> seen;
  for (const auto& p : catalog) seen.insert(signature(p));
  for (const auto& p : sampler_table()) {
    if (p.hops() != 3) continue;
    for (std::size_t offset = 0; offset + 2 <= p.hops(); ++offset) {
      ChainPattern window;
      window.id = p.id + std::to_string(offset + 1) + std::to_string(offset + 2);
      window.steps = {p.steps[offset], p.steps[offset + 1]};
      window.start = step_source_type(window.steps.front());
      if (seen.insert(signature(window)).second) catalog.push_back(std::move(window));
    }
  }
  return catalog;
}

void walk(const KnowledgeGraph& g, const ChainPattern& p, const std::vector<RelationId>& rels,
          ChainInstance& current, std::vector<ChainInstance>& out) {
  const std::size_t depth = current.triples.size();
  if (depth == p.hops()) {
    out.push_back(current);
    return;
  }
  const EntityId at = current.nodes.back();
  const PatternStep& step = p.steps[depth];
  auto follow = [&](EntityId next, std::uint32_t triple_index) {
    // Chains are simple paths.
    if (std::find(current.nodes.begin(), current.nodes.end(), next) != current.nodes.end()) return;
    current.nodes.push_back(next);
    current.triples.push_back(triple_index);
    walk(g, p, rels, current, out);
    current.nodes.pop_back();
    current.triples.pop_back();
  };
  if (step.inverse) {
    for (const InEdge& e : g.in_edges(at)) {
      if (e.relation == rels[depth]) follow(e.head, e.triple_index);
    }
  } else {
    for (const OutEdge& e : g.out_edges(at)) {
      if (e.relation == rels[depth]) follow(e.tail, e.triple_index);
    }
  }
}

}  // namespace

std::span<const RelationType> default_relations() { return relations_table(); }

void register_default_relations(GraphBuilder& builder) {
  for (const auto& r : relations_table()) builder.add_relation(r);
}

std::span<const ChainPattern> sampler_patterns() { return sampler_table(); }

std::span<const ChainPattern> chain_catalog() {
  static const std::vector<ChainPattern> catalog = build_catalog();
  return catalog;
}

const ChainPattern& find_pattern(std::string_view id) {
  for (const auto& p : chain_catalog()) {
    if (p.id == id) return p;
  }
  throw LookupError("unknown chain pattern '" + std::string(id) + "'");
}

std::span<const std::string> retain_pool(EntityType type) {
  static const std::array<std::vector<std::string>, kEntityTypeCount> pools = [] {
    std::array<std::vector<std::string>, kEntityTypeCount> p;
    p[static_cast<std::size_t>(ET::Person)] = {"occupation", "award", "employer", "birth_place",
                                               "notable_work"};
    p[static_cast<std::size_t>(ET::Organization)] = {"industry", "founded_by"};
    p[static_cast<std::size_t>(ET::Film)] = {"genre", "composer", "film_language"};
    p[static_cast<std::size_t>(ET::Work)] = {"work_genre"};
    p[static_cast<std::size_t>(ET::Country)] = {"continent", "time_zone", "bordering_sea"};
    p[static_cast<std::size_t>(ET::City)] = {"located_near_water"};
    return p;
  }();
  return pools[static_cast<std::size_t>(type)];
}

std::vector<ChainInstance> enumerate_chains(const KnowledgeGraph& g, const ChainPattern& pattern) {
  std::vector<RelationId> rels;
  for (const auto& step : pattern.steps) {
    auto id = g.find_relation(step.relation);
    if (!id) return {};
    rels.push_back(*id);
  }
  std::vector<ChainInstance> out;
  for (const Entity& e : g.entities()) {
    if (e.type != pattern.start) continue;
    ChainInstance current;
    current.pattern = &pattern;
    current.nodes.push_back(e.id);
    walk(g, pattern, rels, current, out);
  }
  return out;
}

std::vector<EntityId> chain_answers(const KnowledgeGraph& g, const ChainPattern& pattern,
                                    EntityId start) {
  std::vector<EntityId> frontier{start};
  for (const auto& step : pattern.steps) {
    auto rel_id = g.find_relation(step.relation);
    if (!rel_id) return {};
    std::vector<EntityId> next;
    for (EntityId at : frontier) {
      auto hop = step.inverse ? g.heads(*rel_id, at) : g.tails(at, *rel_id);
      next.insert(next.end(), hop.begin(), hop.end());
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    frontier = std::move(next);
  }
  return frontier;
}

}  // namespace kgf::kg
