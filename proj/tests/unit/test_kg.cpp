#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <queue>
#include <random>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "kgf/bench/benchmark.hpp"
#include "kgf/kg/algorithms.hpp"
#include "kgf/kg/io.hpp"
#include "kgf/kg/templates.hpp"
#include "kgf/kg/world.hpp"

namespace fs = std::filesystem;
using namespace kgf;
using kg::EntityType;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("kgf-unit-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

kg::KnowledgeGraph random_concepts(int n, int edges, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::string, EntityType>> ents;
  for (int i = 0; i < n; ++i) ents.emplace_back("n" + std::to_string(i), EntityType::Concept);
  std::vector<fixtures::Edge> es;
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::set<std::pair<int, int>> seen;
  while (static_cast<int>(es.size()) < edges) {
    int a = pick(rng), b = pick(rng);
    if (a == b || !seen.insert({a, b}).second) continue;
    es.push_back({"n" + std::to_string(a), "is_a", "n" + std::to_string(b)});
  }
  return fixtures::make_graph(ents, es);
}

std::vector<std::vector<std::uint32_t>> adjacency(const kg::KnowledgeGraph& g) {
  std::vector<std::vector<std::uint32_t>> adj(g.entities().size());
  for (const auto& t : g.triples()) {
    adj[t.head.value].push_back(t.tail.value);
    adj[t.tail.value].push_back(t.head.value);
  }
  return adj;
}

}  // namespace

TEST_CASE("graph builder enforces typing and functionality") {
  kg::GraphBuilder b;
  kg::register_default_relations(b);
  auto city = b.add_entity("x city", EntityType::City);
  auto person = b.add_entity("y person", EntityType::Person);
  auto country = b.add_entity("z land", EntityType::Country);
  auto other = b.add_entity("w land", EntityType::Country);
  CHECK_THROWS_AS(b.add_triple(city, *b.find_relation("director"), person), kg::GraphError);
  CHECK(b.add_triple(person, *b.find_relation("citizenship"), country));
  CHECK_FALSE(b.add_triple(person, *b.find_relation("citizenship"), country));
  CHECK_THROWS_AS(b.add_triple(person, *b.find_relation("citizenship"), other), kg::GraphError);
}

TEST_CASE("khop neighborhoods on a chain") {
  const auto g = fixtures::concept_chain();
  auto ids = [&](std::initializer_list<const char*> labels) {
    std::vector<kg::EntityId> v;
    for (auto l : labels) v.push_back(g.entity_by_label(l));
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(kg::khop_neighborhood(g, g.entity_by_label("a"), 2) == ids({"a", "b", "c"}));
  CHECK(kg::khop_neighborhood(g, g.entity_by_label("a"), 0) == ids({"a"}));
}

TEST_CASE("khop agrees with an independent BFS on a random graph") {
  const auto g = random_concepts(20, 26, 3);
  const auto adj = adjacency(g);
  for (std::uint32_t s = 0; s < 20; ++s) {
    std::vector<int> d(20, -1);
    std::queue<std::uint32_t> q;
    d[s] = 0;
    q.push(s);
    while (!q.empty()) {
      auto u = q.front();
      q.pop();
      for (auto v : adj[u]) {
        if (d[v] < 0) {
          d[v] = d[u] + 1;
          q.push(v);
        }
      }
    }
    std::vector<kg::EntityId> want;
    for (std::uint32_t v = 0; v < 20; ++v) {
      if (d[v] >= 0 && d[v] <= 3) want.push_back(kg::EntityId{v});
    }
    CHECK(kg::khop_neighborhood(g, kg::EntityId{s}, 3) == want);
  }
}

TEST_CASE("geodesic distances") {
  const auto g = fixtures::concept_chain();
  const auto a = g.entity_by_label("a"), d = g.entity_by_label("d");
  CHECK(kg::geodesic_distance(g, a, d) == 3);
  CHECK(kg::geodesic_distance(g, a, a) == 0);
  const auto split = fixtures::make_graph({{"p", EntityType::Concept}, {"q", EntityType::Concept}, {"r", EntityType::Concept}},
                                          {{"p", "is_a", "q"}});
  const auto inf = kg::geodesic_distance(split, split.entity_by_label("p"), split.entity_by_label("r"));
  CHECK(inf == kg::kUnreachable);
  CHECK(inf > 3u);
}

TEST_CASE("bounded path existence") {
  const auto g = fixtures::concept_chain();
  const auto a = g.entity_by_label("a"), b = g.entity_by_label("b"), d = g.entity_by_label("d");
  CHECK(kg::path_exists_within_depth(g, a, d, 3));
  CHECK_FALSE(kg::path_exists_within_depth(g, a, d, 2));
  kg::PathExclusion ex;
  ex.triple_indices = kg::edges_between(g, a, b);
  CHECK_FALSE(kg::path_exists_within_depth(g, a, b, 3, ex));
}

TEST_CASE("bounded path existence agrees with brute-force path enumeration") {
  const auto g = random_concepts(30, 34, 9);
  const auto adj = adjacency(g);
  for (std::uint32_t a = 0; a < 30; ++a) {
    for (std::uint32_t b = 0; b < 30; ++b) {
      bool found = false;
      std::vector<std::uint32_t> path{a};
      std::function<void(std::uint32_t, int)> dfs = [&](std::uint32_t u, int depth) {
        if (u == b) {
          found = true;
          return;
        }
        if (depth == 3 || found) return;
        for (auto v : adj[u]) {
          if (std::find(path.begin(), path.end(), v) != path.end()) continue;
          path.push_back(v);
          dfs(v, depth + 1);
          path.pop_back();
        }
      };
      dfs(a, 0);
      CHECK(kg::path_exists_within_depth(g, kg::EntityId{a}, kg::EntityId{b}, 3) == found);
    }
  }
}

TEST_CASE("world generation honours pattern quotas") {
  const auto c = kg::WorldConfig::desk_default(7);
  const auto g = kg::generate_world(c);
  for (const auto& [id, quota] : c.pattern_quotas) {
    CAPTURE(id);
    CHECK(kg::count_pattern_instances(g, kg::find_pattern(id)) >= static_cast<std::size_t>(quota));
  }
  auto bad = c;
  bad.count(EntityType::Country) = 0;
  CHECK_THROWS_AS(kg::validate(bad), kg::ConfigError);
}

TEST_CASE("world generation is deterministic") {
  const auto a = kg::generate_world(kg::WorldConfig::desk_default(7));
  const auto b = kg::generate_world(kg::WorldConfig::desk_default(7));
  REQUIRE(a.triples().size() == b.triples().size());
  CHECK(std::equal(a.triples().begin(), a.triples().end(), b.triples().begin()));
  for (std::size_t i = 0; i < a.entities().size(); ++i) CHECK(a.entities()[i].label == b.entities()[i].label);
  CHECK(a.entities().size() == 200);
}

TEST_CASE("two-hop answers follow the emitted edges") {
  const auto g = kg::generate_world(kg::WorldConfig::desk_default(7));
  const auto& b = kg::find_pattern("B");
  const auto chains = kg::enumerate_chains(g, b);
  REQUIRE_FALSE(chains.empty());
  for (const auto& ch : chains) {
    const auto film = ch.head();
    const auto director = g.tails(film, g.relation_by_label("director"));
    REQUIRE(director.size() == 1);
    const auto country = g.tails(director[0], g.relation_by_label("citizenship"));
    REQUIRE(country.size() == 1);
    CHECK(ch.answer() == country[0]);
  }
}

TEST_CASE("scaled worlds reach about 300 entities") {
  const auto g = kg::generate_world(kg::WorldConfig::scaled(1.5, 3));
  CHECK(g.entities().size() == 300);
}

TEST_CASE("triple TSV loading") {
  const auto dir = temp_dir("io");
  write(dir / "schema.tsv",
        "entity\tann\tPerson\nentity\tbel\tCountry\nentity\tcor\tCity\n"
        "relation\tcitizenship\tPerson\tCountry\t1\tnationality\n"
        "relation\tcapital_of\tCountry\tCity\t1\tcapital\n"
        "relation\tbirth_place\tPerson\tCity\t1\tnationality\n"
        "relation\tdirector\tFilm\tPerson\t1\tfilm_crew\n");
  write(dir / "ok.tsv", "ann\tcitizenship\tbel\nbel\tcapital_of\tcor\nann\tbirth_place\tcor\n");
  auto loaded = kg::load_triples(dir / "ok.tsv", dir / "schema.tsv");
  CHECK(loaded.graph.triples().size() == 3);
  CHECK(loaded.duplicate_warnings == 0);

  write(dir / "dup.tsv", "ann\tcitizenship\tbel\nann\tcitizenship\tbel\n");
  auto dup = kg::load_triples(dir / "dup.tsv", dir / "schema.tsv");
  CHECK(dup.graph.triples().size() == 1);
  CHECK(dup.duplicate_warnings == 1);

  write(dir / "bad.tsv", "cor\tdirector\tann\n");
  try {
    kg::load_triples(dir / "bad.tsv", dir / "schema.tsv");
    FAIL("typing violation accepted");
  } catch (const kg::ParseError& e) {
    CHECK(e.line() == 1);
  }
}

TEST_CASE("written worlds reload to the same benchmark") {
  const auto g = kg::generate_world(kg::WorldConfig::desk_default(7));
  const auto dir = temp_dir("world");
  const auto [tsv, schema] = kg::write_world(g, dir);
  const auto loaded = kg::load_triples(tsv, schema).graph;
  REQUIRE(loaded.triples().size() == g.triples().size());
  std::set<std::tuple<std::string, std::string, std::string>> a, b;
  for (const auto& t : g.triples()) a.emplace(g.entity(t.head).label, g.relation(t.relation).label, g.entity(t.tail).label);
  for (const auto& t : loaded.triples()) {
    b.emplace(loaded.entity(t.head).label, loaded.relation(t.relation).label, loaded.entity(t.tail).label);
  }
  CHECK(a == b);
  const auto pa = bench::all_probes(bench::build_benchmark(g, 8, 1).cases);
  const auto pb = bench::all_probes(bench::build_benchmark(loaded, 8, 1).cases);
  CHECK(pa == pb);
}

TEST_CASE("template filling and chain phrasing") {
  CHECK(kg::fill("What is the capital of {h}?", "ruritania", "") == "What is the capital of ruritania?");
  const auto& bank = kg::TemplateBank::builtin();
  CHECK_THROWS_AS(bank.at("no_such_relation"), kg::TemplateError);
  for (const auto& r : kg::default_relations()) {
    CHECK(bank.contains(r.label));
    CHECK(bank.at(r.label).qa.size() >= 3);
  }
  const auto q = kg::chain_question(bank, kg::find_pattern("J"), "ann bel");
  CHECK(q.find("ann bel") != std::string::npos);
}
