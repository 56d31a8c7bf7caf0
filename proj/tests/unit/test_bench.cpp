#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "kgf/bench/benchmark.hpp"
#include "kgf/kg/world.hpp"

namespace fs = std::filesystem;
using namespace kgf;
using kg::EntityType;

namespace {

const kg::KnowledgeGraph& desk_world() {
  static const auto g = kg::generate_world(kg::WorldConfig::desk_default(7));
  return g;
}

const bench::Benchmark& desk_bench() {
  static const auto b = bench::build_benchmark(desk_world(), 10, 1);
  return b;
}

bench::Probe sample_probe(std::string answer) {
  bench::Probe p;
  p.case_id = "case-000";
  p.probe_id = "case-000-QA-direct-0";
  p.question = "What is the capital of vorland?";
  p.answer = std::move(answer);
  p.target = {"vorland", "capital_of", "tesk"};
  p.split = bench::Split::ForgetTrain;
  return p;
}

bool has_triple(const std::vector<kg::Triple>& v, const kg::Triple& t) {
  return std::find(v.begin(), v.end(), t) != v.end();
}

}  // namespace

TEST_CASE("retain facts: schema stage rejects the target's relation family") {
  const auto g = fixtures::make_graph({{"ein", EntityType::Person},
                                       {"ulm", EntityType::City},
                                       {"germ", EntityType::Country},
                                       {"phys", EntityType::Concept}},
                                      {{"ein", "birth_place", "ulm"}, {"ein", "citizenship", "germ"}, {"ein", "occupation", "phys"}});
  const bench::ChainIndex chains(g);
  const auto rs = bench::build_retain_set(g, chains, fixtures::triple(g, "ein", "birth_place", "ulm"), {});
  CHECK(has_triple(rs.facts, fixtures::triple(g, "ein", "occupation", "phys")));
  CHECK_FALSE(has_triple(rs.facts, fixtures::triple(g, "ein", "citizenship", "germ")));
  CHECK(rs.rejected_per_stage[0] == 1);
}

TEST_CASE("retain facts: distant objects are kept, latent paths are rejected") {
  const auto g = fixtures::make_graph({{"ein", EntityType::Person},
                                       {"nob", EntityType::Concept},
                                       {"germ", EntityType::Country},
                                       {"phys", EntityType::Concept},
                                       {"sci", EntityType::Concept}},
                                      {{"ein", "award", "nob"},
                                       {"ein", "citizenship", "germ"},
                                       {"ein", "occupation", "phys"},
                                       {"phys", "is_a", "sci"},
                                       {"nob", "is_a", "sci"}});
  const bench::ChainIndex chains(g);
  const auto rs = bench::build_retain_set(g, chains, fixtures::triple(g, "ein", "award", "nob"), {});
  CHECK(has_triple(rs.facts, fixtures::triple(g, "ein", "citizenship", "germ")));
  CHECK_FALSE(has_triple(rs.facts, fixtures::triple(g, "ein", "occupation", "phys")));
  REQUIRE(rs.rejected.size() == 1);
  CHECK(rs.rejected[0].stage == bench::FiltrationStage::LatentPath);
}

TEST_CASE("every case carries 16 probes in the fixed distribution") {
  const std::map<bench::ProbeType, int> per_family{{bench::ProbeType::Direct, 1},  {bench::ProbeType::Paraphrase, 2},
                                                   {bench::ProbeType::Inverse, 1}, {bench::ProbeType::TwoHop, 2},
                                                   {bench::ProbeType::ThreeHop, 1}, {bench::ProbeType::Retain, 1}};
  const auto& b = desk_bench();
  REQUIRE(b.cases.size() == 10);
  CHECK(b.stats.direct_qa == 10);
  for (const auto& c : b.cases) {
    CHECK(c.probes.size() == 16);
    std::map<std::pair<bench::TemplateFamily, bench::ProbeType>, int> counts;
    for (const auto& p : c.probes) {
      ++counts[{p.family, p.type}];
      CHECK(p.hop == bench::hop_of(p.type));
      CHECK(bench::verify_probe(p, &desk_world()).ok);
    }
    for (auto f : {bench::TemplateFamily::QA, bench::TemplateFamily::FB}) {
      for (const auto& [type, n] : per_family) CHECK(counts[{f, type}] == n);
    }
  }
}

TEST_CASE("direct QA probes name the head and answer with the tail") {
  for (const auto& c : desk_bench().cases) {
    const auto& g = desk_world();
    const auto& direct = c.probes.front();
    REQUIRE(direct.type == bench::ProbeType::Direct);
    CHECK(direct.family == bench::TemplateFamily::QA);
    CHECK(direct.question.find(g.entity(c.target.head).label) != std::string::npos);
    CHECK(direct.answer == g.entity(c.target.tail).label);
  }
}

TEST_CASE("target selection") {
  const auto& g = desk_world();
  const bench::ChainIndex chains(g);
  const auto a = bench::select_targets(g, chains, 5, 3);
  CHECK(a == bench::select_targets(g, chains, 5, 3));
  CHECK(a.size() == 5);
  try {
    bench::select_targets(g, chains, 100000, 3);
    FAIL("oversized request accepted");
  } catch (const bench::SelectionError& e) {
    CHECK(e.achievable() > 0);
    CHECK(e.achievable() < 100000);
  }
}

TEST_CASE("probe verification") {
  auto leak = sample_probe("paris");
  leak.question = "What is the capital of X? It is Paris";
  const auto v = bench::verify_probe(leak);
  CHECK_FALSE(v.ok);
  CHECK(v.reason == "answer-leak");
  CHECK(bench::verify_probe(sample_probe("tesk")).ok);

  const auto g = fixtures::make_graph({{"pet", EntityType::Concept}, {"dog", EntityType::Concept}, {"cat", EntityType::Concept}},
                                      {{"dog", "is_a", "pet"}, {"dog", "is_a", "cat"}});
  bench::Probe amb = sample_probe("pet");
  amb.question = "What kind of thing is dog?";
  amb.target = {"dog", "is_a", "pet"};
  amb.chain = {amb.target};
  const auto va = bench::verify_probe(amb, &g);
  CHECK_FALSE(va.ok);
  CHECK(va.reason == "ambiguous");
}

TEST_CASE("known-probe filter") {
  std::vector<bench::Probe> probes;
  for (int i = 0; i < 4; ++i) {
    auto p = sample_probe("answer " + std::to_string(i));
    p.case_id = "case-00" + std::to_string(i);
    probes.push_back(p);
  }
  auto gold = bench::filter_known(probes, [](const bench::Probe& p) { return p.answer; });
  CHECK(gold.kept.size() == 4);
  auto empty = bench::filter_known(probes, [](const bench::Probe&) { return std::string(); });
  CHECK(empty.kept.empty());
  CHECK(empty.dropped.size() == 4);
  auto three = bench::filter_known(probes, [](const bench::Probe& p) {
    return p.case_id == "case-002" ? std::string("wrong") : p.answer;
  });
  CHECK(three.kept.size() == 3);
  REQUIRE(three.dropped.size() == 1);
  CHECK(three.dropped[0].case_id == "case-002");
}

TEST_CASE("dataset round trip and errors") {
  const auto dir = fs::temp_directory_path() / "kgf-unit-dataset";
  fs::create_directories(dir);
  const auto probes = bench::all_probes(desk_bench().cases);
  bench::emit_dataset(probes, dir / "probes.jsonl");
  CHECK(bench::load_dataset(dir / "probes.jsonl") == probes);

  std::ifstream in(dir / "probes.jsonl");
  std::string first, second;
  std::getline(in, first);
  std::getline(in, second);
  std::ofstream(dir / "cut.jsonl") << first << '\n' << second.substr(0, second.size() / 2) << '\n';
  try {
    bench::load_dataset(dir / "cut.jsonl");
    FAIL("truncated dataset accepted");
  } catch (const bench::DatasetError& e) {
    CHECK(e.record() == 1);
  }

  std::ofstream(dir / "hand.jsonl")
      << R"({"case_id":"case-007","probe_id":"case-007-FB-two_hop-1","probe_type":"two_hop","template_family":"FB",)"
      << R"("hop":2,"question":"The capital of the country of x is [BLANK].","answer":"tesk",)"
      << R"("target":{"head":"x","relation":"citizenship","tail":"vorland"},)"
      << R"("chain":[{"head":"x","relation":"citizenship","tail":"vorland"},{"head":"vorland","relation":"capital_of","tail":"tesk"}],)"
      << R"("pattern":"J","split":"forget_eval"})" << '\n';
  const auto hand = bench::load_dataset(dir / "hand.jsonl");
  REQUIRE(hand.size() == 1);
  bench::Probe want;
  want.case_id = "case-007";
  want.probe_id = "case-007-FB-two_hop-1";
  want.type = bench::ProbeType::TwoHop;
  want.family = bench::TemplateFamily::FB;
  want.hop = 2;
  want.question = "The capital of the country of x is [BLANK].";
  want.answer = "tesk";
  want.target = {"x", "citizenship", "vorland"};
  want.chain = {{"x", "citizenship", "vorland"}, {"vorland", "capital_of", "tesk"}};
  want.pattern = "J";
  want.split = bench::Split::ForgetEval;
  CHECK(hand[0] == want);
}
