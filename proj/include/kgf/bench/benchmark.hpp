#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgf/kg/graph.hpp"
#include "kgf/kg/schema.hpp"
#include "kgf/kg/templates.hpp"

namespace kgf::bench {

enum class ProbeType { Direct, Paraphrase, Inverse, TwoHop, ThreeHop, Retain };
enum class TemplateFamily { QA, FB };
enum class Split { ForgetTrain, ForgetEval, RetainEval };

std::string to_string(ProbeType t);
std::string to_string(TemplateFamily f);
std::string to_string(Split s);
ProbeType parse_probe_type(const std::string& s);
TemplateFamily parse_template_family(const std::string& s);
Split parse_split(const std::string& s);

/// Hop count implied by a probe type.
int hop_of(ProbeType t);

/// A triple by surface labels; survives serialization without the graph.
struct LabeledTriple {
  std::string head;
  std::string relation;
  std::string tail;
  bool operator==(const LabeledTriple&) const = default;
};

LabeledTriple label_triple(const kg::KnowledgeGraph& g, const kg::Triple& t);
kg::Triple resolve_triple(const kg::KnowledgeGraph& g, const LabeledTriple& t);

struct Probe {
  std::string case_id;
  std::string probe_id;
  ProbeType type = ProbeType::Direct;
  TemplateFamily family = TemplateFamily::QA;
  int hop = 1;
  std::string question;
  std::string answer;
  LabeledTriple target;
  std::vector<LabeledTriple> chain;  // the fact(s) the probe asks about
  std::string pattern;               // chain pattern id for multi-hop probes
  Split split = Split::ForgetEval;

  bool operator==(const Probe&) const = default;
};

struct FiltrationConfig {
  unsigned min_geodesic = 3;  // retain tails must be strictly farther than this
  unsigned bfs_depth = 3;
  unsigned neighborhood_k = 2;

  void validate() const;
};

enum class FiltrationStage { Schema = 1, NodeDisjoint = 2, LatentPath = 3 };

struct Rejection {
  kg::Triple candidate;
  FiltrationStage stage;
  std::string reason;
};

struct RetainSet {
  std::vector<kg::Triple> facts;
  std::vector<Rejection> rejected;
  std::array<std::size_t, 3> rejected_per_stage{};
};

struct BenchmarkCase {
  std::string case_id;
  kg::Triple target;
  std::vector<kg::EntityId> forget_neighborhood;
  std::vector<kg::ChainInstance> chains;  // every catalog chain through the target
  std::vector<kg::Triple> retain_facts;
  std::vector<Rejection> provenance;
  std::vector<Probe> probes;
  bool missing_three_hop = false;
};

class SelectionError : public std::runtime_error {
 public:
  SelectionError(const std::string& what, std::size_t achievable)
      : std::runtime_error(what), achievable_(achievable) {}
  std::size_t achievable() const { return achievable_; }

 private:
  std::size_t achievable_;
};

/// Every catalog chain instance of `g`, indexed by the triples it uses.
class ChainIndex {
 public:
  explicit ChainIndex(const kg::KnowledgeGraph& g);
  /// Instances containing triple `triple_index` at any position.
  std::vector<kg::ChainInstance> through(std::uint32_t triple_index) const;
  std::span<const kg::ChainInstance> all() const { return chains_; }

 private:
  std::vector<kg::ChainInstance> chains_;
  std::vector<std::vector<std::uint32_t>> by_triple_;
};

/// True when following the chain's pattern from its head reaches exactly one entity.
bool has_unique_answer(const kg::KnowledgeGraph& g, const kg::ChainInstance& chain);

/// Triple index of `t` in `g`; throws LookupError when absent.
std::uint32_t triple_index(const kg::KnowledgeGraph& g, const kg::Triple& t);

/// Three-stage filtration over the facts (h, r', t') sharing the target's subject.
RetainSet build_retain_set(const kg::KnowledgeGraph& g, const ChainIndex& chains,
                           const kg::Triple& target, const FiltrationConfig& cfg);

/// Deterministically samples n eligible targets: functional-relation triples
/// with an unambiguous inverse, at least two uniquely-answered two-hop chains
/// and one three-hop chain through them, and a non-empty retain set.
std::vector<kg::Triple> select_targets(const kg::KnowledgeGraph& g, const ChainIndex& chains,
                                       std::size_t n, std::uint64_t seed,
                                       const FiltrationConfig& cfg = {});

std::vector<Probe> generate_probes(const kg::KnowledgeGraph& g, const BenchmarkCase& c,
                                   const kg::TemplateBank& bank, std::uint64_t seed);

struct Verdict {
  bool ok = true;
  std::string reason;
};

/// Answer-leak and ambiguity check. Without a graph only the leak rule applies.
Verdict verify_probe(const Probe& probe, const kg::KnowledgeGraph* g = nullptr);

/// Case-folded alphanumeric word tokens.
std::vector<std::string> fold_tokens(const std::string& text);

struct KnownPartition {
  std::vector<Probe> kept;
  std::vector<Probe> dropped;
  std::vector<std::string> dropped_cases;  // cases whose direct probe was dropped
};

using Scorer = std::function<std::string(const Probe&)>;

inline constexpr double kKnownThreshold = 0.99;

/// Keeps probes whose ROUGE-L recall against the gold answer reaches the
/// threshold. Every probe of a case whose direct probe is dropped is dropped.
KnownPartition filter_known(const std::vector<Probe>& probes, const Scorer& scorer,
                            double threshold = kKnownThreshold);

struct BuildStats {
  std::size_t targets = 0;
  std::size_t direct_qa = 0;
  std::array<std::size_t, 3> rejected_per_stage{};
  std::vector<std::string> missing_three_hop;
};

struct Benchmark {
  std::vector<BenchmarkCase> cases;
  BuildStats stats;
};

Benchmark build_benchmark(const kg::KnowledgeGraph& g, std::size_t n_targets, std::uint64_t seed,
                          const FiltrationConfig& cfg = {},
                          const kg::TemplateBank& bank = kg::TemplateBank::builtin());

class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::size_t record, const std::string& what)
      : std::runtime_error("record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const { return record_; }

 private:
  std::size_t record_;
};

/// One probe per line, fields in a fixed order.
void emit_dataset(const std::vector<Probe>& probes, const std::filesystem::path& path);
std::vector<Probe> load_dataset(const std::filesystem::path& path);

std::vector<Probe> all_probes(const std::vector<BenchmarkCase>& cases);

}  // namespace kgf::bench
