#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgf/kg/graph.hpp"
#include "kgf/kg/templates.hpp"

namespace kgf::unlearn {

class NeighborError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NeighborItem {
  kg::Triple triple;
  std::string question;  // direct QA rendering
  std::string answer;
  double score = 0.0;
  double weight = 0.0;
  bool corrupted = false;  // a distant replacement from corrupt_neighbors
};

struct NeighborSet {
  std::vector<NeighborItem> items;
  std::size_t k = 0;

  /// Throws NeighborError unless weights are positive and sum to one, no item
  /// is the target and no answer equals the target's answer.
  void validate(const kg::Triple& target, const std::string& target_answer) const;
};

struct MiningOptions {
  unsigned hop_radius = 2;
  bool uniform_weights = false;
  /// Triples never used as anchors (other unlearning targets, retain facts).
  std::vector<kg::Triple> exclude;
};

/// s = 2*[touches target head] + [touches target tail] + 1/(1 + d(h, h')).
double neighbor_score(const kg::KnowledgeGraph& g, const kg::Triple& target, const kg::Triple& candidate);

/// Top-k functional facts touching the target's head or tail inside its
/// hop_radius neighborhood. Ties: higher head degree, then head, relation
/// and tail label order. Weights are normalized scores.
NeighborSet mine_neighbors(const kg::KnowledgeGraph& g, const kg::Triple& target,
                           const kg::TemplateBank& bank, std::size_t k, const MiningOptions& opts = {});

/// round-half-up(rate * n)
std::size_t corruption_count(double rate, std::size_t n);

inline constexpr unsigned kCorruptionMinDistance = 5;

/// Replaces exactly corruption_count(rate, |set|) seeded-random items with
/// facts whose subject lies farther than 5 hops from the target head.
/// Distant facts are reused when there are fewer of them than slots.
/// Replacements weigh 1/|set| each, survivors keep their weight, then all
/// weights are renormalized.
NeighborSet corrupt_neighbors(const kg::KnowledgeGraph& g, const kg::Triple& target, const NeighborSet& set,
                              double rate, std::uint64_t seed, const kg::TemplateBank& bank,
                              const std::vector<kg::Triple>& exclude = {});

}  // namespace kgf::unlearn
