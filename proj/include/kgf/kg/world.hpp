#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "kgf/kg/graph.hpp"
#include "kgf/kg/schema.hpp"

namespace kgf::kg {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WorldConfig {
  std::array<int, kEntityTypeCount> counts{};
  /// Minimum number of instances per sampler pattern id (A..V).
  std::map<std::string, int> pattern_quotas;
  /// Retain-property triples added to every chain-participating entity of a type.
  std::array<int, kEntityTypeCount> retain_quotas{};
  /// Number of commonsense (is_a / used_for) assertions among concepts.
  int concept_assertions = 0;
  std::uint64_t seed = 0;

  int& count(EntityType t) { return counts[static_cast<std::size_t>(t)]; }
  int count(EntityType t) const { return counts[static_cast<std::size_t>(t)]; }
  int& retain_quota(EntityType t) { return retain_quotas[static_cast<std::size_t>(t)]; }
  int retain_quota(EntityType t) const { return retain_quotas[static_cast<std::size_t>(t)]; }

  int total_entities() const;

  /// The 200-entity world the default pipeline memorizes.
  static WorldConfig desk_default(std::uint64_t seed = 7);
  /// desk_default with entity counts and pattern quotas multiplied by `factor` (rounded); pattern quotas grow by 0.9 * factor to leave placement slack.
  static WorldConfig scaled(double factor, std::uint64_t seed);
};

/// Throws ConfigError naming the first violated count or quota.
void validate(const WorldConfig& config);

/// Seeded syllable sampler producing globally unique 1-3 word labels.
/// Every word is used by at most one label, so no two labels share a token.
class LabelSampler {
 public:
  explicit LabelSampler(std::uint64_t seed);
  /// Words the sampler must never produce (template vocabulary).
  void reserve(const std::string& word) { used_words_.insert(word); }
  std::string next(int min_words = 2, int max_words = 3);

 private:
  std::string word();
  std::mt19937_64 rng_;
  std::unordered_set<std::string> used_words_;
};

/// Pure function of the config: identical configs give identical graphs.
KnowledgeGraph generate_world(const WorldConfig& config);

/// Number of distinct instances of a pattern present in `g`.
std::size_t count_pattern_instances(const KnowledgeGraph& g, const ChainPattern& pattern);

}  // namespace kgf::kg
