#include <cmath>
#include "kgf/kg/world.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "kgf/kg/templates.hpp"

namespace kgf::kg {
namespace {

using ET = EntityType;

constexpr std::array<std::string_view, 18> kOnsets = {
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "tr", "gl"};
constexpr std::array<std::string_view, 5> kVowels = {"a", "e", "i", "o", "u"};
constexpr std::array<std::string_view, 6> kCodas = {"", "", "n", "r", "s", "l"};

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

const RelationType& relation_info(std::string_view label) {
  for (const auto& r : default_relations()) {
    if (r.label == label) return r;
  }
  throw LookupError("unknown relation '" + std::string(label) + "'");
}

ET step_source(const PatternStep& s) {
  const auto& r = relation_info(s.relation);
  return s.inverse ? r.range : r.domain;
}

ET step_target(const PatternStep& s) {
  const auto& r = relation_info(s.relation);
  return s.inverse ? r.domain : r.range;
}

std::vector<const ChainPattern*> generation_order() {
  std::vector<const ChainPattern*> order;
  for (const auto& p : sampler_patterns()) {
    if (p.hops() == 3) order.push_back(&p);
  }
  for (const auto& p : sampler_patterns()) {
    if (p.hops() == 2) order.push_back(&p);
  }
  return order;
}

class Generator {
 public:
  explicit Generator(const WorldConfig& cfg) : cfg_(cfg), rng_(cfg.seed), labels_(cfg.seed ^ 0x9e3779b97f4a7c15ULL) {
    register_default_relations(builder_);
    for (const auto& w : reserved_words()) labels_.reserve(w);
    for (std::size_t t = 0; t < kEntityTypeCount; ++t) {
      for (int i = 0; i < cfg.counts[t]; ++i) {
        auto id = builder_.add_entity(labels_.next(2, 3), static_cast<ET>(t));
        by_type_[t].push_back(id);
      }
    }
    degree_.assign(builder_.entity_count(), 0);
  }

  KnowledgeGraph run() && {
    for (const ChainPattern* p : generation_order()) {
      auto it = cfg_.pattern_quotas.find(p->id);
      if (it == cfg_.pattern_quotas.end() || it->second <= 0) continue;
      fill_pattern(*p, it->second);
    }
    add_retain_triples();
    add_concept_assertions();
    return std::move(builder_).build();
  }

 private:
  const std::vector<EntityId>& pool(ET t) const { return by_type_[static_cast<std::size_t>(t)]; }

  RelationId rel(std::string_view label) const { return *builder_.find_relation(label); }

  bool add(EntityId h, RelationId r, EntityId t) {
    if (!builder_.add_triple(h, r, t)) return false;
    ++degree_[h.value];
    ++degree_[t.value];
    if (builder_.relation(r).label == "capital_of") capitals_.push_back(t);
    return true;
  }

  bool is_capital(EntityId city) const {
    return std::find(capitals_.begin(), capitals_.end(), city) != capitals_.end();
  }

  void fill_pattern(const ChainPattern& p, int quota) {
    auto count = [&] { return count_pattern_instances(builder_.snapshot(), p); };
    std::size_t current = count();
    while (current < static_cast<std::size_t>(quota)) {
      if (!add_instance(p)) {
        throw ConfigError("pattern " + p.id + " quota " + std::to_string(quota) +
                          " unsatisfiable: only " + std::to_string(current) +
                          " instances could be placed");
      }
      current = count();
    }
  }

  // The first edge is always new; later steps reuse an existing functional
  // tail or draw a fresh one.
  bool add_instance(const ChainPattern& p) {
    const PatternStep& first = p.steps.front();
    const RelationId r0 = rel(first.relation);
    std::vector<EntityId> path;
    if (first.inverse) {
      std::vector<EntityId> heads;
      for (EntityId e : pool(step_target(first))) {
        if (!builder_.functional_tail(e, r0)) heads.push_back(e);
      }
      if (heads.empty() || pool(p.start).empty()) return false;
      EntityId start = pool(p.start)[pick(rng_, pool(p.start).size())];
      EntityId head = heads[pick(rng_, heads.size())];
      add(head, r0, start);
      path = {start, head};
    } else {
      std::vector<EntityId> starts;
      for (EntityId e : pool(p.start)) {
        if (!builder_.functional_tail(e, r0)) starts.push_back(e);
      }
      if (starts.empty()) return false;
      EntityId start = starts[pick(rng_, starts.size())];
      auto tail = draw_tail(first, path = {start});
      if (!tail) return false;
      add(start, r0, *tail);
      path.push_back(*tail);
    }
    for (std::size_t i = 1; i < p.steps.size(); ++i) {
      const PatternStep& step = p.steps[i];
      const RelationId r = rel(step.relation);
      EntityId at = path.back();
      if (step.inverse) {
        std::vector<EntityId> heads;
        for (EntityId e : pool(step_target(step))) {
          if (!builder_.functional_tail(e, r) &&
              std::find(path.begin(), path.end(), e) == path.end()) {
            heads.push_back(e);
          }
        }
        if (heads.empty()) return false;
        EntityId head = heads[pick(rng_, heads.size())];
        add(head, r, at);
        path.push_back(head);
        continue;
      }
      if (auto existing = builder_.functional_tail(at, r)) {
        if (std::find(path.begin(), path.end(), *existing) != path.end()) return false;
        path.push_back(*existing);
        continue;
      }
      auto tail = draw_tail(step, path);
      if (!tail) return false;
      add(at, r, *tail);
      path.push_back(*tail);
    }
    return true;
  }

  std::optional<EntityId> draw_tail(const PatternStep& step, const std::vector<EntityId>& path) {
    const bool injective = step.relation == "capital_of";
    const RelationId r = rel(step.relation);
    // Tails not yet used by this relation come first, which keeps inverse
    // questions answerable.
    std::vector<EntityId> fresh, used;
    for (EntityId e : pool(step_target(step))) {
      if (std::find(path.begin(), path.end(), e) != path.end()) continue;
      if (injective && is_capital(e)) continue;
      (builder_.has_tail_for(r, e) ? used : fresh).push_back(e);
    }
    const auto& options = fresh.empty() ? used : fresh;
    if (options.empty()) return std::nullopt;
    return options[pick(rng_, options.size())];
  }

  std::vector<EntityId> chain_participants() const {
    std::vector<char> mark(builder_.entity_count(), 0);
    KnowledgeGraph g = builder_.snapshot();
    std::vector<std::string> chain_relations;
    for (const auto& p : sampler_patterns()) {
      for (const auto& s : p.steps) chain_relations.push_back(s.relation);
    }
    for (const Triple& t : g.triples()) {
      const auto& label = g.relation(t.relation).label;
      if (std::find(chain_relations.begin(), chain_relations.end(), label) !=
          chain_relations.end()) {
        mark[t.head.value] = 1;
        mark[t.tail.value] = 1;
      }
    }
    std::vector<EntityId> out;
    for (std::uint32_t i = 0; i < mark.size(); ++i) {
      if (mark[i]) out.push_back(EntityId{i});
    }
    return out;
  }

  // Retain tails prefer the least-connected candidates so that retain facts
  // tend to hang off private nodes.
  EntityId sparse_tail(ET type, EntityId head) {
    const auto& candidates = pool(type);
    int best = std::numeric_limits<int>::max();
    std::vector<EntityId> ties;
    for (EntityId e : candidates) {
      if (e == head) continue;
      if (degree_[e.value] < best) {
        best = degree_[e.value];
        ties.clear();
      }
      if (degree_[e.value] == best) ties.push_back(e);
    }
    return ties[pick(rng_, ties.size())];
  }

  void add_retain_triples() {
    for (EntityId e : chain_participants()) {
      const ET type = builder_.entity(e).type;
      const int quota = cfg_.retain_quota(type);
      if (quota <= 0) continue;
      std::vector<std::string> relations(retain_pool(type).begin(), retain_pool(type).end());
      for (std::size_t i = relations.size(); i > 1; --i) {
        std::swap(relations[i - 1], relations[pick(rng_, i)]);
      }
      int added = 0;
      for (const auto& label : relations) {
        if (added == quota) break;
        const RelationId r = rel(label);
        if (builder_.functional_tail(e, r)) continue;
        if (pool(builder_.relation(r).range).empty()) continue;
        if (add(e, r, sparse_tail(builder_.relation(r).range, e))) ++added;
      }
    }
  }

  void add_concept_assertions() {
    const auto& concepts = pool(ET::Concept);
    if (cfg_.concept_assertions <= 0 || concepts.size() < 2) return;
    const std::array<RelationId, 2> rels = {rel("is_a"), rel("used_for")};
    int added = 0;
    int attempts = 0;
    while (added < cfg_.concept_assertions && attempts < 100 * cfg_.concept_assertions) {
      ++attempts;
      EntityId a = concepts[pick(rng_, concepts.size())];
      EntityId b = concepts[pick(rng_, concepts.size())];
      if (a == b) continue;
      if (add(a, rels[pick(rng_, rels.size())], b)) ++added;
    }
  }

  const WorldConfig& cfg_;
  std::mt19937_64 rng_;
  LabelSampler labels_;
  GraphBuilder builder_;
  std::array<std::vector<EntityId>, kEntityTypeCount> by_type_;
  std::vector<int> degree_;
  std::vector<EntityId> capitals_;
};

}  // namespace

int WorldConfig::total_entities() const { return std::accumulate(counts.begin(), counts.end(), 0); }

WorldConfig WorldConfig::desk_default(std::uint64_t seed) {
  WorldConfig c;
  c.seed = seed;
  c.count(ET::Person) = 50;
  c.count(ET::Film) = 36;
  c.count(ET::Organization) = 6;
  c.count(ET::Country) = 10;
  c.count(ET::City) = 16;
  c.count(ET::University) = 10;
  c.count(ET::Work) = 8;
  c.count(ET::Language) = 10;
  c.count(ET::Concept) = 54;
  c.pattern_quotas = {{"A", 5}, {"B", 24}, {"F", 2}, {"H", 6},  {"I", 8}, {"J", 30},
                      {"K", 8}, {"U", 20}, {"C", 3}, {"D", 14}, {"E", 4}, {"G", 3},
                      {"L", 14}, {"S", 6}, {"T", 4}, {"V", 6}};
  c.retain_quota(ET::Person) = 1;
  c.retain_quota(ET::Film) = 2;
  c.retain_quota(ET::Organization) = 1;
  c.retain_quota(ET::Country) = 2;
  c.retain_quota(ET::Work) = 1;
  c.concept_assertions = 6;
  return c;
}

WorldConfig WorldConfig::scaled(double factor, std::uint64_t seed) {
  if (!(factor > 0)) throw ConfigError("scale factor must be positive");
  WorldConfig c = desk_default(seed);
  auto scale = [&](int v) { return static_cast<int>(std::lround(v * factor)); };
  for (auto& n : c.counts) n = scale(n);
  for (auto& [id, q] : c.pattern_quotas) q = static_cast<int>(q * factor * 0.9);
  c.concept_assertions = scale(c.concept_assertions);
  return c;
}

void validate(const WorldConfig& config) {
  for (std::size_t t = 0; t < kEntityTypeCount; ++t) {
    if (config.counts[t] < 0) {
      throw ConfigError("count for " + std::string(to_string(static_cast<ET>(t))) +
                        " is negative");
    }
    if (config.retain_quotas[t] < 0) {
      throw ConfigError("retain quota for " + std::string(to_string(static_cast<ET>(t))) +
                        " is negative");
    }
  }
  if (config.concept_assertions < 0) throw ConfigError("concept_assertions is negative");
  for (const auto& [id, quota] : config.pattern_quotas) {
    const ChainPattern* pattern = nullptr;
    for (const auto& p : sampler_patterns()) {
      if (p.id == id) pattern = &p;
    }
    if (!pattern) throw ConfigError("quota names unknown pattern '" + id + "'");
    if (quota < 0) throw ConfigError("pattern " + id + " quota is negative");
    if (quota == 0) continue;
    std::vector<ET> types{pattern->start};
    for (const auto& s : pattern->steps) types.push_back(step_target(s));
    for (ET t : types) {
      if (config.count(t) < 1) {
        throw ConfigError("pattern " + id + " quota " + std::to_string(quota) + " needs at least one " +
                          std::string(to_string(t)));
      }
    }
    // Each new instance consumes a fresh first edge.
    const PatternStep& first = pattern->steps.front();
    const ET fresh = first.inverse ? step_target(first) : step_source(first);
    if (quota > config.count(fresh)) {
      throw ConfigError("pattern " + id + " quota " + std::to_string(quota) + " exceeds " +
                        std::to_string(config.count(fresh)) + " " + std::string(to_string(fresh)) +
                        " entities");
    }
  }
  for (std::size_t t = 0; t < kEntityTypeCount; ++t) {
    const auto quota = static_cast<std::size_t>(config.retain_quotas[t]);
    const auto pool_size = retain_pool(static_cast<ET>(t)).size();
    if (quota > pool_size) {
      throw ConfigError("retain quota for " + std::string(to_string(static_cast<ET>(t))) + " (" +
                        std::to_string(quota) + ") exceeds its pool of " +
                        std::to_string(pool_size) + " relations");
    }
  }
}

LabelSampler::LabelSampler(std::uint64_t seed) : rng_(seed) {}

std::string LabelSampler::word() {
  for (;;) {
    const std::size_t syllables = 1 + pick(rng_, 3);
    std::string w;
    for (std::size_t i = 0; i < syllables; ++i) {
      w += kOnsets[pick(rng_, kOnsets.size())];
      w += kVowels[pick(rng_, kVowels.size())];
      if (i + 1 == syllables) w += kCodas[pick(rng_, kCodas.size())];
    }
    if (w.size() < 3) continue;
    if (used_words_.insert(w).second) return w;
  }
}

std::string LabelSampler::next(int min_words, int max_words) {
  if (min_words < 1 || max_words < min_words) throw ConfigError("invalid label word range");
  const int n = min_words + static_cast<int>(pick(rng_, static_cast<std::size_t>(max_words - min_words + 1)));
  std::string label;
  for (int i = 0; i < n; ++i) {
    if (i) label += ' ';
    label += word();
  }
  return label;
}

KnowledgeGraph generate_world(const WorldConfig& config) {
  validate(config);
  return Generator(config).run();
}

std::size_t count_pattern_instances(const KnowledgeGraph& g, const ChainPattern& pattern) {
  return enumerate_chains(g, pattern).size();
}

}  // namespace kgf::kg
