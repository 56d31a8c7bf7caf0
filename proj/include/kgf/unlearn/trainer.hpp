#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgf/bench/benchmark.hpp"
#include "kgf/kg/graph.hpp"
#include "kgf/kg/templates.hpp"
#include "kgf/lm/corpus.hpp"
#include "kgf/lm/model.hpp"
#include "kgf/lm/tokenizer.hpp"
#include "kgf/unlearn/losses.hpp"
#include "kgf/unlearn/neighbors.hpp"

namespace kgf::unlearn {

enum class Method { NEDS, NPO, GA, GD, ULDPO, ICU };

std::string to_string(Method m);
/// Case-insensitive; throws std::invalid_argument.
Method parse_method(const std::string& s);

struct UnlearnConfig {
  Method method = Method::NEDS;
  double beta = 0.1;
  double lambda = 1.0;
  double mu = 1.0;
  double gamma = 0.0;
  std::size_t k = 10;
  double learning_rate = 1e-4;
  int epochs = 3;
  double corruption_rate = 0.0;
  std::uint64_t seed = 1;
  bool npo_retain = true;        // NPO carries the mu-weighted retain term
  bool uniform_weights = false;  // anchor weights 1/k instead of normalized scores
  std::string refusal = std::string(kg::kDefaultRefusal);
  std::size_t forget_batch = 1;
  std::size_t retain_batch = 8;
  double ga_clip = 1.0;
  lm::LoraConfig lora{};

  void validate() const;
};

struct ForgetItem {
  bench::Probe probe;
  std::string refusal;
};

/// Everything a run trains on. Only forget_train probes become forget items.
struct UnlearnData {
  std::vector<ForgetItem> items;
  std::vector<kg::Triple> targets;       // parallel to items
  std::vector<NeighborSet> neighbors;    // parallel to items
  std::vector<lm::TextPair> retain_pool; // facts away from every target
};

/// Builds forget items from the forget_train probes in `probes`, mines (and,
/// when configured, corrupts) neighbor sets that exclude every target and
/// every fact behind a retain_eval probe, and collects the retain training pool.
UnlearnData prepare_unlearning(const kg::KnowledgeGraph& g, const kg::TemplateBank& bank,
                               const std::vector<bench::BenchmarkCase>& cases,
                               const std::vector<bench::Probe>& probes, const UnlearnConfig& cfg);

struct EpochLosses {
  int epoch = 0;
  std::size_t steps = 0;
  LossTerms mean;  // per-step means; terms outside the objective are measured, not optimized
};

struct UnlearnRun {
  UnlearnConfig config;
  std::string reference_id;  // SHA-256 of the pre-unlearning checkpoint bytes
  std::vector<EpochLosses> epochs;
  std::string final_id;
  std::size_t steps = 0;
};

class DivergenceError : public lm::NumericError {
 public:
  using lm::NumericError::NumericError;
};

/// Attaches adapters to `model` (base frozen; the detached base is the
/// reference policy) and trains them. ICU performs no steps and leaves the
/// model untouched. On divergence the adapters are restored to the last
/// completed epoch and DivergenceError is thrown.
UnlearnRun run_unlearn(lm::Model<float>& model, const lm::Tokenizer& tok, const UnlearnData& data,
                       const UnlearnConfig& cfg);

/// "<instruction> [SEP] <question>"; throws std::invalid_argument on a wrapped question.
std::string icu_wrap(const std::string& question);
bool is_icu_wrapped(const std::string& question);

/// [BOS] question [SEP] answer, scored on the answer tokens (no [EOS]).
lm::Example scored_example(const lm::Tokenizer& tok, const std::string& question, const std::string& answer);

}  // namespace kgf::unlearn
