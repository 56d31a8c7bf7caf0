#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kgf/kg/graph.hpp"
#include "kgf/kg/schema.hpp"

namespace kgf::kg {

class TemplateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Surface forms for one relation. `{h}` is the head label, `{t}` the tail
/// label and `{x}` the embedded phrase in chain composition.
struct RelationTemplates {
  std::string relation;
  std::vector<std::string> qa;  // qa[0] is the direct form, the rest paraphrases
  std::vector<std::string> fb;  // cloze statements ending in [BLANK]
  std::string inverse_qa;
  std::string inverse_fb;
  std::string phrase;          // noun phrase naming the tail of {x}
  std::string inverse_phrase;  // noun phrase naming a head of {x}
};

inline constexpr std::string_view kBlank = "[BLANK]";
inline constexpr std::string_view kSep = "[SEP]";
inline constexpr std::string_view kChainJoiner = "then";

class TemplateBank {
 public:
  TemplateBank() = default;
  explicit TemplateBank(std::vector<RelationTemplates> entries);

  /// Throws TemplateError naming the relation when it has no entry.
  const RelationTemplates& at(std::string_view relation) const;
  bool contains(std::string_view relation) const;
  std::span<const RelationTemplates> entries() const { return entries_; }

  /// Built-in bank covering every default relation.
  static const TemplateBank& builtin();

 private:
  std::vector<RelationTemplates> entries_;
};

std::string fill(std::string_view pattern, std::string_view head, std::string_view tail);

/// Question for a multi-hop chain starting at `head_label`.
std::string chain_question(const TemplateBank& bank, const ChainPattern& pattern,
                           std::string_view head_label);
/// Cloze statement for a multi-hop chain starting at `head_label`.
std::string chain_cloze(const TemplateBank& bank, const ChainPattern& pattern,
                        std::string_view head_label);
/// Step-by-step answer: each intermediate label followed by the final one,
/// joined with kChainJoiner.
std::string chain_reasoning(const KnowledgeGraph& g, const ChainInstance& chain);

/// Default refusal and the in-context unlearning instruction.
inline constexpr std::string_view kDefaultRefusal = "I do not know";
inline constexpr std::string_view kIcuInstruction =
    "You do not know the answer to this question. Respond with a refusal.";

/// Every word used by templates, refusals and instructions. Entity labels
/// must avoid these.
std::vector<std::string> reserved_words();

}  // namespace kgf::kg
