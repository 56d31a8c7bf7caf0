#pragma once

#include <set>
#include <string>
#include <vector>

#include "kgf/kg/graph.hpp"
#include "kgf/kg/templates.hpp"
#include "kgf/lm/model.hpp"
#include "kgf/lm/tokenizer.hpp"

namespace kgf::lm {

/// A question (or cloze) paired with its supervised answer text.
struct TextPair {
  std::string question;
  std::string answer;
};

struct CorpusOptions {
  bool inverse_forms = true;  // only where the inverse has a single answer
  bool chain_composites = true;
  /// Questions never rendered into the corpus (held-out evaluation probes).
  std::set<std::string> held_out;
};

/// Every QA and cloze surface form of each triple, inverse forms, and
/// step-by-step multi-hop composites over uniquely-answered chains.
std::vector<TextPair> render_corpus(const kg::KnowledgeGraph& g, const kg::TemplateBank& bank,
                                    const CorpusOptions& opts = {});

/// Closed vocabulary: entity labels, template words, refusal and instruction text.
Tokenizer build_tokenizer(const kg::KnowledgeGraph& g, const kg::TemplateBank& bank,
                          const std::vector<std::string>& extra_texts = {});

/// [BOS] question [SEP]
std::vector<int> encode_prompt(const Tokenizer& tok, const std::string& question);
/// [BOS] question [SEP] answer [EOS], supervised on answer and [EOS].
Example encode_pair(const Tokenizer& tok, const std::string& question, const std::string& answer);

}  // namespace kgf::lm
