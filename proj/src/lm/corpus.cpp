#include "kgf/lm/corpus.hpp"

#include "kgf/kg/schema.hpp"

namespace kgf::lm {
namespace {

std::string strip_placeholders(std::string s) {
  for (const char* p : {"{h}", "{t}", "{x}"}) {
    for (auto pos = s.find(p); pos != std::string::npos; pos = s.find(p)) s.replace(pos, 3, " ");
  }
  return s;
}

}  // namespace

std::vector<TextPair> render_corpus(const kg::KnowledgeGraph& g, const kg::TemplateBank& bank,
                                    const CorpusOptions& opts) {
  std::vector<TextPair> out;
  auto emit = [&](std::string q, std::string a) {
    if (!opts.held_out.contains(q)) out.push_back(TextPair{std::move(q), std::move(a)});
  };
  for (const auto& t : g.triples()) {
    const auto& rel = g.relation(t.relation);
    const auto& tpl = bank.at(rel.label);
    const auto& h = g.entity(t.head).label;
    const auto& tail = g.entity(t.tail).label;
    for (const auto& q : tpl.qa) emit(kg::fill(q, h, tail), tail);
    for (const auto& q : tpl.fb) emit(kg::fill(q, h, tail), tail);
    if (opts.inverse_forms && g.heads(t.relation, t.tail).size() == 1) {
      emit(kg::fill(tpl.inverse_qa, h, tail), h);
      emit(kg::fill(tpl.inverse_fb, h, tail), h);
    }
  }
  if (opts.chain_composites) {
    for (const auto& pattern : kg::chain_catalog()) {
      for (const auto& chain : kg::enumerate_chains(g, pattern)) {
        auto answers = kg::chain_answers(g, pattern, chain.head());
        if (answers.size() != 1) continue;
        const auto& head = g.entity(chain.head()).label;
        const std::string steps = kg::chain_reasoning(g, chain);
        emit(kg::chain_question(bank, pattern, head), steps);
        emit(kg::chain_cloze(bank, pattern, head), steps);
      }
    }
  }
  return out;
}

Tokenizer build_tokenizer(const kg::KnowledgeGraph& g, const kg::TemplateBank& bank,
                          const std::vector<std::string>& extra_texts) {
  Tokenizer tok;
  for (const auto& e : bank.entries()) {
    for (const auto& s : e.qa) tok.add_text(strip_placeholders(s));
    for (const auto& s : e.fb) tok.add_text(strip_placeholders(s));
    tok.add_text(strip_placeholders(e.inverse_qa));
    tok.add_text(strip_placeholders(e.inverse_fb));
    tok.add_text(strip_placeholders(e.phrase));
    tok.add_text(strip_placeholders(e.inverse_phrase));
  }
  tok.add_text("What is The A An");
  tok.add_text(std::string(kg::kChainJoiner));
  tok.add_text(std::string(kg::kDefaultRefusal));
  tok.add_text(std::string(kg::kIcuInstruction));
  for (const auto& e : g.entities()) tok.add_text(e.label);
  for (const auto& t : extra_texts) tok.add_text(t);
  return tok;
}

std::vector<int> encode_prompt(const Tokenizer& tok, const std::string& question) {
  std::vector<int> ids{Tokenizer::kBos};
  auto q = tok.encode(question);
  ids.insert(ids.end(), q.begin(), q.end());
  ids.push_back(Tokenizer::kSep);
  return ids;
}

Example encode_pair(const Tokenizer& tok, const std::string& question, const std::string& answer) {
  Example ex;
  ex.tokens = encode_prompt(tok, question);
  ex.answer_start = ex.tokens.size();
  auto a = tok.encode(answer);
  if (a.empty()) throw TokenizerError("empty answer");
  ex.tokens.insert(ex.tokens.end(), a.begin(), a.end());
  ex.tokens.push_back(Tokenizer::kEos);
  return ex;
}

}  // namespace kgf::lm
