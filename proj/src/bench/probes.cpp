#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "kgf/bench/benchmark.hpp"
#include "kgf/eval/rouge.hpp"

namespace kgf::bench {
namespace {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Draft {
  ProbeType type;
  std::string question;
  std::string answer;
  std::vector<LabeledTriple> chain;
  std::string pattern;
};

bool contains_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

kg::EntityId chain_head(const kg::KnowledgeGraph& g, const Probe& p, const kg::ChainPattern& pat) {
  const auto& first = p.chain.front();
  return g.entity_by_label(pat.steps.front().inverse ? first.tail : first.head);
}

}  // namespace

int hop_of(ProbeType t) {
  switch (t) {
    case ProbeType::TwoHop:
      return 2;
    case ProbeType::ThreeHop:
      return 3;
    default:
      return 1;
  }
}

std::vector<std::string> fold_tokens(const std::string& text) { return eval::word_tokens(text); }

Verdict verify_probe(const Probe& probe, const kg::KnowledgeGraph* g) {
  const auto answer = fold_tokens(probe.answer);
  if (answer.empty()) return {false, "empty-answer"};
  if (contains_run(fold_tokens(probe.question), answer)) return {false, "answer-leak"};
  if (probe.hop != hop_of(probe.type)) return {false, "hop-mismatch"};
  if (!g || probe.chain.empty()) return {};

  std::vector<kg::EntityId> answers;
  if (probe.hop == 1) {
    const kg::Triple t = resolve_triple(*g, probe.chain.front());
    answers = probe.type == ProbeType::Inverse ? g->heads(t.relation, t.tail)
                                               : g->tails(t.head, t.relation);
  } else {
    const auto& pat = kg::find_pattern(probe.pattern);
    answers = kg::chain_answers(*g, pat, chain_head(*g, probe, pat));
  }
  if (answers.size() > 1) return {false, "ambiguous"};
  if (answers.empty() || g->entity(answers.front()).label != probe.answer) {
    return {false, "answer-not-graph-valid"};
  }
  return {};
}

std::vector<Probe> generate_probes(const kg::KnowledgeGraph& g, const BenchmarkCase& c,
                                   const kg::TemplateBank& bank, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto shuffled = [&](std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    return idx;
  };

  const auto& target = c.target;
  const std::string h = g.entity(target.head).label;
  const std::string t = g.entity(target.tail).label;
  const auto& templates = bank.at(g.relation(target.relation).label);
  const LabeledTriple target_labels = label_triple(g, target);

  std::vector<const kg::ChainInstance*> two, three;
  for (const auto& ch : c.chains) {
    if (!has_unique_answer(g, ch)) continue;
    (ch.pattern->hops() == 2 ? two : three).push_back(&ch);
  }
  if (c.retain_facts.empty()) throw GenerationError("case " + c.case_id + " has no retain facts");
  for (const auto& ch : c.chains) bank.at(ch.pattern->steps.front().relation);

  const auto two_order = shuffled(two.size());
  const auto three_order = shuffled(three.size());
  const auto retain_order = shuffled(c.retain_facts.size());
  const auto paraphrase_order = shuffled(std::min(templates.qa.size(), templates.fb.size()) - 1);

  std::vector<Probe> out;
  for (TemplateFamily family : {TemplateFamily::QA, TemplateFamily::FB}) {
    const bool qa = family == TemplateFamily::QA;
    const auto& forms = qa ? templates.qa : templates.fb;
    std::vector<Probe> built;
    std::map<ProbeType, int> serial;
    auto make = [&](const Draft& d) {
      Probe p;
      p.case_id = c.case_id;
      p.type = d.type;
      p.family = family;
      p.hop = hop_of(d.type);
      p.question = d.question;
      p.answer = d.answer;
      p.target = target_labels;
      p.chain = d.chain;
      p.pattern = d.pattern;
      p.split = d.type == ProbeType::Retain ? Split::RetainEval
                : (d.type == ProbeType::Direct && qa) ? Split::ForgetTrain
                                                      : Split::ForgetEval;
      p.probe_id = c.case_id + "-" + to_string(family) + "-" + to_string(d.type) + "-" +
                   std::to_string(serial[d.type]);
      return p;
    };
    // Takes up to `need` drafts that verify, in the given order.
    auto take = [&](std::vector<Draft> drafts, std::size_t need, const char* what) {
      std::size_t got = 0;
      std::set<std::string> questions;
      for (auto& d : drafts) {
        if (got == need) break;
        Probe p = make(d);
        if (!verify_probe(p, &g).ok || !questions.insert(p.question).second) continue;
        built.push_back(std::move(p));
        ++serial[d.type];
        ++got;
      }
      if (got < need) throw GenerationError("case " + c.case_id + " lacks " + what + " probes");
    };
    auto chain_draft = [&](const kg::ChainInstance& ch, ProbeType type) {
      Draft d{type, "", g.entity(ch.answer()).label, {}, ch.pattern->id};
      const std::string head = g.entity(ch.head()).label;
      d.question = qa ? kg::chain_question(bank, *ch.pattern, head)
                      : kg::chain_cloze(bank, *ch.pattern, head);
      for (auto ti : ch.triples) d.chain.push_back(label_triple(g, g.triple(ti)));
      return d;
    };

    take({Draft{ProbeType::Direct, kg::fill(forms[0], h, t), t, {target_labels}, ""}}, 1, "direct");
    std::vector<Draft> paraphrases;
    for (auto i : paraphrase_order) {
      paraphrases.push_back(
          Draft{ProbeType::Paraphrase, kg::fill(forms[i + 1], h, t), t, {target_labels}, ""});
    }
    take(paraphrases, 2, "paraphrase");
    take({Draft{ProbeType::Inverse,
                kg::fill(qa ? templates.inverse_qa : templates.inverse_fb, h, t), h,
                {target_labels}, ""}},
         1, "inverse");
    std::vector<Draft> twos, threes, retains;
    for (auto i : two_order) twos.push_back(chain_draft(*two[i], ProbeType::TwoHop));
    for (auto i : three_order) threes.push_back(chain_draft(*three[i], ProbeType::ThreeHop));
    take(twos, 2, "two-hop");
    take(threes, 1, "three-hop");
    for (auto i : retain_order) {
      const kg::Triple& f = c.retain_facts[i];
      const auto& rt = bank.at(g.relation(f.relation).label);
      const std::string rh = g.entity(f.head).label;
      const std::string rtail = g.entity(f.tail).label;
      retains.push_back(Draft{ProbeType::Retain, kg::fill(qa ? rt.qa[0] : rt.fb[0], rh, rtail),
                              rtail, {label_triple(g, f)}, ""});
    }
    take(retains, 1, "retain");
    out.insert(out.end(), built.begin(), built.end());
  }
  return out;
}

KnownPartition filter_known(const std::vector<Probe>& probes, const Scorer& scorer,
                            double threshold) {
  std::vector<char> keep(probes.size(), 0);
  std::set<std::string> dead_cases;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    std::string output;
    try {
      output = scorer(probes[i]);
    } catch (const std::exception& e) {
      throw std::runtime_error("scorer failed on probe " + probes[i].probe_id + ": " + e.what());
    }
    keep[i] = eval::rouge_l(output, probes[i].answer).recall >= threshold;
    if (!keep[i] && probes[i].type == ProbeType::Direct && probes[i].family == TemplateFamily::QA) {
      dead_cases.insert(probes[i].case_id);
    }
  }
  KnownPartition out;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (keep[i] && !dead_cases.contains(probes[i].case_id)) {
      out.kept.push_back(probes[i]);
    } else {
      out.dropped.push_back(probes[i]);
    }
  }
  out.dropped_cases.assign(dead_cases.begin(), dead_cases.end());
  return out;
}

}  // namespace kgf::bench
