#include "kgf/unlearn/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "kgf/lm/checkpoint.hpp"
#include "kgf/lm/optim.hpp"
#include "kgf/util/hash.hpp"

namespace kgf::unlearn {
namespace {

constexpr std::size_t kScoreBatch = 128;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<double> score_all(lm::Model<float>& model, const std::vector<lm::Example>& examples) {
  std::vector<double> out;
  out.reserve(examples.size());
  for (std::size_t s = 0; s < examples.size(); s += kScoreBatch) {
    std::vector<lm::Example> batch(examples.begin() + static_cast<std::ptrdiff_t>(s),
                                   examples.begin() + static_cast<std::ptrdiff_t>(std::min(examples.size(), s + kScoreBatch)));
    for (float lp : model.forward(batch).seq_logprob) out.push_back(lp);
  }
  return out;
}

bool touches_any(const kg::Triple& t, const std::set<kg::EntityId>& entities) {
  return entities.contains(t.head) || entities.contains(t.tail);
}

/// One gradient batch: examples with their loss coefficients filled after the forward pass.
struct StepBatch {
  std::vector<lm::Example> examples;
  std::size_t add(const lm::Example& e) {
    examples.push_back(e);
    return examples.size() - 1;
  }
};

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::NEDS: return "NEDS";
    case Method::NPO: return "NPO";
    case Method::GA: return "GA";
    case Method::GD: return "GD";
    case Method::ULDPO: return "UL-DPO";
    case Method::ICU: return "ICU";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  std::string u;
  for (char c : s) {
    if (c != '-' && c != '_') u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  static const std::map<std::string, Method> names{{"NEDS", Method::NEDS}, {"NPO", Method::NPO},
                                                   {"GA", Method::GA},     {"GD", Method::GD},
                                                   {"ULDPO", Method::ULDPO}, {"ICU", Method::ICU}};
  auto it = names.find(u);
  if (it == names.end()) throw std::invalid_argument("unknown method '" + s + "'");
  return it->second;
}

void UnlearnConfig::validate() const {
  if (!(beta > 0)) throw std::invalid_argument("beta must be positive");
  if (lambda < 0 || mu < 0 || gamma < 0) throw std::invalid_argument("lambda, mu and gamma must be nonnegative");
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be nonnegative");
  if (!(corruption_rate >= 0 && corruption_rate <= 1)) throw std::invalid_argument("corruption rate must lie in [0, 1]");
  if (forget_batch < 1) throw std::invalid_argument("forget batch must be at least 1");
  if (lora.rank < 1) throw std::invalid_argument("adapter rank must be at least 1");
}

std::string icu_wrap(const std::string& question) {
  if (is_icu_wrapped(question)) throw std::invalid_argument("question is already wrapped");
  return std::string(kg::kIcuInstruction) + " " + std::string(kg::kSep) + " " + question;
}

bool is_icu_wrapped(const std::string& question) {
  return question.starts_with(std::string(kg::kIcuInstruction));
}

lm::Example scored_example(const lm::Tokenizer& tok, const std::string& question, const std::string& answer) {
  lm::Example ex;
  ex.tokens = lm::encode_prompt(tok, question);
  ex.answer_start = ex.tokens.size();
  const auto a = tok.encode(answer);
  if (a.empty()) throw lm::TokenizerError("empty answer");
  ex.tokens.insert(ex.tokens.end(), a.begin(), a.end());
  return ex;
}

UnlearnData prepare_unlearning(const kg::KnowledgeGraph& g, const kg::TemplateBank& bank,
                               const std::vector<bench::BenchmarkCase>& cases,
                               const std::vector<bench::Probe>& probes, const UnlearnConfig& cfg) {
  cfg.validate();
  std::map<std::string, const bench::BenchmarkCase*> by_id;
  std::vector<kg::Triple> protected_facts;
  std::set<kg::EntityId> target_entities;
  for (const auto& c : cases) {
    by_id[c.case_id] = &c;
    protected_facts.push_back(c.target);
    target_entities.insert(c.target.head);
    target_entities.insert(c.target.tail);
  }
  for (const auto& p : probes) {
    if (p.split == bench::Split::RetainEval) protected_facts.push_back(bench::resolve_triple(g, p.target));
  }
  UnlearnData data;
  for (const auto& p : probes) {
    if (p.split != bench::Split::ForgetTrain) continue;
    auto it = by_id.find(p.case_id);
    if (it == by_id.end()) throw std::invalid_argument("probe " + p.probe_id + " names an unknown case");
    data.items.push_back(ForgetItem{p, cfg.refusal});
    data.targets.push_back(it->second->target);
  }
  MiningOptions mining;
  mining.uniform_weights = cfg.uniform_weights;
  mining.exclude = protected_facts;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    NeighborSet set = mine_neighbors(g, data.targets[i], bank, cfg.k, mining);
    if (cfg.corruption_rate > 0) {
      set = corrupt_neighbors(g, data.targets[i], set, cfg.corruption_rate, mix(cfg.seed, i), bank, protected_facts);
    }
    set.validate(data.targets[i], data.items[i].probe.answer);
    data.neighbors.push_back(std::move(set));
  }
  const std::set<kg::Triple> excluded(protected_facts.begin(), protected_facts.end());
  for (const auto& t : g.triples()) {
    if (!g.relation(t.relation).functional || excluded.contains(t) || touches_any(t, target_entities)) continue;
    const auto& h = g.entity(t.head).label;
    const auto& tail = g.entity(t.tail).label;
    data.retain_pool.push_back(lm::TextPair{kg::fill(bank.at(g.relation(t.relation).label).qa[0], h, tail), tail});
  }
  return data;
}

UnlearnRun run_unlearn(lm::Model<float>& model, const lm::Tokenizer& tok, const UnlearnData& data,
                       const UnlearnConfig& cfg) {
  cfg.validate();
  if (data.neighbors.size() != data.items.size()) throw std::invalid_argument("one neighbor set per forget item");
  for (const auto& item : data.items) {
    if (item.probe.split != bench::Split::ForgetTrain) {
      throw std::logic_error("evaluation probe " + item.probe.probe_id + " reached the unlearning objective");
    }
  }
  UnlearnRun run;
  run.config = cfg;
  run.reference_id = util::sha256_hex(lm::serialize_checkpoint(model));
  if (cfg.method == Method::ICU || data.items.empty() || cfg.epochs == 0) {
    run.final_id = run.reference_id;
    return run;
  }
  if (model.has_adapters()) throw std::invalid_argument("model already carries adapters");

  const Method m = cfg.method;
  const bool uses_refusal = m == Method::GD || m == Method::ULDPO;
  std::vector<lm::Example> gold, refusal;
  std::vector<std::vector<lm::Example>> anchors(data.items.size());
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    gold.push_back(scored_example(tok, data.items[i].probe.question, data.items[i].probe.answer));
    if (uses_refusal) refusal.push_back(scored_example(tok, data.items[i].probe.question, data.items[i].refusal));
    for (const auto& n : data.neighbors[i].items) anchors[i].push_back(scored_example(tok, n.question, n.answer));
  }
  std::vector<lm::Example> retain_gold, retain_refusal;
  for (const auto& r : data.retain_pool) {
    retain_gold.push_back(scored_example(tok, r.question, r.answer));
    if (m == Method::ULDPO) retain_refusal.push_back(scored_example(tok, r.question, cfg.refusal));
  }
  // Reference log-probabilities come from the frozen base before adapters exist.
  std::vector<double> ref_gold, ref_refusal, ref_retain_gold, ref_retain_refusal;
  if (m == Method::NEDS || m == Method::NPO || m == Method::ULDPO) ref_gold = score_all(model, gold);
  if (m == Method::ULDPO) {
    ref_refusal = score_all(model, refusal);
    ref_retain_gold = score_all(model, retain_gold);
    ref_retain_refusal = score_all(model, retain_refusal);
  }

  model.attach_adapters(cfg.lora, cfg.seed);
  lm::AdamW<float> opt(model.adapter_params().size(), lm::AdamWConfig{cfg.learning_rate, 0.9, 0.999, 1e-8, 0.0});
  auto grads = model.make_gradients();
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.items.size());
  std::vector<std::size_t> pool(retain_gold.size());
  const std::size_t r_count = std::min(cfg.retain_batch, pool.size());

  const bool anchor_in_loss = m == Method::NEDS && cfg.lambda > 0;
  bool retain_in_loss = false;
  double retain_weight = 0.0;
  switch (m) {
    case Method::NEDS: retain_weight = cfg.mu; break;
    case Method::NPO: retain_weight = cfg.npo_retain ? cfg.mu : 0.0; break;
    case Method::GA: retain_weight = cfg.gamma; break;
    case Method::GD: retain_weight = cfg.mu; break;
    default: break;
  }
  retain_in_loss = m != Method::ULDPO && retain_weight > 0 && r_count > 0;

  lm::Buffer<float> snapshot = model.adapter_params().data;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    EpochLosses el;
    el.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.forget_batch) {
      const std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.forget_batch)));
      const double B = static_cast<double>(chunk.size());
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
      for (std::size_t i = 0; i < r_count; ++i) {
        std::swap(pool[i], pool[i + rng() % (pool.size() - i)]);
      }
      const std::vector<std::size_t> retain_pick(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(r_count));

      StepBatch sb;
      std::vector<double> coeff;
      std::vector<std::size_t> fi, ri, ai_begin, ti, tri;
      for (auto i : chunk) fi.push_back(sb.add(m == Method::GD ? refusal[i] : gold[i]));
      if (m == Method::ULDPO) {
        for (auto i : chunk) ri.push_back(sb.add(refusal[i]));
        for (std::size_t j = 0; j < chunk.size() && r_count > 0; ++j) {
          const auto p = retain_pick[j % r_count];
          ti.push_back(sb.add(retain_gold[p]));
          tri.push_back(sb.add(retain_refusal[p]));
        }
      }
      if (anchor_in_loss) {
        for (auto i : chunk) {
          ai_begin.push_back(sb.examples.size());
          for (const auto& e : anchors[i]) sb.add(e);
        }
      }
      std::vector<std::size_t> rbatch;
      if (retain_in_loss) {
        for (auto p : retain_pick) rbatch.push_back(sb.add(retain_gold[p]));
      }

      const std::uint64_t step_seed = mix(cfg.seed, run.steps + 1);
      const auto out = model.forward(sb.examples, lm::ForwardOptions{true, true, false, step_seed});
      const auto& lp = out.seq_logprob;
      coeff.assign(sb.examples.size(), 0.0);
      LossTerms terms;
      switch (m) {
        case Method::NEDS:
        case Method::NPO:
          for (std::size_t j = 0; j < chunk.size(); ++j) {
            const double h = lp[fi[j]] - ref_gold[chunk[j]];
            terms.forget += loss_npo(h, cfg.beta) / B;
            coeff[fi[j]] = loss_npo_grad(h, cfg.beta) / B;
          }
          break;
        case Method::GA:
          for (std::size_t j = 0; j < chunk.size(); ++j) {
            terms.forget += -lp[fi[j]] / B;
            coeff[fi[j]] = 1.0 / B;  // d(-CE)/dlogp
          }
          break;
        case Method::GD:
          for (std::size_t j = 0; j < chunk.size(); ++j) {
            terms.forget += -lp[fi[j]] / B;
            coeff[fi[j]] = -1.0 / B;
          }
          break;
        case Method::ULDPO:
          for (std::size_t j = 0; j < chunk.size(); ++j) {
            const auto i = chunk[j];
            const double pref = lp[ri[j]] - ref_refusal[i];
            const double disp = lp[fi[j]] - ref_gold[i];
            terms.forget += loss_uldpo(pref, disp, cfg.beta) / B;
            const double gpref = loss_uldpo_grad(pref, disp, cfg.beta) / B;
            coeff[ri[j]] = gpref;
            coeff[fi[j]] = -gpref;
          }
          for (std::size_t j = 0; j < ti.size(); ++j) {
            const auto p = retain_pick[j % r_count];
            const double pref = lp[ti[j]] - ref_retain_gold[p];
            const double disp = lp[tri[j]] - ref_retain_refusal[p];
            terms.retain += loss_uldpo(pref, disp, cfg.beta) / B;
            const double gpref = loss_uldpo_grad(pref, disp, cfg.beta) / B;
            coeff[ti[j]] = gpref;
            coeff[tri[j]] = -gpref;
          }
          break;
        case Method::ICU:
          break;
      }
      if (anchor_in_loss) {
        for (std::size_t j = 0; j < chunk.size(); ++j) {
          const auto& items = data.neighbors[chunk[j]].items;
          for (std::size_t n = 0; n < items.size(); ++n) {
            terms.anchor += items[n].weight * -lp[ai_begin[j] + n] / B;
            coeff[ai_begin[j] + n] = -cfg.lambda * items[n].weight / B;
          }
        }
      }
      if (retain_in_loss) {
        for (auto r : rbatch) {
          terms.retain += -lp[r] / static_cast<double>(r_count);
          coeff[r] = -retain_weight / static_cast<double>(r_count);
        }
      }
      double total = terms.forget;
      if (m == Method::GA) total = -terms.forget;
      if (anchor_in_loss) total += cfg.lambda * terms.anchor;
      if (retain_in_loss) total += retain_weight * terms.retain;
      if (m == Method::ULDPO) total += terms.retain;
      terms.total = total;

      try {
        if (!std::isfinite(total)) throw lm::NumericError("non-finite loss");
        grads.zero();
        std::vector<float> c(coeff.begin(), coeff.end());
        model.backward(c, grads);
        if (!grads.finite()) throw lm::NumericError("non-finite gradient");
        if (m == Method::GA) lm::clip_grad_norm(grads.adapter, cfg.ga_clip);
        opt.step(model.adapter_params().data, grads.adapter);
      } catch (const lm::NumericError& e) {
        model.adapter_params().data = snapshot;
        throw DivergenceError(to_string(m) + " diverged at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(run.steps + 1) + ": " + e.what() +
                              "; adapters restored to the last completed epoch");
      }
      ++run.steps;

      // Terms outside the objective are measured on the same step's data.
      if (!anchor_in_loss || (!retain_in_loss && m != Method::ULDPO)) {
        std::vector<lm::Example> diag;
        std::vector<std::pair<std::size_t, double>> anchor_w;
        if (!anchor_in_loss) {
          for (auto i : chunk) {
            for (std::size_t n = 0; n < anchors[i].size(); ++n) {
              diag.push_back(anchors[i][n]);
              anchor_w.emplace_back(diag.size() - 1, data.neighbors[i].items[n].weight);
            }
          }
        }
        const std::size_t retain_from = diag.size();
        if (!retain_in_loss && m != Method::ULDPO) {
          for (auto p : retain_pick) diag.push_back(retain_gold[p]);
        }
        if (!diag.empty()) {
          const auto d = model.forward(diag).seq_logprob;
          for (auto [idx, w] : anchor_w) terms.anchor += w * -d[idx] / B;
          for (std::size_t r = retain_from; r < diag.size(); ++r) {
            terms.retain += -d[r] / static_cast<double>(diag.size() - retain_from);
          }
        }
      }
      el.mean.forget += terms.forget;
      el.mean.anchor += terms.anchor;
      el.mean.retain += terms.retain;
      el.mean.total += terms.total;
      ++el.steps;
    }
    const double s = static_cast<double>(std::max<std::size_t>(1, el.steps));
    el.mean.forget /= s;
    el.mean.anchor /= s;
    el.mean.retain /= s;
    el.mean.total /= s;
    run.epochs.push_back(el);
    snapshot = model.adapter_params().data;
  }
  run.final_id = util::sha256_hex(lm::serialize_checkpoint(model));
  return run;
}

}  // namespace kgf::unlearn
