#include <array>
#include <fstream>
#include <utility>

#include "json.hpp"
#include "kgf/bench/benchmark.hpp"

namespace kgf::bench {
namespace {

using json = nlohmann::ordered_json;

constexpr std::array<std::pair<ProbeType, const char*>, 6> kTypes = {{
    {ProbeType::Direct, "direct"},
    {ProbeType::Paraphrase, "paraphrase"},
    {ProbeType::Inverse, "inverse"},
    {ProbeType::TwoHop, "two_hop"},
    {ProbeType::ThreeHop, "three_hop"},
    {ProbeType::Retain, "retain"},
}};

constexpr std::array<std::pair<Split, const char*>, 3> kSplits = {{
    {Split::ForgetTrain, "forget_train"},
    {Split::ForgetEval, "forget_eval"},
    {Split::RetainEval, "retain_eval"},
}};

json triple_json(const LabeledTriple& t) {
  return json{{"head", t.head}, {"relation", t.relation}, {"tail", t.tail}};
}

LabeledTriple triple_from(const json& j) {
  return LabeledTriple{j.at("head").get<std::string>(), j.at("relation").get<std::string>(),
                       j.at("tail").get<std::string>()};
}

}  // namespace

std::string to_string(ProbeType t) {
  for (const auto& [k, v] : kTypes) {
    if (k == t) return v;
  }
  return "unknown";
}

std::string to_string(TemplateFamily f) { return f == TemplateFamily::QA ? "QA" : "FB"; }

std::string to_string(Split s) {
  for (const auto& [k, v] : kSplits) {
    if (k == s) return v;
  }
  return "unknown";
}

ProbeType parse_probe_type(const std::string& s) {
  for (const auto& [k, v] : kTypes) {
    if (s == v) return k;
  }
  throw std::invalid_argument("unknown probe type '" + s + "'");
}

TemplateFamily parse_template_family(const std::string& s) {
  if (s == "QA") return TemplateFamily::QA;
  if (s == "FB") return TemplateFamily::FB;
  throw std::invalid_argument("unknown template family '" + s + "'");
}

Split parse_split(const std::string& s) {
  for (const auto& [k, v] : kSplits) {
    if (s == v) return k;
  }
  throw std::invalid_argument("unknown split '" + s + "'");
}

LabeledTriple label_triple(const kg::KnowledgeGraph& g, const kg::Triple& t) {
  return LabeledTriple{g.entity(t.head).label, g.relation(t.relation).label,
                       g.entity(t.tail).label};
}

kg::Triple resolve_triple(const kg::KnowledgeGraph& g, const LabeledTriple& t) {
  return kg::Triple{g.entity_by_label(t.head), g.relation_by_label(t.relation),
                    g.entity_by_label(t.tail)};
}

void emit_dataset(const std::vector<Probe>& probes, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& p : probes) {
    json j;
    j["case_id"] = p.case_id;
    j["probe_id"] = p.probe_id;
    j["probe_type"] = to_string(p.type);
    j["template_family"] = to_string(p.family);
    j["hop"] = p.hop;
    j["question"] = p.question;
    j["answer"] = p.answer;
    j["target"] = triple_json(p.target);
    if (!p.chain.empty()) {
      json chain = json::array();
      for (const auto& t : p.chain) chain.push_back(triple_json(t));
      j["chain"] = std::move(chain);
    }
    if (!p.pattern.empty()) j["pattern"] = p.pattern;
    j["split"] = to_string(p.split);
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<Probe> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Probe> probes;
  std::string line;
  for (std::size_t record = 0; std::getline(in, line); ++record) {
    if (line.empty()) throw DatasetError(record, "empty record");
    try {
      const json j = json::parse(line);
      Probe p;
      p.case_id = j.at("case_id").get<std::string>();
      p.probe_id = j.at("probe_id").get<std::string>();
      p.type = parse_probe_type(j.at("probe_type").get<std::string>());
      p.family = parse_template_family(j.at("template_family").get<std::string>());
      p.hop = j.at("hop").get<int>();
      p.question = j.at("question").get<std::string>();
      p.answer = j.at("answer").get<std::string>();
      p.target = triple_from(j.at("target"));
      if (j.contains("chain")) {
        for (const auto& t : j.at("chain")) p.chain.push_back(triple_from(t));
      }
      if (j.contains("pattern")) p.pattern = j.at("pattern").get<std::string>();
      p.split = parse_split(j.at("split").get<std::string>());
      if (p.answer.empty()) throw std::invalid_argument("empty answer");
      if (p.hop != hop_of(p.type)) throw std::invalid_argument("hop inconsistent with probe type");
      probes.push_back(std::move(p));
    } catch (const DatasetError&) {
      throw;
    } catch (const std::exception& e) {
      throw DatasetError(record, e.what());
    }
  }
  return probes;
}

}  // namespace kgf::bench
