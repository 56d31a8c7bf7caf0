#include "kgf/pipeline/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "kgf/util/hash.hpp"

namespace kgf::pipeline {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v, int digits = 4) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string lr_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double nan_mean(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isnan(x)) continue;
    s += x;
    ++n;
  }
  return n ? s / static_cast<double>(n) : kNaN;
}

double number_or_nan(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return kNaN;
  return j.at(key).get<double>();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

const std::filesystem::path& require(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw MissingArtifact(p);
  return p;
}

ReportRow before_row(const eval::MetricsReport& pre) { return ReportRow{kBeforeLabel, pre, std::nullopt, 1}; }

ReportRow mean_row(const std::string& label, const std::vector<eval::MetricsReport>& runs,
                   std::optional<double> learning_rate) {
  if (runs.empty()) throw std::invalid_argument("no runs to average for " + label);
  auto field = [&](double eval::MetricsReport::*f) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.*f);
    return nan_mean(v);
  };
  eval::MetricsReport m;
  m.ue_direct = field(&eval::MetricsReport::ue_direct);
  m.ue_paraphrase = field(&eval::MetricsReport::ue_paraphrase);
  m.ue_inverse = field(&eval::MetricsReport::ue_inverse);
  m.ue_multi_hop = field(&eval::MetricsReport::ue_multi_hop);
  m.locality = field(&eval::MetricsReport::locality);
  m.kcs_pre = field(&eval::MetricsReport::kcs_pre);
  m.kcs_post = field(&eval::MetricsReport::kcs_post);
  m.delta_kcs = field(&eval::MetricsReport::delta_kcs);
  m.refusal_rate = field(&eval::MetricsReport::refusal_rate);
  m.hmean = field(&eval::MetricsReport::hmean);
  return ReportRow{label, m, learning_rate, runs.size()};
}

std::string render_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "# Forget columns: unlearning efficacy, 1 - ROUGE-L recall of the gold answer (higher = more forgotten)\n";
  out << "# Locality: ROUGE-L recall on retain probes; Multi-hops pools two- and three-hop probes\n";
  out << "# RefusalRate over every evaluated output; Hmean of Direct UE and Locality\n";
  out << "Method,Direct,Paraphrase,Inverse,Multi-hops,Locality,RefusalRate,Hmean,DeltaKCS,LR,Runs\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.label << ',' << num(m.ue_direct) << ',' << num(m.ue_paraphrase) << ',' << num(m.ue_inverse) << ','
        << num(m.ue_multi_hop) << ',' << num(m.locality) << ',' << num(m.refusal_rate) << ',' << num(m.hmean) << ','
        << num(m.delta_kcs) << ',' << (r.learning_rate ? lr_text(*r.learning_rate) : "") << ',' << r.runs << '\n';
  }
  out << "# Toy-scale model and synthetic graph: absolute values are not comparable to large-model results\n";
  return out.str();
}

std::string render_svg(const std::vector<ReportRow>& rows) {
  std::vector<const ReportRow*> bars;
  for (const auto& r : rows) {
    if (r.label != kBeforeLabel) bars.push_back(&r);
  }
  const int bar_h = 24, gap = 8, left = 120, width = 320, top = 40;
  double extent = 1e-9;
  for (const auto* r : bars) {
    if (!std::isnan(r->metrics.delta_kcs)) extent = std::max(extent, std::abs(r->metrics.delta_kcs));
  }
  const int height = top + static_cast<int>(bars.size()) * (bar_h + gap) + 20;
  const int total_w = left + 2 * width + 80;
  const double zero = left + width;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total_w << "\" height=\"" << height << "\">\n";
  out << "  <text x=\"" << total_w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">Change in knowledge connectivity (ΔKCS)</text>\n";
  out << "  <line x1=\"" << zero << "\" y1=\"" << top - 6 << "\" x2=\"" << zero << "\" y2=\"" << height - 14
      << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = std::isnan(bars[i]->metrics.delta_kcs) ? 0.0 : bars[i]->metrics.delta_kcs;
    const double w = std::abs(v) / extent * width;
    const double x = v < 0 ? zero - w : zero;
    const int y = top + static_cast<int>(i) * (bar_h + gap);
    out << "  <text x=\"" << left - 8 << "\" y=\"" << y + bar_h * 0.7 << "\" text-anchor=\"end\" "
           "font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(bars[i]->label) << "</text>\n";
    out << "  <rect x=\"" << num(x, 2) << "\" y=\"" << y << "\" width=\"" << num(w, 2) << "\" height=\"" << bar_h
        << "\" fill=\"" << (v < 0 ? "#c0504d" : "#4f81bd") << "\"/>\n";
    const double tx = v < 0 ? x - 4 : x + w + 4;
    out << "  <text x=\"" << num(tx, 2) << "\" y=\"" << y + bar_h * 0.7 << "\" text-anchor=\""
        << (v < 0 ? "end" : "start") << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << num(bars[i]->metrics.delta_kcs, 3) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string render_sweep_csv(const std::string& method, const std::vector<SweepPoint>& points,
                             std::optional<std::size_t> best) {
  std::ostringstream out;
  out << "# Selection: highest Hmean of Direct UE and Locality; ties go to higher mean forget UE\n";
  out << "Method,LR,Status,Hmean,ForgetUE,Selected\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    out << method << ',' << lr_text(p.learning_rate) << ',' << (p.ok ? "ok" : "FAILED") << ',' << num(p.hmean)
        << ',' << num(p.forget_ue) << ',' << (best && *best == i ? "yes" : "no") << '\n';
  }
  if (!best) out << "# No learning rate completed\n";
  return out.str();
}

std::string render_ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "CorruptionRate,Direct,Multi-hops,Locality,Status\n";
  for (const auto& r : rows) {
    out << num(r.rate, 2) << ',' << num(r.metrics.ue_direct) << ',' << num(r.metrics.ue_multi_hop) << ','
        << num(r.metrics.locality) << ',' << (r.ok ? "ok" : "FAILED") << '\n';
  }
  return out.str();
}

std::string render_epoch_csv(const unlearn::UnlearnRun& run) {
  std::ostringstream out;
  out << "epoch,steps,forget,anchor,retain,total\n";
  for (const auto& e : run.epochs) {
    out << e.epoch << ',' << e.steps << ',' << num(e.mean.forget, 6) << ',' << num(e.mean.anchor, 6) << ','
        << num(e.mean.retain, 6) << ',' << num(e.mean.total, 6) << '\n';
  }
  return out.str();
}

json to_json(const eval::MetricsReport& m) {
  return json{{"ue_direct", m.ue_direct},       {"ue_paraphrase", m.ue_paraphrase}, {"ue_inverse", m.ue_inverse},
              {"ue_multi_hop", m.ue_multi_hop}, {"locality", m.locality},           {"kcs_pre", m.kcs_pre},
              {"kcs_post", m.kcs_post},         {"delta_kcs", m.delta_kcs},         {"refusal_rate", m.refusal_rate},
              {"hmean", m.hmean}};
}

eval::MetricsReport metrics_from_json(const json& j) {
  eval::MetricsReport m;
  m.ue_direct = number_or_nan(j, "ue_direct");
  m.ue_paraphrase = number_or_nan(j, "ue_paraphrase");
  m.ue_inverse = number_or_nan(j, "ue_inverse");
  m.ue_multi_hop = number_or_nan(j, "ue_multi_hop");
  m.locality = number_or_nan(j, "locality");
  m.kcs_pre = number_or_nan(j, "kcs_pre");
  m.kcs_post = number_or_nan(j, "kcs_post");
  m.delta_kcs = number_or_nan(j, "delta_kcs");
  m.refusal_rate = number_or_nan(j, "refusal_rate");
  m.hmean = number_or_nan(j, "hmean");
  return m;
}

json to_json(const eval::BoundaryReport& b) {
  return json{{"p_forget", b.p_forget},
              {"p_retain", b.p_retain},
              {"ratio", b.ratio},
              {"logprob_gap", b.logprob_gap},
              {"logprob_gap_convention", "mean retain log-probability minus mean forget log-probability"},
              {"roc_auc", b.roc_auc},
              {"mean_kl_forget", b.mean_kl_forget},
              {"mean_kl_neighbor", b.mean_kl_neighbor},
              {"neighbor_within_epsilon_fraction", b.neighbor_within_epsilon_fraction},
              {"epsilon", b.epsilon}};
}

json to_json(const eval::DriftReport& d) {
  return json{{"drift_target", d.drift_target},       {"drift_neighbor", d.drift_neighbor},
              {"drift_distant", d.drift_distant},     {"gradient_cosine", d.gradient_cosine},
              {"forget_grad_norm", d.forget_grad_norm}, {"residual_norm", d.residual_norm}};
}

json summary_json(const MethodResult& r) {
  json j;
  j["method"] = unlearn::to_string(r.config.method);
  j["learning_rate"] = r.config.learning_rate;
  j["seed"] = r.config.seed;
  j["status"] = r.diverged ? "diverged" : "ok";
  if (r.diverged) j["failure"] = r.failure;
  j["reference_checkpoint"] = r.run.reference_id;
  j["final_checkpoint"] = r.run.final_id;
  j["steps"] = r.run.steps;
  j["metrics"] = to_json(r.metrics);
  j["boundary_pre"] = to_json(r.boundary_pre);
  j["boundary_post"] = to_json(r.boundary_post);
  j["drift"] = r.drift ? to_json(*r.drift) : json(nullptr);
  return j;
}

json make_manifest(const std::string& stage, const ExperimentConfig& cfg,
                   const std::map<std::string, std::filesystem::path>& inputs,
                   const std::map<std::string, std::filesystem::path>& outputs) {
  json j;
  j["stage"] = stage;
  json c = json::object();
  const auto kv = cfg.to_kv();
  for (const auto& [k, v] : kv.values()) {
    if (k != "out") c[k] = v;
  }
  j["config"] = c;
  json in = json::object();
  for (const auto& [name, p] : inputs) in[name] = util::sha256_file(require(p));
  j["inputs"] = in;
  json out = json::object();
  for (const auto& [name, p] : outputs) out[name] = util::sha256_file(require(p));
  j["outputs"] = out;
  return j;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + p.string());
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(require(p), std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const std::filesystem::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

json read_json(const std::filesystem::path& p) { return json::parse(read_text(p)); }

void save_vocabulary(const lm::Tokenizer& tok, const std::filesystem::path& p) {
  std::string text;
  for (const auto& w : tok.vocabulary()) text += w + "\n";
  write_text(p, text);
}

lm::Tokenizer load_vocabulary(const std::filesystem::path& p) {
  std::istringstream in(read_text(p));
  std::vector<std::string> words;
  for (std::string line; std::getline(in, line);) words.push_back(line);
  return lm::Tokenizer::from_vocabulary(words);
}

}  // namespace kgf::pipeline
