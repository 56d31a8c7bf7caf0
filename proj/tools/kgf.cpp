#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kgf/bench/benchmark.hpp"
#include "kgf/kg/io.hpp"
#include "kgf/kg/world.hpp"
#include "kgf/lm/checkpoint.hpp"
#include "kgf/pipeline/config.hpp"
#include "kgf/pipeline/report.hpp"
#include "kgf/pipeline/stages.hpp"
#include "kgf/unlearn/trainer.hpp"

namespace fs = std::filesystem;
using namespace kgf;
using pipeline::json;
using pipeline::require;

namespace {

/// Flags shared by every subcommand; unset ones leave the config untouched.
struct Common {
  std::string config;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string method;
  std::optional<double> lr, lambda, beta, corruption;
  std::optional<std::size_t> k;
  std::string world, bench, model, run;
  std::vector<std::string> inputs;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value configuration file");
  cmd->add_option("--set", c.set, "override a config key (key=value)");
  cmd->add_option("--seed", c.seed, "seed for this stage");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--method", c.method, "NEDS, NPO, GA, GD, UL-DPO or ICU");
  cmd->add_option("--lr", c.lr, "unlearning learning rate");
  cmd->add_option("--lambda", c.lambda, "anchor weight");
  cmd->add_option("--beta", c.beta, "preference temperature");
  cmd->add_option("--k", c.k, "neighbors per target");
  cmd->add_option("--corruption", c.corruption, "neighbor corruption rate");
}

pipeline::ExperimentConfig resolve(const Common& c, const std::string& seed_key) {
  pipeline::KeyValueConfig kv;
  if (!c.config.empty()) kv = pipeline::KeyValueConfig::load(require(c.config));
  for (const auto& s : c.set) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw pipeline::ConfigError("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  auto num = [](double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  };
  if (c.seed) kv.set(seed_key, std::to_string(*c.seed));
  if (!c.method.empty()) kv.set("unlearn.method", c.method);
  if (c.lr) kv.set("unlearn.lr", num(*c.lr));
  if (c.lambda) kv.set("unlearn.lambda", num(*c.lambda));
  if (c.beta) kv.set("unlearn.beta", num(*c.beta));
  if (c.corruption) kv.set("unlearn.corruption", num(*c.corruption));
  if (c.k) kv.set("unlearn.k", std::to_string(*c.k));
  return pipeline::ExperimentConfig::from(kv);
}

fs::path dir_or(const std::string& flag, const fs::path& fallback) { return flag.empty() ? fallback : fs::path(flag); }

std::string method_dir(const unlearn::UnlearnConfig& u) {
  return unlearn::to_string(u.method) + "-seed" + std::to_string(u.seed);
}

void progress(const std::string& s) { std::cerr << s << std::endl; }

kg::KnowledgeGraph load_world(const fs::path& dir) {
  return kg::load_triples(require(dir / "world.tsv"), require(dir / "world.schema.tsv")).graph;
}

struct LoadedModel {
  lm::Tokenizer tok;
  lm::Model<float> model;
  std::vector<bench::Probe> known;
};

LoadedModel load_model(const fs::path& dir) {
  return LoadedModel{pipeline::load_vocabulary(dir / "vocab.txt"), lm::load_checkpoint(require(dir / "base.ckpt")),
                     bench::load_dataset(require(dir / "known.jsonl"))};
}

pipeline::Subset subset_for(const kg::KnowledgeGraph& g, const LoadedModel& m, const pipeline::ExperimentConfig& cfg) {
  return pipeline::select_subset(pipeline::cases_from_probes(g, m.known), m.known, cfg.subset, cfg.unlearn.seed);
}

int cmd_gen_world(const Common& c) {
  const auto cfg = resolve(c, "world.seed");
  const fs::path out = dir_or(c.out, cfg.out / "world");
  const auto g = pipeline::make_world(cfg);
  const auto [tsv, schema] = kg::write_world(g, out);
  auto m = pipeline::make_manifest("gen-world", cfg, {}, {{"world.tsv", tsv}, {"world.schema.tsv", schema}});
  m["seed"] = cfg.world_seed;
  m["entities"] = g.entities().size();
  m["triples"] = g.triples().size();
  pipeline::write_json(out / "manifest.json", m);
  progress("world: " + std::to_string(g.entities().size()) + " entities, " + std::to_string(g.triples().size()) +
           " triples -> " + out.string());
  return 0;
}

int cmd_build_bench(const Common& c) {
  const auto cfg = resolve(c, "bench.seed");
  const fs::path world = dir_or(c.world, cfg.out / "world");
  const fs::path out = dir_or(c.out, cfg.out / "bench");
  const auto g = load_world(world);
  const auto b = pipeline::make_benchmark(g, cfg);
  bench::emit_dataset(bench::all_probes(b.cases), out / "dataset.jsonl");
  auto m = pipeline::make_manifest("build-bench", cfg, {{"world.tsv", world / "world.tsv"}, {"world.schema.tsv", world / "world.schema.tsv"}},
                                   {{"dataset.jsonl", out / "dataset.jsonl"}});
  m["graph_seed"] = pipeline::read_json(require(world / "manifest.json")).at("seed");
  m["filtration"] = {{"min_geodesic", cfg.filtration.min_geodesic},
                     {"bfs_depth", cfg.filtration.bfs_depth},
                     {"neighborhood_k", cfg.filtration.neighborhood_k}};
  m["targets"] = b.stats.targets;
  m["direct_qa"] = b.stats.direct_qa;
  m["rejected_per_stage"] = b.stats.rejected_per_stage;
  m["missing_three_hop"] = b.stats.missing_three_hop;
  pipeline::write_json(out / "manifest.json", m);
  progress("benchmark: " + std::to_string(b.stats.targets) + " targets -> " + out.string());
  return 0;
}

int cmd_pretrain(const Common& c) {
  const auto cfg = resolve(c, "pretrain.seed");
  const fs::path world = dir_or(c.world, cfg.out / "world");
  const fs::path bench_dir = dir_or(c.bench, cfg.out / "bench");
  const fs::path out = dir_or(c.out, cfg.out / "model");
  const auto g = load_world(world);
  const auto probes = bench::load_dataset(require(bench_dir / "dataset.jsonl"));
  const auto cases = pipeline::cases_from_probes(g, probes);
  const auto t0 = std::chrono::steady_clock::now();
  auto base = pipeline::pretrain_model(g, cases, cfg, [&](int e, double loss, double recall) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[128];
    if (recall >= 0) {
      std::snprintf(buf, sizeof buf, "epoch %d loss %.4f direct recall %.3f (%.0fs)", e, loss, recall, s);
    } else {
      std::snprintf(buf, sizeof buf, "epoch %d loss %.4f (%.0fs)", e, loss, s);
    }
    progress(buf);
  });
  lm::save_checkpoint(base.model, out / "base.ckpt");
  pipeline::save_vocabulary(base.tok, out / "vocab.txt");
  bench::emit_dataset(base.known.kept, out / "known.jsonl");
  auto m = pipeline::make_manifest("pretrain", cfg, {{"world.tsv", world / "world.tsv"}, {"dataset.jsonl", bench_dir / "dataset.jsonl"}},
                                   {{"base.ckpt", out / "base.ckpt"}, {"vocab.txt", out / "vocab.txt"}, {"known.jsonl", out / "known.jsonl"}});
  m["corpus"] = {{"pairs", base.corpus.pairs},
                 {"direct_qa", base.corpus.direct_qa},
                 {"targets", cases.size()},
                 {"held_out_questions", base.corpus.held_out}};
  m["training"] = {{"epochs", base.training.epochs},
                   {"initial_loss", base.training.initial_loss},
                   {"final_loss", base.training.epoch_loss.empty() ? 0.0 : base.training.epoch_loss.back()},
                   {"direct_recall", base.training.probe_recall}};
  m["known"] = {{"kept", base.known.kept.size()},
                {"dropped", base.known.dropped.size()},
                {"dropped_cases", base.known.dropped_cases}};
  pipeline::write_json(out / "manifest.json", m);
  return 0;
}

int cmd_unlearn(const Common& c) {
  const auto cfg = resolve(c, "unlearn.seed");
  const fs::path world = dir_or(c.world, cfg.out / "world");
  const fs::path model_dir = dir_or(c.model, cfg.out / "model");
  const fs::path out = dir_or(c.out, cfg.out / "runs" / method_dir(cfg.unlearn));
  const auto g = load_world(world);
  auto m = load_model(model_dir);
  const auto subset = subset_for(g, m, cfg);
  const auto data = unlearn::prepare_unlearning(g, kg::TemplateBank::builtin(), subset.cases, subset.probes, cfg.unlearn);
  const auto t0 = std::chrono::steady_clock::now();
  const auto run = unlearn::run_unlearn(m.model, m.tok, data, cfg.unlearn);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bench::emit_dataset(subset.probes, out / "subset.jsonl");
  pipeline::write_text(out / "epoch_losses.csv", pipeline::render_epoch_csv(run));
  std::map<std::string, fs::path> outputs{{"subset.jsonl", out / "subset.jsonl"}, {"epoch_losses.csv", out / "epoch_losses.csv"}};
  if (cfg.unlearn.method != unlearn::Method::ICU) {
    lm::save_checkpoint(m.model, out / "final.ckpt");
    outputs["final.ckpt"] = out / "final.ckpt";
  } else {
    fs::remove(out / "final.ckpt");
  }
  auto man = pipeline::make_manifest("unlearn", cfg, {{"base.ckpt", model_dir / "base.ckpt"}, {"known.jsonl", model_dir / "known.jsonl"}},
                                     outputs);
  man["reference_checkpoint"] = run.reference_id;
  man["final_checkpoint"] = run.final_id;
  man["steps"] = run.steps;
  man["epoch_losses"] = pipeline::render_epoch_csv(run);
  pipeline::write_json(out / "manifest.json", man);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s: %zu steps in %.1fs -> ", unlearn::to_string(cfg.unlearn.method).c_str(), run.steps, secs);
  progress(buf + out.string());
  return 0;
}

int cmd_eval(const Common& c) {
  const auto cfg = resolve(c, "unlearn.seed");
  const fs::path world = dir_or(c.world, cfg.out / "world");
  const fs::path model_dir = dir_or(c.model, cfg.out / "model");
  const fs::path run_dir = dir_or(c.run, cfg.out / "runs" / method_dir(cfg.unlearn));
  const fs::path out = dir_or(c.out, cfg.out / "eval" / method_dir(cfg.unlearn));
  const auto g = load_world(world);
  auto m = load_model(model_dir);
  const auto subset = subset_for(g, m, cfg);
  auto baseline = pipeline::evaluate_baseline(m.model, m.tok, subset);
  const bool icu = cfg.unlearn.method == unlearn::Method::ICU;
  const fs::path policy_path = icu ? model_dir / "base.ckpt" : run_dir / "final.ckpt";
  const auto run_manifest = pipeline::read_json(require(run_dir / "manifest.json"));
  auto result = pipeline::evaluate_policy(g, m.model, lm::load_checkpoint(require(policy_path)), m.tok, subset,
                                          baseline, cfg.unlearn, {cfg.epsilon, true});
  result.run.reference_id = run_manifest.at("reference_checkpoint").get<std::string>();
  result.run.final_id = run_manifest.at("final_checkpoint").get<std::string>();
  result.run.steps = run_manifest.at("steps").get<std::size_t>();
  std::vector<pipeline::ReportRow> rows{pipeline::before_row(baseline.metrics),
                                        pipeline::mean_row(unlearn::to_string(cfg.unlearn.method), {result.metrics},
                                                           cfg.unlearn.learning_rate)};
  pipeline::write_text(out / "report.csv", pipeline::render_csv(rows));
  auto summary = pipeline::summary_json(result);
  summary["before"] = pipeline::to_json(baseline.metrics);
  pipeline::write_json(out / "summary.json", summary);
  auto man = pipeline::make_manifest("eval", cfg, {{"base.ckpt", model_dir / "base.ckpt"}, {"policy.ckpt", policy_path}, {"run_manifest", run_dir / "manifest.json"}},
                                     {{"report.csv", out / "report.csv"}, {"summary.json", out / "summary.json"}});
  pipeline::write_json(out / "manifest.json", man);
  std::cout << pipeline::render_csv(rows);
  return 0;
}

int cmd_sweep(const Common& c) {
  const auto cfg = resolve(c, "unlearn.seed");
  const fs::path world = dir_or(c.world, cfg.out / "world");
  const fs::path model_dir = dir_or(c.model, cfg.out / "model");
  const fs::path out = dir_or(c.out, cfg.out / "sweep" / method_dir(cfg.unlearn));
  const auto g = load_world(world);
  auto m = load_model(model_dir);
  const auto subset = subset_for(g, m, cfg);
  const auto baseline = pipeline::evaluate_baseline(m.model, m.tok, subset);
  const auto grid = cfg.unlearn.method == unlearn::Method::ICU ? std::vector<double>{cfg.unlearn.learning_rate} : cfg.lr_grid;
  const auto res = pipeline::sweep(g, m.model, m.tok, subset, baseline, cfg.unlearn, grid, {cfg.epsilon, true});
  const std::string name = unlearn::to_string(cfg.unlearn.method);
  pipeline::write_text(out / "sweep.csv", pipeline::render_sweep_csv(name, res.points, res.best));
  json runs = json::array();
  for (const auto& r : res.runs) runs.push_back(pipeline::summary_json(r));
  std::map<std::string, fs::path> outputs{{"sweep.csv", out / "sweep.csv"}};
  if (res.best) {
    auto summary = pipeline::summary_json(res.runs[*res.best]);
    summary["before"] = pipeline::to_json(baseline.metrics);
    pipeline::write_json(out / "summary.json", summary);
    outputs["summary.json"] = out / "summary.json";
  }
  pipeline::write_json(out / "grid.json", runs);
  outputs["grid.json"] = out / "grid.json";
  auto man = pipeline::make_manifest("sweep", cfg, {{"base.ckpt", model_dir / "base.ckpt"}, {"known.jsonl", model_dir / "known.jsonl"}}, outputs);
  man["selected_lr"] = res.best ? json(res.points[*res.best].learning_rate) : json(nullptr);
  pipeline::write_json(out / "manifest.json", man);
  std::cout << pipeline::render_sweep_csv(name, res.points, res.best);
  if (!res.best) throw lm::NumericError("every learning rate in the sweep failed");
  return 0;
}

int cmd_ablate(const Common& c) {
  auto cfg = resolve(c, "unlearn.seed");
  const fs::path world = dir_or(c.world, cfg.out / "world");
  const fs::path model_dir = dir_or(c.model, cfg.out / "model");
  const fs::path out = dir_or(c.out, cfg.out / "ablation" / ("seed" + std::to_string(cfg.unlearn.seed)));
  const auto g = load_world(world);
  auto m = load_model(model_dir);
  const auto subset = subset_for(g, m, cfg);
  const auto baseline = pipeline::evaluate_baseline(m.model, m.tok, subset);
  std::vector<pipeline::AblationRow> rows;
  auto ucfg = cfg.unlearn;
  ucfg.method = unlearn::Method::NEDS;
  for (double rate : cfg.corruption_grid) {
    ucfg.corruption_rate = rate;
    const auto r = pipeline::run_method(g, m.model, m.tok, subset, baseline, ucfg, {cfg.epsilon, false});
    rows.push_back({rate, r.metrics, !r.diverged});
  }
  pipeline::write_text(out / "ablation.csv", pipeline::render_ablation_csv(rows));
  pipeline::write_json(out / "manifest.json",
                       pipeline::make_manifest("ablate-corruption", cfg, {{"base.ckpt", model_dir / "base.ckpt"}},
                                               {{"ablation.csv", out / "ablation.csv"}}));
  std::cout << pipeline::render_ablation_csv(rows);
  return 0;
}

int cmd_report(const Common& c) {
  const auto cfg = resolve(c, "unlearn.seed");
  const fs::path out = dir_or(c.out, cfg.out / "report");
  std::vector<fs::path> inputs;
  for (const auto& s : c.inputs) inputs.emplace_back(s);
  if (inputs.empty()) {
    for (const char* sub : {"eval", "sweep"}) {
      const fs::path d = cfg.out / sub;
      if (!fs::exists(d)) continue;
      for (const auto& e : fs::directory_iterator(d)) {
        if (fs::exists(e.path() / "summary.json")) inputs.push_back(e.path());
      }
    }
    std::sort(inputs.begin(), inputs.end());
  }
  if (inputs.empty()) throw pipeline::MissingArtifact(cfg.out / "eval");
  std::map<std::string, std::vector<eval::MetricsReport>> by_method;
  std::map<std::string, std::vector<double>> lrs;
  std::vector<eval::MetricsReport> before;
  std::map<std::string, fs::path> in_files;
  for (const auto& d : inputs) {
    const auto j = pipeline::read_json(require(d / "summary.json"));
    in_files[d.filename().string()] = d / "summary.json";
    const std::string method = j.at("method").get<std::string>();
    by_method[method].push_back(pipeline::metrics_from_json(j.at("metrics")));
    lrs[method].push_back(j.at("learning_rate").get<double>());
    if (j.contains("before")) before.push_back(pipeline::metrics_from_json(j.at("before")));
  }
  std::vector<pipeline::ReportRow> rows;
  if (!before.empty()) {
    auto r = pipeline::mean_row(pipeline::kBeforeLabel, before);
    r.runs = before.size();
    rows.push_back(r);
  }
  for (auto method : cfg.methods) {
    const auto name = unlearn::to_string(method);
    auto it = by_method.find(name);
    if (it == by_method.end()) continue;
    const auto& l = lrs[name];
    const bool same = std::all_of(l.begin(), l.end(), [&](double x) { return x == l.front(); });
    rows.push_back(pipeline::mean_row(name, it->second, same ? std::optional<double>(l.front()) : std::nullopt));
  }
  pipeline::write_text(out / "report.csv", pipeline::render_csv(rows));
  pipeline::write_text(out / "dkcs.svg", pipeline::render_svg(rows));
  pipeline::write_json(out / "manifest.json", pipeline::make_manifest("report", cfg, in_files,
                                                                      {{"report.csv", out / "report.csv"}, {"dkcs.svg", out / "dkcs.svg"}}));
  std::cout << pipeline::render_csv(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph unlearning benchmark and trainer"};
  app.require_subcommand(1);
  Common c;
  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const Common&);
  };
  const std::vector<Sub> subs{
      {"gen-world", "generate the synthetic knowledge graph", cmd_gen_world},
      {"build-bench", "select targets, filter retain facts and emit probes", cmd_build_bench},
      {"pretrain", "train the base model on the rendered corpus", cmd_pretrain},
      {"unlearn", "run one unlearning method", cmd_unlearn},
      {"eval", "evaluate an unlearned checkpoint", cmd_eval},
      {"sweep", "learning-rate sweep with harmonic-mean selection", cmd_sweep},
      {"ablate-corruption", "NEDS under neighbor corruption", cmd_ablate},
      {"report", "aggregate evaluations into the method table and chart", cmd_report},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Common&)>> cmds;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, c);
    const std::string n = s.name;
    if (n != "gen-world") cmd->add_option("--world", c.world, "world directory");
    if (n == "pretrain") cmd->add_option("--bench", c.bench, "benchmark directory");
    if (n == "unlearn" || n == "eval" || n == "sweep" || n == "ablate-corruption") {
      cmd->add_option("--model", c.model, "pretrained model directory");
    }
    if (n == "eval") cmd->add_option("--run", c.run, "unlearning run directory");
    if (n == "report") cmd->add_option("--inputs", c.inputs, "evaluation or sweep directories");
    cmds.emplace_back(cmd, s.fn);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }
  try {
    for (const auto& [cmd, fn] : cmds) {
      if (cmd->parsed()) return fn(c);
    }
  } catch (const pipeline::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const pipeline::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lm::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
