#include "kgf/pipeline/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace kgf::pipeline {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": '" + v + "' is not a nonnegative integer");
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const auto x = to_u64(key, v);
  if (x > 1'000'000'000) throw ConfigError(key + ": " + v + " is out of range");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source) {
  KeyValueConfig kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    kv.values_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string KeyValueConfig::render() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "world.seed",          "bench.targets",        "bench.seed",           "filtration.min_geodesic",
      "filtration.bfs_depth", "filtration.neighborhood_k", "model.d_model",   "model.layers",
      "model.heads",         "model.d_ff",           "model.max_seq_len",    "model.seed",
      "pretrain.max_epochs", "pretrain.min_epochs",  "pretrain.batch_size",  "pretrain.lr",
      "pretrain.eval_every", "pretrain.target_recall", "pretrain.seed",      "pretrain.hold_out_multi_hop",
      "unlearn.method",      "unlearn.beta",         "unlearn.lambda",       "unlearn.mu",
      "unlearn.gamma",       "unlearn.k",            "unlearn.lr",           "unlearn.epochs",
      "unlearn.corruption",  "unlearn.seed",         "unlearn.npo_retain",   "unlearn.uniform_weights",
      "unlearn.refusal",     "unlearn.forget_batch", "unlearn.retain_batch", "unlearn.lora_rank",
      "unlearn.lora_alpha",  "unlearn.lora_dropout", "experiment.methods",   "experiment.seeds",
      "experiment.subset",   "sweep.lr_grid",        "ablation.corruption_grid", "eval.epsilon",
      "out"};
  return keys;
}

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& kv) {
  ExperimentConfig c;
  const auto& keys = known_keys();
  for (const auto& [key, v] : kv.values()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      if (key == "world.seed") c.world_seed = to_u64(key, v);
      else if (key == "bench.targets") c.bench_targets = to_u64(key, v);
      else if (key == "bench.seed") c.bench_seed = to_u64(key, v);
      else if (key == "filtration.min_geodesic") c.filtration.min_geodesic = static_cast<unsigned>(to_int(key, v));
      else if (key == "filtration.bfs_depth") c.filtration.bfs_depth = static_cast<unsigned>(to_int(key, v));
      else if (key == "filtration.neighborhood_k") c.filtration.neighborhood_k = static_cast<unsigned>(to_int(key, v));
      else if (key == "model.d_model") c.model.d_model = to_int(key, v);
      else if (key == "model.layers") c.model.n_layers = to_int(key, v);
      else if (key == "model.heads") c.model.n_heads = to_int(key, v);
      else if (key == "model.d_ff") c.model.d_ff = to_int(key, v);
      else if (key == "model.max_seq_len") c.model.max_seq_len = to_int(key, v);
      else if (key == "model.seed") c.model.seed = to_u64(key, v);
      else if (key == "pretrain.max_epochs") c.pretrain.max_epochs = to_int(key, v);
      else if (key == "pretrain.min_epochs") c.pretrain.min_epochs = to_int(key, v);
      else if (key == "pretrain.batch_size") c.pretrain.batch_size = to_int(key, v);
      else if (key == "pretrain.lr") c.pretrain.lr = to_double(key, v);
      else if (key == "pretrain.eval_every") c.pretrain.eval_every = to_int(key, v);
      else if (key == "pretrain.target_recall") c.pretrain.target_recall = to_double(key, v);
      else if (key == "pretrain.seed") c.pretrain.seed = to_u64(key, v);
      else if (key == "pretrain.hold_out_multi_hop") c.hold_out_multi_hop = to_bool(key, v);
      else if (key == "unlearn.method") c.unlearn.method = unlearn::parse_method(v);
      else if (key == "unlearn.beta") c.unlearn.beta = to_double(key, v);
      else if (key == "unlearn.lambda") c.unlearn.lambda = to_double(key, v);
      else if (key == "unlearn.mu") c.unlearn.mu = to_double(key, v);
      else if (key == "unlearn.gamma") c.unlearn.gamma = to_double(key, v);
      else if (key == "unlearn.k") c.unlearn.k = to_u64(key, v);
      else if (key == "unlearn.lr") c.unlearn.learning_rate = to_double(key, v);
      else if (key == "unlearn.epochs") c.unlearn.epochs = to_int(key, v);
      else if (key == "unlearn.corruption") c.unlearn.corruption_rate = to_double(key, v);
      else if (key == "unlearn.seed") c.unlearn.seed = to_u64(key, v);
      else if (key == "unlearn.npo_retain") c.unlearn.npo_retain = to_bool(key, v);
      else if (key == "unlearn.uniform_weights") c.unlearn.uniform_weights = to_bool(key, v);
      else if (key == "unlearn.refusal") c.unlearn.refusal = v;
      else if (key == "unlearn.forget_batch") c.unlearn.forget_batch = to_u64(key, v);
      else if (key == "unlearn.retain_batch") c.unlearn.retain_batch = to_u64(key, v);
      else if (key == "unlearn.lora_rank") c.unlearn.lora.rank = to_int(key, v);
      else if (key == "unlearn.lora_alpha") c.unlearn.lora.alpha = to_double(key, v);
      else if (key == "unlearn.lora_dropout") c.unlearn.lora.dropout = to_double(key, v);
      else if (key == "experiment.methods") {
        c.methods.clear();
        for (const auto& m : split_list(v)) c.methods.push_back(unlearn::parse_method(m));
      } else if (key == "experiment.seeds") {
        c.seeds.clear();
        for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(key, s));
      } else if (key == "experiment.subset") c.subset = to_u64(key, v);
      else if (key == "sweep.lr_grid") {
        c.lr_grid.clear();
        for (const auto& s : split_list(v)) c.lr_grid.push_back(to_double(key, s));
      } else if (key == "ablation.corruption_grid") {
        c.corruption_grid.clear();
        for (const auto& s : split_list(v)) c.corruption_grid.push_back(to_double(key, s));
      } else if (key == "eval.epsilon") c.epsilon = to_double(key, v);
      else if (key == "out") c.out = v;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

KeyValueConfig ExperimentConfig::to_kv() const {
  KeyValueConfig kv;
  auto d = [](double x) { return fmt_double(x); };
  auto u = [](auto x) { return std::to_string(x); };
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  kv.set("world.seed", u(world_seed));
  kv.set("bench.targets", u(bench_targets));
  kv.set("bench.seed", u(bench_seed));
  kv.set("filtration.min_geodesic", u(filtration.min_geodesic));
  kv.set("filtration.bfs_depth", u(filtration.bfs_depth));
  kv.set("filtration.neighborhood_k", u(filtration.neighborhood_k));
  kv.set("model.d_model", u(model.d_model));
  kv.set("model.layers", u(model.n_layers));
  kv.set("model.heads", u(model.n_heads));
  kv.set("model.d_ff", u(model.d_ff));
  kv.set("model.max_seq_len", u(model.max_seq_len));
  kv.set("model.seed", u(model.seed));
  kv.set("pretrain.max_epochs", u(pretrain.max_epochs));
  kv.set("pretrain.min_epochs", u(pretrain.min_epochs));
  kv.set("pretrain.batch_size", u(pretrain.batch_size));
  kv.set("pretrain.lr", d(pretrain.lr));
  kv.set("pretrain.eval_every", u(pretrain.eval_every));
  kv.set("pretrain.target_recall", d(pretrain.target_recall));
  kv.set("pretrain.seed", u(pretrain.seed));
  kv.set("pretrain.hold_out_multi_hop", b(hold_out_multi_hop));
  kv.set("unlearn.method", unlearn::to_string(unlearn.method));
  kv.set("unlearn.beta", d(unlearn.beta));
  kv.set("unlearn.lambda", d(unlearn.lambda));
  kv.set("unlearn.mu", d(unlearn.mu));
  kv.set("unlearn.gamma", d(unlearn.gamma));
  kv.set("unlearn.k", u(unlearn.k));
  kv.set("unlearn.lr", d(unlearn.learning_rate));
  kv.set("unlearn.epochs", u(unlearn.epochs));
  kv.set("unlearn.corruption", d(unlearn.corruption_rate));
  kv.set("unlearn.seed", u(unlearn.seed));
  kv.set("unlearn.npo_retain", b(unlearn.npo_retain));
  kv.set("unlearn.uniform_weights", b(unlearn.uniform_weights));
  kv.set("unlearn.refusal", unlearn.refusal);
  kv.set("unlearn.forget_batch", u(unlearn.forget_batch));
  kv.set("unlearn.retain_batch", u(unlearn.retain_batch));
  kv.set("unlearn.lora_rank", u(unlearn.lora.rank));
  kv.set("unlearn.lora_alpha", d(unlearn.lora.alpha));
  kv.set("unlearn.lora_dropout", d(unlearn.lora.dropout));
  kv.set("experiment.methods", join(methods, [](unlearn::Method m) { return unlearn::to_string(m); }));
  kv.set("experiment.seeds", join(seeds, [](std::uint64_t s) { return std::to_string(s); }));
  kv.set("experiment.subset", u(subset));
  kv.set("sweep.lr_grid", join(lr_grid, fmt_double));
  kv.set("ablation.corruption_grid", join(corruption_grid, fmt_double));
  kv.set("eval.epsilon", d(epsilon));
  kv.set("out", out.string());
  return kv;
}

void ExperimentConfig::validate() const {
  filtration.validate();
  unlearn.validate();
  if (methods.empty()) throw ConfigError("experiment.methods must not be empty");
  if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  if (lr_grid.empty()) throw ConfigError("sweep.lr_grid must not be empty");
  for (double lr : lr_grid) {
    if (!(lr > 0)) throw ConfigError("sweep.lr_grid entries must be positive");
  }
  for (double r : corruption_grid) {
    if (!(r >= 0 && r <= 1)) throw ConfigError("ablation.corruption_grid entries must lie in [0, 1]");
  }
  if (subset < 1) throw ConfigError("experiment.subset must be at least 1");
  if (!(epsilon > 0)) throw ConfigError("eval.epsilon must be positive");
  if (pretrain.batch_size < 1 || pretrain.max_epochs < 1) throw ConfigError("invalid pretraining schedule");
}

}  // namespace kgf::pipeline
