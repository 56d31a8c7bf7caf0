#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgf/bench/benchmark.hpp"
#include "kgf/lm/model.hpp"
#include "kgf/lm/train.hpp"
#include "kgf/unlearn/trainer.hpp"

namespace kgf::pipeline {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "key = value" lines; '#' starts a comment. Later assignments win.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const { return values_; }
  std::string render() const;

 private:
  std::map<std::string, std::string> values_;
};

struct ExperimentConfig {
  std::uint64_t world_seed = 7;
  std::size_t bench_targets = 0;  // 0 selects every eligible target
  std::uint64_t bench_seed = 1;
  bench::FiltrationConfig filtration;
  lm::ModelConfig model;
  lm::PretrainConfig pretrain;
  bool hold_out_multi_hop = true;  // keep evaluation chain questions out of the corpus
  unlearn::UnlearnConfig unlearn;
  std::vector<unlearn::Method> methods{unlearn::Method::NEDS, unlearn::Method::NPO, unlearn::Method::GA,
                                       unlearn::Method::GD,   unlearn::Method::ULDPO, unlearn::Method::ICU};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t subset = 20;  // targets unlearned per seed
  std::vector<double> lr_grid{1e-4, 3e-5, 2e-5, 1e-5};
  std::vector<double> corruption_grid{0.0, 0.3, 0.5, 0.8};
  double epsilon = 0.1;
  std::filesystem::path out = "out";

  /// Unknown keys and malformed values raise ConfigError naming the key.
  static ExperimentConfig from(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
  void validate() const;
};

/// Every key ExperimentConfig understands.
const std::vector<std::string>& known_keys();

}  // namespace kgf::pipeline
