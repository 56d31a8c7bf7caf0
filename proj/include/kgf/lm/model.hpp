#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgf::lm {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a loss or gradient turns NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 512;
  int max_seq_len = 64;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LoraConfig {
  int rank = 16;
  double alpha = 32.0;
  double dropout = 0.05;
};

struct TensorSpec {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<Mat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const Mat<S>>;
/// Flat storage at Eigen's maximum alignment, so vectorized reductions over
/// mapped tensors sum in the same order wherever the heap places them.
template <typename S>
using Buffer = std::vector<S, Eigen::aligned_allocator<S>>;

/// Named tensors over one flat buffer.
template <typename S>
struct ParamSet {
  std::vector<TensorSpec> specs;
  Buffer<S> data;

  std::size_t add(std::string name, std::size_t rows, std::size_t cols);
  std::size_t find(const std::string& name) const;  // spec index; throws ModelError
  MatMap<S> view(std::size_t spec) { return {data.data() + specs[spec].offset, static_cast<Eigen::Index>(specs[spec].rows), static_cast<Eigen::Index>(specs[spec].cols)}; }
  ConstMatMap<S> view(std::size_t spec) const { return {data.data() + specs[spec].offset, static_cast<Eigen::Index>(specs[spec].rows), static_cast<Eigen::Index>(specs[spec].cols)}; }
  std::size_t size() const { return data.size(); }
};

/// One training or scoring sequence. tokens[answer_start..] are the
/// supervised targets, each predicted from the preceding position.
struct Example {
  std::vector<int> tokens;
  std::size_t answer_start = 1;
};

template <typename S>
struct Gradients {
  Buffer<S> base;          // empty when base weights are frozen
  Buffer<S> adapter;  // empty without adapters
  void zero();
  bool finite() const;
};

template <typename S>
struct BatchOutput {
  std::vector<S> seq_logprob;            // per example, summed over answer tokens
  std::vector<std::size_t> answer_rows;  // first supervised row of each example
  std::vector<std::size_t> answer_len;
  Mat<S> log_probs;                      // supervised rows x vocab, when requested
};

struct ForwardOptions {
  bool keep_tape = false;          // required before backward()
  bool train = false;              // enables adapter dropout
  bool want_distributions = false; // fills BatchOutput::log_probs
  std::uint64_t dropout_seed = 0;
};

/// Decoder-only transformer with pre-norm blocks, GELU feed-forward, learned
/// positions, untied output projection and optional low-rank adapters on the
/// attention and feed-forward matrices.
template <typename S>
class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model();

  const ModelConfig& config() const { return config_; }
  ParamSet<S>& params() { return params_; }
  const ParamSet<S>& params() const { return params_; }

  void attach_adapters(const LoraConfig& lora, std::uint64_t seed);
  void detach_adapters();
  bool has_adapters() const { return adapters_.has_value(); }
  const LoraConfig& lora_config() const;
  ParamSet<S>& adapter_params();
  const ParamSet<S>& adapter_params() const;
  /// Folds s*A*B into each adapted matrix and removes the adapters.
  void merge_adapters();
  /// Temporarily bypass adapters (the reference policy) without detaching them.
  void set_adapters_enabled(bool enabled) { adapters_enabled_ = enabled; }
  bool adapters_enabled() const { return adapters_enabled_; }

  /// Base weights receive gradients only when trainable; adapters always do.
  void set_base_trainable(bool trainable) { base_trainable_ = trainable; }
  bool base_trainable() const { return base_trainable_; }
  Gradients<S> make_gradients() const;

  BatchOutput<S> forward(const std::vector<Example>& batch, const ForwardOptions& opts = {});
  /// Accumulates sum_s coeff[s] * d(seq_logprob[s])/d(theta) into `grads`
  /// using the tape of the last forward(keep_tape = true).
  void backward(const std::vector<S>& coeff, Gradients<S>& grads);

  /// Next-token distributions (rows sum to one) at every position of `tokens`.
  Mat<S> next_token_probs(const std::vector<int>& tokens);

  /// Residual-stream state after the last block at the final position of each prompt.
  Mat<S> final_hidden(const std::vector<std::vector<int>>& prompts);

  /// Batched greedy decoding; stops a sequence at `eos` (not included) or max_new tokens.
  std::vector<std::vector<int>> greedy_decode(const std::vector<std::vector<int>>& prompts,
                                              int max_new, int eos);

 private:
  struct Layout;
  struct Tape;
  struct AdapterState {
    LoraConfig config;
    ParamSet<S> params;
  };

  void build_layout();
  void init_weights();
  Mat<S> effective_weight(int layer, int target) const;
  Mat<S> incremental(const std::vector<std::vector<int>>& prompts, std::vector<std::vector<Mat<S>>>* kcache,
                     std::vector<std::vector<Mat<S>>>* vcache, const std::vector<std::size_t>& start);

  ModelConfig config_;
  ParamSet<S> params_;
  std::optional<AdapterState> adapters_;
  bool adapters_enabled_ = true;
  bool base_trainable_ = true;
  std::unique_ptr<Layout> layout_;
  std::unique_ptr<Tape> tape_;
};

/// Converts between precisions (same layout and adapters).
template <typename To, typename From>
Model<To> convert_model(const Model<From>& m);

}  // namespace kgf::lm
