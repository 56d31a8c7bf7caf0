#include "kgf/lm/model.hpp"

#include <array>
#include <cmath>
#include <random>

namespace kgf::lm {
namespace {

constexpr int kTargets = 6;  // wq, wk, wv, wo, w1, w2
constexpr std::array<const char*, kTargets> kTargetNames = {"attn.wq", "attn.wk", "attn.wv",
                                                            "attn.wo", "ffn.w1",  "ffn.w2"};
constexpr std::array<const char*, kTargets> kBiasNames = {"attn.bq", "attn.bk", "attn.bv",
                                                          "attn.bo", "ffn.b1",  "ffn.b2"};
constexpr double kLnEps = 1e-5;

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <typename S>
S gelu(S x) {
  const S c = static_cast<S>(0.7978845608028654);
  return static_cast<S>(0.5) * x * (static_cast<S>(1) + std::tanh(c * (x + static_cast<S>(0.044715) * x * x * x)));
}

template <typename S>
S gelu_grad(S x) {
  const S c = static_cast<S>(0.7978845608028654);
  const S t = std::tanh(c * (x + static_cast<S>(0.044715) * x * x * x));
  return static_cast<S>(0.5) * (static_cast<S>(1) + t) +
         static_cast<S>(0.5) * x * (static_cast<S>(1) - t * t) * c *
             (static_cast<S>(1) + static_cast<S>(3 * 0.044715) * x * x);
}

template <typename S>
struct LnCache {
  Mat<S> xhat;
  Vec<S> rstd;
};

template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const Eigen::Ref<const Mat<S>>& g, const Eigen::Ref<const Mat<S>>& b, LnCache<S>* cache) {
  const auto n = x.rows();
  const auto d = x.cols();
  Mat<S> xhat(n, d);
  Vec<S> rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const S mu = x.row(i).mean();
    const S var = (x.row(i).array() - mu).square().mean();
    rstd(i) = static_cast<S>(1) / std::sqrt(var + static_cast<S>(kLnEps));
    xhat.row(i) = (x.row(i).array() - mu) * rstd(i);
  }
  Mat<S> y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

// dx for y = LN(x)*g + b given dy; accumulates dg, db when non-null.
template <typename S>
Mat<S> layer_norm_back(const Mat<S>& dy, const LnCache<S>& c, const Eigen::Ref<const Mat<S>>& g, S* dg, S* db) {
  const auto n = dy.rows();
  const auto d = dy.cols();
  if (dg) {
    Eigen::Map<RowVec<S>> dgm(dg, d);
    Eigen::Map<RowVec<S>> dbm(db, d);
    dgm += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    dbm += dy.colwise().sum();
  }
  Mat<S> dxhat = dy.array().rowwise() * g.row(0).array();
  Mat<S> dx(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const S m1 = dxhat.row(i).mean();
    const S m2 = (dxhat.row(i).array() * c.xhat.row(i).array()).mean();
    dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2);
  }
  return dx;
}

template <typename S>
void log_softmax_rows(Mat<S>& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const S mx = z.row(i).maxCoeff();
    const S lse = mx + std::log((z.row(i).array() - mx).exp().sum());
    z.row(i).array() -= lse;
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 ||
      max_seq_len <= 0) {
    throw ModelError("model config fields must be positive");
  }
  if (d_model % n_heads != 0) throw ModelError("d_model must be divisible by n_heads");
}

template <typename S>
std::size_t ParamSet<S>::add(std::string name, std::size_t rows, std::size_t cols) {
  specs.push_back(TensorSpec{std::move(name), data.size(), rows, cols});
  data.resize(data.size() + rows * cols, S(0));
  return specs.size() - 1;
}

template <typename S>
std::size_t ParamSet<S>::find(const std::string& name) const {
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name == name) return i;
  }
  throw ModelError("no tensor named '" + name + "'");
}

template <typename S>
void Gradients<S>::zero() {
  std::fill(base.begin(), base.end(), S(0));
  std::fill(adapter.begin(), adapter.end(), S(0));
}

template <typename S>
bool Gradients<S>::finite() const {
  for (S v : base) {
    if (!std::isfinite(v)) return false;
  }
  for (S v : adapter) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename S>
struct Model<S>::Layout {
  std::size_t tok_emb = 0, pos_emb = 0, lnf_g = 0, lnf_b = 0, out_w = 0;
  struct LayerIdx {
    std::size_t ln1_g, ln1_b, ln2_g, ln2_b;
    std::array<std::size_t, kTargets> w, b;
    std::array<std::size_t, kTargets> lora_a{}, lora_b{};
  };
  std::vector<LayerIdx> layers;
};

template <typename S>
struct Model<S>::Tape {
  struct Layer {
    Mat<S> x_in, h1, q, k, v, att, xmid, h2, f1, act;
    LnCache<S> ln1, ln2;
    std::vector<Mat<S>> probs;  // per (sequence, head)
    std::array<Mat<S>, kTargets> lora_x, lora_u, lora_mask;
  };
  std::vector<int> tokens, positions;
  std::vector<std::size_t> offset, length;
  std::vector<Layer> layers;
  Mat<S> x_final, hf_sel, probs_sel;
  LnCache<S> lnf;
  std::vector<std::size_t> sel_rows, sel_seq;
  std::vector<int> sel_target;
  bool lora_active = false;
  bool dropout = false;
};

template <typename S>
Model<S>::Model(const ModelConfig& config) : config_(config), layout_(std::make_unique<Layout>()) {
  config_.validate();
  build_layout();
  init_weights();
}

template <typename S>
Model<S>::Model(const Model& o)
    : config_(o.config_),
      params_(o.params_),
      adapters_(o.adapters_),
      adapters_enabled_(o.adapters_enabled_),
      base_trainable_(o.base_trainable_),
      layout_(std::make_unique<Layout>(*o.layout_)) {}

template <typename S>
Model<S>& Model<S>::operator=(const Model& o) {
  if (this != &o) {
    config_ = o.config_;
    params_ = o.params_;
    adapters_ = o.adapters_;
    adapters_enabled_ = o.adapters_enabled_;
    base_trainable_ = o.base_trainable_;
    layout_ = std::make_unique<Layout>(*o.layout_);
    tape_.reset();
  }
  return *this;
}

template <typename S>
Model<S>::Model(Model&&) noexcept = default;
template <typename S>
Model<S>& Model<S>::operator=(Model&&) noexcept = default;
template <typename S>
Model<S>::~Model() = default;

template <typename S>
void Model<S>::build_layout() {
  const auto d = static_cast<std::size_t>(config_.d_model);
  const auto ff = static_cast<std::size_t>(config_.d_ff);
  const auto v = static_cast<std::size_t>(config_.vocab_size);
  Layout& L = *layout_;
  L.tok_emb = params_.add("tok_emb", v, d);
  L.pos_emb = params_.add("pos_emb", static_cast<std::size_t>(config_.max_seq_len), d);
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    typename Layout::LayerIdx idx{};
    idx.ln1_g = params_.add(p + "ln1.g", 1, d);
    idx.ln1_b = params_.add(p + "ln1.b", 1, d);
    for (int t = 0; t < kTargets; ++t) {
      const std::size_t in = t == 5 ? ff : d;
      const std::size_t out = t == 4 ? ff : d;
      idx.w[t] = params_.add(p + kTargetNames[t], in, out);
      idx.b[t] = params_.add(p + kBiasNames[t], 1, out);
    }
    idx.ln2_g = params_.add(p + "ln2.g", 1, d);
    idx.ln2_b = params_.add(p + "ln2.b", 1, d);
    L.layers.push_back(idx);
  }
  L.lnf_g = params_.add("lnf.g", 1, d);
  L.lnf_b = params_.add("lnf.b", 1, d);
  L.out_w = params_.add("out.w", d, v);
}

template <typename S>
void Model<S>::init_weights() {
  std::mt19937_64 rng(config_.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double resid_std = 0.02 / std::sqrt(2.0 * config_.n_layers);
  for (std::size_t i = 0; i < params_.specs.size(); ++i) {
    const auto& spec = params_.specs[i];
    auto m = params_.view(i);
    const std::string& n = spec.name;
    const bool is_gain = n.ends_with(".g");
    const bool is_bias = spec.rows == 1 && !is_gain;
    if (is_gain) {
      m.setOnes();
    } else if (is_bias) {
      m.setZero();
    } else {
      const double sd = (n.ends_with("attn.wo") || n.ends_with("ffn.w2")) ? resid_std : 0.02;
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<S>(sd * normal(rng));
      }
    }
  }
}

template <typename S>
void Model<S>::attach_adapters(const LoraConfig& lora, std::uint64_t seed) {
  if (lora.rank < 1) throw ModelError("adapter rank must be >= 1");
  if (lora.dropout < 0.0 || lora.dropout >= 1.0) throw ModelError("adapter dropout must be in [0,1)");
  const int min_dim = std::min(config_.d_model, config_.d_ff);
  if (lora.rank > min_dim) {
    throw ModelError("adapter rank " + std::to_string(lora.rank) + " exceeds matrix dimension " +
                     std::to_string(min_dim));
  }
  AdapterState st;
  st.config = lora;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < config_.n_layers; ++l) {
    auto& idx = layout_->layers[static_cast<std::size_t>(l)];
    for (int t = 0; t < kTargets; ++t) {
      const auto& w = params_.specs[idx.w[t]];
      const std::string p = "l" + std::to_string(l) + "." + kTargetNames[t];
      idx.lora_a[t] = st.params.add(p + ".lora_a", w.rows, static_cast<std::size_t>(lora.rank));
      idx.lora_b[t] = st.params.add(p + ".lora_b", static_cast<std::size_t>(lora.rank), w.cols);
      auto a = st.params.view(idx.lora_a[t]);
      const double sd = 1.0 / std::sqrt(static_cast<double>(w.rows));
      for (Eigen::Index r = 0; r < a.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = static_cast<S>(sd * normal(rng));
      }
    }
  }
  adapters_ = std::move(st);
  adapters_enabled_ = true;
  base_trainable_ = false;
}

template <typename S>
void Model<S>::detach_adapters() {
  adapters_.reset();
  adapters_enabled_ = true;
  base_trainable_ = true;
}

template <typename S>
const LoraConfig& Model<S>::lora_config() const {
  if (!adapters_) throw ModelError("no adapters attached");
  return adapters_->config;
}

template <typename S>
ParamSet<S>& Model<S>::adapter_params() {
  if (!adapters_) throw ModelError("no adapters attached");
  return adapters_->params;
}

template <typename S>
const ParamSet<S>& Model<S>::adapter_params() const {
  if (!adapters_) throw ModelError("no adapters attached");
  return adapters_->params;
}

template <typename S>
Mat<S> Model<S>::effective_weight(int layer, int target) const {
  const auto& idx = layout_->layers[static_cast<std::size_t>(layer)];
  Mat<S> w = params_.view(idx.w[target]);
  if (adapters_ && adapters_enabled_) {
    const S scale = static_cast<S>(adapters_->config.alpha / adapters_->config.rank);
    w.noalias() += scale * (adapters_->params.view(idx.lora_a[target]) *
                            adapters_->params.view(idx.lora_b[target]));
  }
  return w;
}

template <typename S>
void Model<S>::merge_adapters() {
  if (!adapters_) throw ModelError("no adapters attached");
  for (int l = 0; l < config_.n_layers; ++l) {
    for (int t = 0; t < kTargets; ++t) {
      Mat<S> w = effective_weight(l, t);
      params_.view(layout_->layers[static_cast<std::size_t>(l)].w[t]) = w;
    }
  }
  detach_adapters();
}

template <typename S>
Gradients<S> Model<S>::make_gradients() const {
  Gradients<S> g;
  if (base_trainable_) g.base.assign(params_.size(), S(0));
  if (adapters_ && adapters_enabled_) g.adapter.assign(adapters_->params.size(), S(0));
  return g;
}

template <typename S>
BatchOutput<S> Model<S>::forward(const std::vector<Example>& batch, const ForwardOptions& opts) {
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const int H = config_.n_heads;
  const auto dh = d / H;
  const S att_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const Layout& L = *layout_;
  const bool lora = adapters_ && adapters_enabled_;
  const S lora_scale = lora ? static_cast<S>(adapters_->config.alpha / adapters_->config.rank) : S(0);
  const bool dropout = lora && opts.train && adapters_->config.dropout > 0.0;
  std::mt19937_64 drop_rng(opts.dropout_seed);

  auto tape = std::make_unique<Tape>();
  Tape& T = *tape;
  T.lora_active = lora;
  T.dropout = dropout;
  BatchOutput<S> out;
  std::size_t n_rows = 0;
  for (const auto& ex : batch) {
    if (ex.tokens.size() < 2 || ex.answer_start < 1 || ex.answer_start >= ex.tokens.size()) {
      throw ModelError("example needs a non-empty prompt and answer");
    }
    const std::size_t len = ex.tokens.size() - 1;
    if (len > static_cast<std::size_t>(config_.max_seq_len)) {
      throw ModelError("sequence of length " + std::to_string(len) + " exceeds max_seq_len " +
                       std::to_string(config_.max_seq_len));
    }
    T.offset.push_back(n_rows);
    T.length.push_back(len);
    for (std::size_t i = 0; i < len; ++i) {
      const int tok = ex.tokens[i];
      if (tok < 0 || tok >= config_.vocab_size) throw ModelError("token id out of range");
      T.tokens.push_back(tok);
      T.positions.push_back(static_cast<int>(i));
    }
    out.answer_rows.push_back(T.sel_rows.size());
    out.answer_len.push_back(ex.tokens.size() - ex.answer_start);
    for (std::size_t j = ex.answer_start; j < ex.tokens.size(); ++j) {
      if (ex.tokens[j] < 0 || ex.tokens[j] >= config_.vocab_size) throw ModelError("token id out of range");
      T.sel_rows.push_back(n_rows + j - 1);
      T.sel_seq.push_back(T.offset.size() - 1);
      T.sel_target.push_back(ex.tokens[j]);
    }
    n_rows += len;
  }
  const auto N = static_cast<Eigen::Index>(n_rows);

  Mat<S> x(N, d);
  {
    auto te = params_.view(L.tok_emb);
    auto pe = params_.view(L.pos_emb);
    for (Eigen::Index i = 0; i < N; ++i) x.row(i) = te.row(T.tokens[i]) + pe.row(T.positions[i]);
  }

  auto linear = [&](const Mat<S>& in, const typename Layout::LayerIdx& idx, int t,
                    typename Tape::Layer& tl) {
    Mat<S> y = in * params_.view(idx.w[t]);
    y.rowwise() += params_.view(idx.b[t]).row(0);
    if (lora) {
      Mat<S> xin = in;
      if (dropout) {
        const double p = adapters_->config.dropout;
        const S keep = static_cast<S>(1.0 / (1.0 - p));
        Mat<S> mask(in.rows(), in.cols());
        for (Eigen::Index r = 0; r < mask.rows(); ++r) {
          for (Eigen::Index c = 0; c < mask.cols(); ++c) {
            const double u = static_cast<double>(drop_rng() >> 11) * 0x1.0p-53;
            mask(r, c) = u < p ? S(0) : keep;
          }
        }
        xin = xin.cwiseProduct(mask);
        if (opts.keep_tape) tl.lora_mask[t] = std::move(mask);
      }
      Mat<S> u = xin * adapters_->params.view(idx.lora_a[t]);
      y.noalias() += lora_scale * (u * adapters_->params.view(idx.lora_b[t]));
      if (opts.keep_tape) {
        tl.lora_x[t] = std::move(xin);
        tl.lora_u[t] = std::move(u);
      }
    }
    return y;
  };

  T.layers.resize(static_cast<std::size_t>(config_.n_layers));
  for (int l = 0; l < config_.n_layers; ++l) {
    const auto& idx = L.layers[static_cast<std::size_t>(l)];
    auto& tl = T.layers[static_cast<std::size_t>(l)];
    LnCache<S> ln1, ln2;
    Mat<S> h1 = layer_norm<S>(x, params_.view(idx.ln1_g), params_.view(idx.ln1_b), &ln1);
    Mat<S> q = linear(h1, idx, 0, tl);
    Mat<S> k = linear(h1, idx, 1, tl);
    Mat<S> v = linear(h1, idx, 2, tl);
    Mat<S> att(N, d);
    if (opts.keep_tape) tl.probs.resize(T.offset.size() * static_cast<std::size_t>(H));
    for (std::size_t s = 0; s < T.offset.size(); ++s) {
      const auto o = static_cast<Eigen::Index>(T.offset[s]);
      const auto n = static_cast<Eigen::Index>(T.length[s]);
      for (int h = 0; h < H; ++h) {
        Mat<S> sc = (q.block(o, h * dh, n, dh) * k.block(o, h * dh, n, dh).transpose()) * att_scale;
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index j = i + 1; j < n; ++j) sc(i, j) = -std::numeric_limits<S>::infinity();
          const S mx = sc.row(i).head(i + 1).maxCoeff();
          sc.row(i) = (sc.row(i).array() - mx).exp();
          sc.row(i) /= sc.row(i).sum();
        }
        att.block(o, h * dh, n, dh).noalias() = sc * v.block(o, h * dh, n, dh);
        if (opts.keep_tape) tl.probs[s * static_cast<std::size_t>(H) + static_cast<std::size_t>(h)] = std::move(sc);
      }
    }
    Mat<S> xmid = x + linear(att, idx, 3, tl);
    Mat<S> h2 = layer_norm<S>(xmid, params_.view(idx.ln2_g), params_.view(idx.ln2_b), &ln2);
    Mat<S> f1 = linear(h2, idx, 4, tl);
    Mat<S> act = f1.unaryExpr([](S z) { return gelu(z); });
    Mat<S> xout = xmid + linear(act, idx, 5, tl);
    if (opts.keep_tape) {
      tl.x_in = std::move(x);
      tl.h1 = std::move(h1);
      tl.q = std::move(q);
      tl.k = std::move(k);
      tl.v = std::move(v);
      tl.att = std::move(att);
      tl.xmid = std::move(xmid);
      tl.h2 = std::move(h2);
      tl.f1 = std::move(f1);
      tl.act = std::move(act);
      tl.ln1 = std::move(ln1);
      tl.ln2 = std::move(ln2);
    }
    x = std::move(xout);
  }

  const auto M = static_cast<Eigen::Index>(T.sel_rows.size());
  Mat<S> xsel(M, d);
  for (Eigen::Index i = 0; i < M; ++i) xsel.row(i) = x.row(static_cast<Eigen::Index>(T.sel_rows[i]));
  LnCache<S> lnf;
  Mat<S> hf = layer_norm<S>(xsel, params_.view(L.lnf_g), params_.view(L.lnf_b), &lnf);
  Mat<S> logits = hf * params_.view(L.out_w);
  log_softmax_rows(logits);

  out.seq_logprob.assign(batch.size(), S(0));
  for (Eigen::Index i = 0; i < M; ++i) out.seq_logprob[T.sel_seq[i]] += logits(i, T.sel_target[i]);
  for (S lp : out.seq_logprob) {
    if (!std::isfinite(lp)) throw NumericError("non-finite sequence log-probability");
  }
  if (opts.keep_tape) {
    T.probs_sel = logits.array().exp();
    T.hf_sel = std::move(hf);
    T.lnf = std::move(lnf);
    T.x_final = std::move(x);
    tape_ = std::move(tape);
  } else {
    tape_.reset();
  }
  if (opts.want_distributions) out.log_probs = std::move(logits);
  return out;
}

template <typename S>
void Model<S>::backward(const std::vector<S>& coeff, Gradients<S>& grads) {
  if (!tape_) throw ModelError("backward() needs a forward pass with keep_tape");
  Tape& T = *tape_;
  if (coeff.size() != T.offset.size()) throw ModelError("one coefficient per example required");
  const Layout& L = *layout_;
  const bool base = base_trainable_ && !grads.base.empty();
  const bool lora = T.lora_active;
  if (lora && grads.adapter.size() != adapters_->params.size()) {
    throw ModelError("gradient buffer does not match the adapters");
  }
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const int H = config_.n_heads;
  const auto dh = d / H;
  const S att_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const S lora_scale = lora ? static_cast<S>(adapters_->config.alpha / adapters_->config.rank) : S(0);
  const auto N = static_cast<Eigen::Index>(T.tokens.size());
  const auto M = static_cast<Eigen::Index>(T.sel_rows.size());

  auto gbase = [&](std::size_t spec) {
    const auto& sp = params_.specs[spec];
    return MatMap<S>(grads.base.data() + sp.offset, static_cast<Eigen::Index>(sp.rows),
                     static_cast<Eigen::Index>(sp.cols));
  };
  auto gadapt = [&](std::size_t spec) {
    const auto& sp = adapters_->params.specs[spec];
    return MatMap<S>(grads.adapter.data() + sp.offset, static_cast<Eigen::Index>(sp.rows),
                     static_cast<Eigen::Index>(sp.cols));
  };

  // d logp / d logits = onehot - softmax, scaled per example.
  Mat<S> dlogits = -T.probs_sel;
  for (Eigen::Index i = 0; i < M; ++i) {
    dlogits(i, T.sel_target[i]) += S(1);
    dlogits.row(i) *= coeff[T.sel_seq[i]];
  }
  if (base) gbase(L.out_w).noalias() += T.hf_sel.transpose() * dlogits;
  Mat<S> dhf = dlogits * params_.view(L.out_w).transpose();
  Mat<S> dxsel = layer_norm_back<S>(dhf, T.lnf, params_.view(L.lnf_g),
                                    base ? gbase(L.lnf_g).data() : nullptr,
                                    base ? gbase(L.lnf_b).data() : nullptr);
  Mat<S> dx = Mat<S>::Zero(N, d);
  for (Eigen::Index i = 0; i < M; ++i) dx.row(static_cast<Eigen::Index>(T.sel_rows[i])) += dxsel.row(i);

  auto linear_back = [&](const Mat<S>& in, const typename Layout::LayerIdx& idx, int t,
                         const typename Tape::Layer& tl, const Mat<S>& dy) {
    if (base) {
      gbase(idx.w[t]).noalias() += in.transpose() * dy;
      gbase(idx.b[t]).row(0) += dy.colwise().sum();
    }
    Mat<S> dxin = dy * params_.view(idx.w[t]).transpose();
    if (lora) {
      auto A = adapters_->params.view(idx.lora_a[t]);
      auto B = adapters_->params.view(idx.lora_b[t]);
      Mat<S> du = lora_scale * (dy * B.transpose());
      gadapt(idx.lora_b[t]).noalias() += lora_scale * (tl.lora_u[t].transpose() * dy);
      gadapt(idx.lora_a[t]).noalias() += tl.lora_x[t].transpose() * du;
      Mat<S> dxl = du * A.transpose();
      if (T.dropout) dxl = dxl.cwiseProduct(tl.lora_mask[t]);
      dxin += dxl;
    }
    return dxin;
  };

  for (int l = config_.n_layers - 1; l >= 0; --l) {
    const auto& idx = L.layers[static_cast<std::size_t>(l)];
    const auto& tl = T.layers[static_cast<std::size_t>(l)];
    // xout = xmid + W2 gelu(W1 LN2(xmid))
    Mat<S> dact = linear_back(tl.act, idx, 5, tl, dx);
    Mat<S> df1 = dact.cwiseProduct(tl.f1.unaryExpr([](S z) { return gelu_grad(z); }));
    Mat<S> dh2 = linear_back(tl.h2, idx, 4, tl, df1);
    Mat<S> dxmid = dx + layer_norm_back<S>(dh2, tl.ln2, params_.view(idx.ln2_g),
                                           base ? gbase(idx.ln2_g).data() : nullptr,
                                           base ? gbase(idx.ln2_b).data() : nullptr);
    // xmid = x_in + Wo attn(LN1(x_in))
    Mat<S> datt = linear_back(tl.att, idx, 3, tl, dxmid);
    Mat<S> dq = Mat<S>::Zero(N, d), dk = Mat<S>::Zero(N, d), dv = Mat<S>::Zero(N, d);
    for (std::size_t s = 0; s < T.offset.size(); ++s) {
      const auto o = static_cast<Eigen::Index>(T.offset[s]);
      const auto n = static_cast<Eigen::Index>(T.length[s]);
      for (int h = 0; h < H; ++h) {
        const Mat<S>& P = tl.probs[s * static_cast<std::size_t>(H) + static_cast<std::size_t>(h)];
        const auto dO = datt.block(o, h * dh, n, dh);
        Mat<S> dP = dO * tl.v.block(o, h * dh, n, dh).transpose();
        dv.block(o, h * dh, n, dh).noalias() += P.transpose() * dO;
        Mat<S> dS = P.cwiseProduct(dP);
        Vec<S> rs = dS.rowwise().sum();
        dS -= P.cwiseProduct(rs.replicate(1, n));
        dq.block(o, h * dh, n, dh).noalias() += att_scale * (dS * tl.k.block(o, h * dh, n, dh));
        dk.block(o, h * dh, n, dh).noalias() += att_scale * (dS.transpose() * tl.q.block(o, h * dh, n, dh));
      }
    }
    Mat<S> dh1 = linear_back(tl.h1, idx, 0, tl, dq);
    dh1 += linear_back(tl.h1, idx, 1, tl, dk);
    dh1 += linear_back(tl.h1, idx, 2, tl, dv);
    dx = dxmid + layer_norm_back<S>(dh1, tl.ln1, params_.view(idx.ln1_g),
                                    base ? gbase(idx.ln1_g).data() : nullptr,
                                    base ? gbase(idx.ln1_b).data() : nullptr);
  }
  if (base) {
    auto gt = gbase(L.tok_emb);
    auto gp = gbase(L.pos_emb);
    for (Eigen::Index i = 0; i < N; ++i) {
      gt.row(T.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
      gp.row(T.positions[static_cast<std::size_t>(i)]) += dx.row(i);
    }
  }
  if (!grads.finite()) throw NumericError("non-finite gradient");
}

// Runs `tokens[s]` through the network on top of the cached keys/values of
// sequence s (starting at absolute position start[s]); returns the residual
// stream of every new position, packed.
template <typename S>
Mat<S> Model<S>::incremental(const std::vector<std::vector<int>>& tokens,
                             std::vector<std::vector<Mat<S>>>* kcache,
                             std::vector<std::vector<Mat<S>>>* vcache,
                             const std::vector<std::size_t>& start) {
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const int H = config_.n_heads;
  const auto dh = d / H;
  const S att_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const Layout& L = *layout_;
  std::vector<std::size_t> offset;
  std::size_t rows = 0;
  for (std::size_t s = 0; s < tokens.size(); ++s) {
    offset.push_back(rows);
    if (start[s] + tokens[s].size() > static_cast<std::size_t>(config_.max_seq_len)) {
      throw ModelError("sequence exceeds max_seq_len");
    }
    rows += tokens[s].size();
  }
  const auto N = static_cast<Eigen::Index>(rows);
  Mat<S> x(N, d);
  auto te = params_.view(L.tok_emb);
  auto pe = params_.view(L.pos_emb);
  for (std::size_t s = 0; s < tokens.size(); ++s) {
    for (std::size_t i = 0; i < tokens[s].size(); ++i) {
      const int tok = tokens[s][i];
      if (tok < 0 || tok >= config_.vocab_size) throw ModelError("token id out of range");
      x.row(static_cast<Eigen::Index>(offset[s] + i)) =
          te.row(tok) + pe.row(static_cast<Eigen::Index>(start[s] + i));
    }
  }
  for (int l = 0; l < config_.n_layers; ++l) {
    const auto& idx = L.layers[static_cast<std::size_t>(l)];
    std::array<Mat<S>, kTargets> w;
    for (int t = 0; t < kTargets; ++t) w[t] = effective_weight(l, t);
    auto lin = [&](const Mat<S>& in, int t) {
      Mat<S> y = in * w[t];
      y.rowwise() += params_.view(idx.b[t]).row(0);
      return y;
    };
    Mat<S> h1 = layer_norm<S>(x, params_.view(idx.ln1_g), params_.view(idx.ln1_b), nullptr);
    Mat<S> q = lin(h1, 0), k = lin(h1, 1), v = lin(h1, 2);
    Mat<S> att(N, d);
    for (std::size_t s = 0; s < tokens.size(); ++s) {
      const auto o = static_cast<Eigen::Index>(offset[s]);
      const auto n = static_cast<Eigen::Index>(tokens[s].size());
      Mat<S>& K = (*kcache)[s][static_cast<std::size_t>(l)];
      Mat<S>& V = (*vcache)[s][static_cast<std::size_t>(l)];
      const Eigen::Index past = K.rows();
      K.conservativeResize(past + n, d);
      V.conservativeResize(past + n, d);
      K.bottomRows(n) = k.middleRows(o, n);
      V.bottomRows(n) = v.middleRows(o, n);
      for (int h = 0; h < H; ++h) {
        Mat<S> sc = (q.block(o, h * dh, n, dh) * K.middleCols(h * dh, dh).transpose()) * att_scale;
        for (Eigen::Index i = 0; i < n; ++i) {
          const Eigen::Index visible = past + i + 1;
          for (Eigen::Index j = visible; j < sc.cols(); ++j) sc(i, j) = -std::numeric_limits<S>::infinity();
          const S mx = sc.row(i).head(visible).maxCoeff();
          sc.row(i) = (sc.row(i).array() - mx).exp();
          sc.row(i) /= sc.row(i).sum();
        }
        att.block(o, h * dh, n, dh).noalias() = sc * V.middleCols(h * dh, dh);
      }
    }
    Mat<S> xmid = x + lin(att, 3);
    Mat<S> h2 = layer_norm<S>(xmid, params_.view(idx.ln2_g), params_.view(idx.ln2_b), nullptr);
    Mat<S> act = lin(h2, 4).unaryExpr([](S z) { return gelu(z); });
    x = xmid + lin(act, 5);
  }
  return x;
}

template <typename S>
Mat<S> Model<S>::next_token_probs(const std::vector<int>& tokens) {
  if (tokens.empty()) throw ModelError("empty input");
  std::vector<std::vector<Mat<S>>> kc(1, std::vector<Mat<S>>(static_cast<std::size_t>(config_.n_layers), Mat<S>(0, config_.d_model)));
  auto vc = kc;
  Mat<S> x = incremental({tokens}, &kc, &vc, {0});
  Mat<S> hf = layer_norm<S>(x, params_.view(layout_->lnf_g), params_.view(layout_->lnf_b), nullptr);
  Mat<S> logits = hf * params_.view(layout_->out_w);
  log_softmax_rows(logits);
  return logits.array().exp();
}

template <typename S>
Mat<S> Model<S>::final_hidden(const std::vector<std::vector<int>>& prompts) {
  const auto n_layers = static_cast<std::size_t>(config_.n_layers);
  std::vector<std::vector<Mat<S>>> kc(prompts.size(), std::vector<Mat<S>>(n_layers, Mat<S>(0, config_.d_model)));
  auto vc = kc;
  Mat<S> x = incremental(prompts, &kc, &vc, std::vector<std::size_t>(prompts.size(), 0));
  Mat<S> out(static_cast<Eigen::Index>(prompts.size()), config_.d_model);
  std::size_t row = 0;
  for (std::size_t s = 0; s < prompts.size(); ++s) {
    if (prompts[s].empty()) throw ModelError("empty prompt");
    row += prompts[s].size();
    out.row(static_cast<Eigen::Index>(s)) = x.row(static_cast<Eigen::Index>(row - 1));
  }
  return out;
}

template <typename S>
std::vector<std::vector<int>> Model<S>::greedy_decode(const std::vector<std::vector<int>>& prompts,
                                                       int max_new, int eos) {
  std::vector<std::vector<int>> result(prompts.size());
  if (max_new <= 0 || prompts.empty()) return result;
  const auto n_layers = static_cast<std::size_t>(config_.n_layers);
  std::vector<std::vector<Mat<S>>> kc(prompts.size(), std::vector<Mat<S>>(n_layers, Mat<S>(0, config_.d_model)));
  auto vc = kc;
  std::vector<std::size_t> active(prompts.size());
  std::vector<std::size_t> pos(prompts.size());
  std::vector<std::vector<int>> feed = prompts;
  for (std::size_t s = 0; s < prompts.size(); ++s) {
    if (prompts[s].empty()) throw ModelError("empty prompt");
    active[s] = s;
  }
  auto out_w = params_.view(layout_->out_w);
  for (int step = 0; step < max_new && !active.empty(); ++step) {
    std::vector<std::vector<int>> toks;
    std::vector<std::vector<Mat<S>>> kc_act, vc_act;
    std::vector<std::size_t> starts;
    for (auto s : active) {
      toks.push_back(feed[s]);
      kc_act.push_back(std::move(kc[s]));
      vc_act.push_back(std::move(vc[s]));
      starts.push_back(pos[s]);
    }
    Mat<S> x = incremental(toks, &kc_act, &vc_act, starts);
    Mat<S> last(static_cast<Eigen::Index>(active.size()), config_.d_model);
    std::size_t row = 0;
    for (std::size_t a = 0; a < active.size(); ++a) {
      row += toks[a].size();
      last.row(static_cast<Eigen::Index>(a)) = x.row(static_cast<Eigen::Index>(row - 1));
    }
    Mat<S> hf = layer_norm<S>(last, params_.view(layout_->lnf_g), params_.view(layout_->lnf_b), nullptr);
    Mat<S> logits = hf * out_w;
    std::vector<std::size_t> still;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto s = active[a];
      kc[s] = std::move(kc_act[a]);
      vc[s] = std::move(vc_act[a]);
      pos[s] += toks[a].size();
      Eigen::Index best = 0;
      logits.row(static_cast<Eigen::Index>(a)).maxCoeff(&best);
      const int tok = static_cast<int>(best);
      if (tok == eos) continue;
      result[s].push_back(tok);
      if (pos[s] + 1 > static_cast<std::size_t>(config_.max_seq_len)) continue;
      feed[s] = {tok};
      still.push_back(s);
    }
    active = std::move(still);
  }
  return result;
}

template <typename To, typename From>
Model<To> convert_model(const Model<From>& m) {
  Model<To> out(m.config());
  for (std::size_t i = 0; i < m.params().size(); ++i) out.params().data[i] = static_cast<To>(m.params().data[i]);
  if (m.has_adapters()) {
    out.attach_adapters(m.lora_config(), 0);
    for (std::size_t i = 0; i < m.adapter_params().size(); ++i) {
      out.adapter_params().data[i] = static_cast<To>(m.adapter_params().data[i]);
    }
  }
  out.set_base_trainable(m.base_trainable());
  out.set_adapters_enabled(m.adapters_enabled());
  return out;
}

template struct ParamSet<float>;
template struct ParamSet<double>;
template struct Gradients<float>;
template struct Gradients<double>;
template class Model<float>;
template class Model<double>;
template Model<double> convert_model<double, float>(const Model<float>&);
template Model<float> convert_model<float, double>(const Model<double>&);
template Model<double> convert_model<double, double>(const Model<double>&);

}  // namespace kgf::lm
