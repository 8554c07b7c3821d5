#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tweetlm/autodiff.hpp"
#include "tweetlm/errors.hpp"
#include "tweetlm/mlm.hpp"
#include "tweetlm/rng.hpp"
#include "tweetlm/tensor.hpp"

namespace tweetlm::model {

enum class Mode { kTrain, kEval };

struct EncoderConfig {
  int64_t hidden = 768;
  int64_t feedforward = 3072;
  int64_t heads = 12;
  int64_t blocks = 12;
  int64_t max_positions = 256;
  int64_t vocab_size = 30000;
  int64_t segments = 2;
  double dropout = 0.10;
  double layer_norm_eps = 1e-12;

  void validate() const;
};

// name -> shape for every learnable tensor, in a fixed order. Computed from
// the config alone so the full-size count can be checked without allocating.
std::vector<std::pair<std::string, std::vector<int64_t>>> param_shapes(const EncoderConfig& cfg);
int64_t param_count(const EncoderConfig& cfg);

template <typename T>
struct BlockParams {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln1_g, ln1_b;
  Tensor<T> w1, b1, w2, b2;
  Tensor<T> ln2_g, ln2_b;
};

template <typename T>
struct ModelParams {
  Tensor<T> token_emb, pos_emb, seg_emb;
  Tensor<T> emb_ln_g, emb_ln_b;
  std::vector<BlockParams<T>> blocks;
  // MLM head; the output projection is tied to token_emb, only its bias is
  // a separate tensor.
  Tensor<T> mlm_w, mlm_b, mlm_ln_g, mlm_ln_b, mlm_out_b;

  static ModelParams init(const EncoderConfig& cfg, uint64_t seed);
};

// Single source of field order; works for ModelParams<T> and EncoderVars<T>
// because the member names coincide.
template <typename S, typename F>
void for_each_encoder_field(S& s, F&& f) {
  f("token_emb", s.token_emb);
  f("pos_emb", s.pos_emb);
  f("seg_emb", s.seg_emb);
  f("emb_ln_g", s.emb_ln_g);
  f("emb_ln_b", s.emb_ln_b);
  for (size_t i = 0; i < s.blocks.size(); ++i) {
    auto& blk = s.blocks[i];
    const std::string p = "block" + std::to_string(i) + ".";
    f(p + "wq", blk.wq);
    f(p + "bq", blk.bq);
    f(p + "wk", blk.wk);
    f(p + "bk", blk.bk);
    f(p + "wv", blk.wv);
    f(p + "bv", blk.bv);
    f(p + "wo", blk.wo);
    f(p + "bo", blk.bo);
    f(p + "ln1_g", blk.ln1_g);
    f(p + "ln1_b", blk.ln1_b);
    f(p + "w1", blk.w1);
    f(p + "b1", blk.b1);
    f(p + "w2", blk.w2);
    f(p + "b2", blk.b2);
    f(p + "ln2_g", blk.ln2_g);
    f(p + "ln2_b", blk.ln2_b);
  }
  f("mlm_w", s.mlm_w);
  f("mlm_b", s.mlm_b);
  f("mlm_ln_g", s.mlm_ln_g);
  f("mlm_ln_b", s.mlm_ln_b);
  f("mlm_out_b", s.mlm_out_b);
}

template <typename T>
struct BlockVars {
  ad::Var<T> wq, bq, wk, bk, wv, bv, wo, bo;
  ad::Var<T> ln1_g, ln1_b;
  ad::Var<T> w1, b1, w2, b2;
  ad::Var<T> ln2_g, ln2_b;
};

template <typename T>
struct EncoderVars {
  ad::Var<T> token_emb, pos_emb, seg_emb;
  ad::Var<T> emb_ln_g, emb_ln_b;
  std::vector<BlockVars<T>> blocks;
  ad::Var<T> mlm_w, mlm_b, mlm_ln_g, mlm_ln_b, mlm_out_b;

  static EncoderVars bind(ad::Graph<T>& g, const ModelParams<T>& params) {
    EncoderVars vars;
    vars.blocks.resize(params.blocks.size());
    std::vector<const Tensor<T>*> tensors;
    for_each_encoder_field(params, [&](const std::string&, const Tensor<T>& t) {
      tensors.push_back(&t);
    });
    std::vector<ad::Var<T>*> slots;
    for_each_encoder_field(vars, [&](const std::string&, ad::Var<T>& v) { slots.push_back(&v); });
    for (size_t i = 0; i < slots.size(); ++i) *slots[i] = g.param(*tensors[i]);
    return vars;
  }
};

// Per-layer activations: embedding output followed by every block output,
// each (b*t, hidden).
template <typename T>
struct HiddenStack {
  std::vector<ad::Var<T>> layers;
  int64_t b = 0;
  int64_t t = 0;

  const ad::Var<T>& last() const { return layers.back(); }
};

template <typename T>
HiddenStack<T> encoder_forward(ad::Graph<T>& g, const EncoderVars<T>& vars,
                               const mlm::Batch& batch, const EncoderConfig& cfg, Mode mode,
                               std::mt19937_64& dropout_rng);

// transform -> GELU -> layer norm -> tied projection onto token embeddings.
template <typename T>
ad::Var<T> mlm_logits(ad::Graph<T>& g, const EncoderVars<T>& vars, const HiddenStack<T>& stack,
                      const EncoderConfig& cfg);

template <typename T>
struct SequenceHead {
  Tensor<T> pool_w, pool_b, out_w, out_b;

  static SequenceHead init(int64_t hidden, int64_t n_classes, uint64_t seed);
};

template <typename T>
struct SequenceHeadVars {
  ad::Var<T> pool_w, pool_b, out_w, out_b;

  static SequenceHeadVars bind(ad::Graph<T>& g, const SequenceHead<T>& h) {
    return {g.param(h.pool_w), g.param(h.pool_b), g.param(h.out_w), g.param(h.out_b)};
  }
};

template <typename S, typename F>
void for_each_sequence_head_field(S& s, F&& f) {
  f("head.pool_w", s.pool_w);
  f("head.pool_b", s.pool_b);
  f("head.out_w", s.out_w);
  f("head.out_b", s.out_b);
}

// tanh pooler over the <cls> position, then a linear classifier -> (b, n).
template <typename T>
ad::Var<T> sequence_logits(ad::Graph<T>& g, const SequenceHeadVars<T>& head,
                           const HiddenStack<T>& stack);

template <typename T>
struct TokenHead {
  Tensor<T> w, b;

  static TokenHead init(int64_t hidden, int64_t n_labels, uint64_t seed);
};

template <typename T>
struct TokenHeadVars {
  ad::Var<T> w, b;

  static TokenHeadVars bind(ad::Graph<T>& g, const TokenHead<T>& h) {
    return {g.param(h.w), g.param(h.b)};
  }
};

template <typename S, typename F>
void for_each_token_head_field(S& s, F&& f) {
  f("head.w", s.w);
  f("head.b", s.b);
}

// Linear over every final-layer state -> (b*t, n_labels).
template <typename T>
ad::Var<T> token_logits(ad::Graph<T>& g, const TokenHeadVars<T>& head,
                        const HiddenStack<T>& stack);

// --- parameter plumbing shared by the optimizer and checkpoints ---

template <typename T>
struct NamedTensorRefs {
  std::vector<std::string> names;
  std::vector<Tensor<T>*> tensors;

  void add(const std::string& name, Tensor<T>& t) {
    names.push_back(name);
    tensors.push_back(&t);
  }
  size_t size() const { return tensors.size(); }
};

template <typename T>
NamedTensorRefs<T> encoder_param_refs(ModelParams<T>& p) {
  NamedTensorRefs<T> refs;
  for_each_encoder_field(p, [&](const std::string& n, Tensor<T>& t) { refs.add(n, t); });
  return refs;
}

template <typename T>
std::vector<ad::Var<T>> encoder_var_list(EncoderVars<T>& v) {
  std::vector<ad::Var<T>> out;
  for_each_encoder_field(v, [&](const std::string&, ad::Var<T>& var) { out.push_back(var); });
  return out;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelParams<T> p;
  p.blocks.resize(static_cast<size_t>(cfg.blocks));
  const auto shapes = param_shapes(cfg);
  size_t si = 0;
  auto engine = rng::make_engine(seed);
  for_each_encoder_field(p, [&](const std::string& name, Tensor<T>& t) {
    t = Tensor<T>(shapes[si].second);
    ++si;
    const size_t dot = name.find_last_of('.');
    const std::string field = dot == std::string::npos ? name : name.substr(dot + 1);
    const bool is_gain = field.size() >= 2 && field.compare(field.size() - 2, 2, "_g") == 0;
    const bool is_bias =
        !is_gain && (field[0] == 'b' ||
                     (field.size() >= 2 && field.compare(field.size() - 2, 2, "_b") == 0));
    if (is_gain) {
      t.fill(T(1));
    } else if (is_bias) {
      t.fill(T(0));
    } else {
      for (int64_t i = 0; i < t.numel(); ++i) {
        t[i] = static_cast<T>(rng::trunc_normal(engine, 0.02));
      }
    }
  });
  return p;
}

}  // namespace tweetlm::model
