#include "tweetlm/model.hpp"

#include <cmath>

#include "tweetlm/tokenizer.hpp"

namespace tweetlm::model {

void EncoderConfig::validate() const {
  if (hidden < 1) throw ValidationError("encoder.hidden must be positive");
  if (heads < 1) throw ValidationError("encoder.heads must be positive");
  if (hidden % heads != 0) throw ValidationError("encoder.hidden must be divisible by heads");
  if (feedforward < 1) throw ValidationError("encoder.feedforward must be positive");
  if (blocks < 0) throw ValidationError("encoder.blocks must be non-negative");
  if (max_positions < 2) throw ValidationError("encoder.max_positions must be at least 2");
  if (vocab_size <= bpe::kNumSpecials) {
    throw ValidationError("encoder.vocab_size must exceed the special-token count");
  }
  if (segments < 1) throw ValidationError("encoder.segments must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("encoder.dropout must be in [0,1)");
  if (layer_norm_eps <= 0.0) throw ValidationError("encoder.layer_norm_eps must be positive");
}

std::vector<std::pair<std::string, std::vector<int64_t>>> param_shapes(const EncoderConfig& cfg) {
  cfg.validate();
  const int64_t h = cfg.hidden, ff = cfg.feedforward;
  std::vector<std::pair<std::string, std::vector<int64_t>>> shapes;
  shapes.emplace_back("token_emb", std::vector<int64_t>{cfg.vocab_size, h});
  shapes.emplace_back("pos_emb", std::vector<int64_t>{cfg.max_positions, h});
  shapes.emplace_back("seg_emb", std::vector<int64_t>{cfg.segments, h});
  shapes.emplace_back("emb_ln_g", std::vector<int64_t>{h});
  shapes.emplace_back("emb_ln_b", std::vector<int64_t>{h});
  for (int64_t i = 0; i < cfg.blocks; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      shapes.emplace_back(p + w, std::vector<int64_t>{h, h});
      shapes.emplace_back(p + "b" + std::string(1, w[1]), std::vector<int64_t>{h});
    }
    shapes.emplace_back(p + "ln1_g", std::vector<int64_t>{h});
    shapes.emplace_back(p + "ln1_b", std::vector<int64_t>{h});
    shapes.emplace_back(p + "w1", std::vector<int64_t>{h, ff});
    shapes.emplace_back(p + "b1", std::vector<int64_t>{ff});
    shapes.emplace_back(p + "w2", std::vector<int64_t>{ff, h});
    shapes.emplace_back(p + "b2", std::vector<int64_t>{h});
    shapes.emplace_back(p + "ln2_g", std::vector<int64_t>{h});
    shapes.emplace_back(p + "ln2_b", std::vector<int64_t>{h});
  }
  shapes.emplace_back("mlm_w", std::vector<int64_t>{h, h});
  shapes.emplace_back("mlm_b", std::vector<int64_t>{h});
  shapes.emplace_back("mlm_ln_g", std::vector<int64_t>{h});
  shapes.emplace_back("mlm_ln_b", std::vector<int64_t>{h});
  shapes.emplace_back("mlm_out_b", std::vector<int64_t>{cfg.vocab_size});
  return shapes;
}

int64_t param_count(const EncoderConfig& cfg) {
  int64_t total = 0;
  for (const auto& [name, shape] : param_shapes(cfg)) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    total += n;
  }
  return total;
}

namespace {

// param_shapes and the field visitor must list tensors in the same order; a
// unit test compares the two listings.

Tensor<uint8_t> key_mask_of(const mlm::Batch& batch) {
  Tensor<uint8_t> mask({batch.b, batch.t});
  for (int64_t i = 0; i < batch.b * batch.t; ++i) {
    mask[i] = batch.attention[static_cast<size_t>(i)];
  }
  return mask;
}

}  // namespace

template <typename T>
HiddenStack<T> encoder_forward(ad::Graph<T>& g, const EncoderVars<T>& vars,
                               const mlm::Batch& batch, const EncoderConfig& cfg, Mode mode,
                               std::mt19937_64& dropout_rng) {
  cfg.validate();
  const int64_t b = batch.b, t = batch.t;
  if (b < 1 || t < 1) throw ValidationError("encoder_forward: empty batch");
  if (t > cfg.max_positions) {
    throw ValidationError("sequence length " + std::to_string(t) + " exceeds max_positions " +
                          std::to_string(cfg.max_positions));
  }
  if (static_cast<int64_t>(batch.input_ids.size()) != b * t ||
      static_cast<int64_t>(batch.attention.size()) != b * t ||
      static_cast<int64_t>(batch.segments.size()) != b * t) {
    throw ValidationError("encoder_forward: batch field sizes disagree with (b, t)");
  }
  for (const int32_t id : batch.input_ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw ValidationError("token id " + std::to_string(id) + " outside vocab of " +
                            std::to_string(cfg.vocab_size));
    }
  }
  for (const int32_t s : batch.segments) {
    if (s < 0 || s >= cfg.segments) {
      throw ValidationError("segment id " + std::to_string(s) + " outside configured range");
    }
  }

  const bool train = mode == Mode::kTrain;
  const T drop = static_cast<T>(cfg.dropout);
  const T eps = static_cast<T>(cfg.layer_norm_eps);
  const int64_t dh = cfg.hidden / cfg.heads;
  const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));

  Tensor<int32_t> ids({b * t});
  Tensor<int32_t> segs({b * t});
  for (int64_t i = 0; i < b * t; ++i) {
    ids[i] = batch.input_ids[static_cast<size_t>(i)];
    segs[i] = batch.segments[static_cast<size_t>(i)];
  }
  Tensor<uint8_t> key_mask = key_mask_of(batch);

  HiddenStack<T> stack;
  stack.b = b;
  stack.t = t;

  ad::Var<T> x = ad::embed_sum(vars.token_emb, vars.pos_emb, vars.seg_emb, std::move(ids),
                               std::move(segs), t);
  x = ad::layer_norm(x, vars.emb_ln_g, vars.emb_ln_b, eps);
  if (train) x = ad::dropout(x, drop, dropout_rng);
  stack.layers.push_back(x);

  for (const BlockVars<T>& blk : vars.blocks) {
    ad::Var<T> q = ad::add_rowbias(ad::matmul(x, blk.wq), blk.bq);
    ad::Var<T> k = ad::add_rowbias(ad::matmul(x, blk.wk), blk.bk);
    ad::Var<T> v = ad::add_rowbias(ad::matmul(x, blk.wv), blk.bv);

    ad::Var<T> qh = ad::split_heads(q, b, t, cfg.heads);
    ad::Var<T> kh = ad::split_heads(k, b, t, cfg.heads);
    ad::Var<T> vh = ad::split_heads(v, b, t, cfg.heads);

    ad::Var<T> scores = ad::scale(ad::bmm(qh, kh, false, true), inv_sqrt_dh);
    ad::Var<T> probs = ad::attn_softmax(scores, key_mask, b, cfg.heads);
    if (train) probs = ad::dropout(probs, drop, dropout_rng);

    ad::Var<T> ctx = ad::merge_heads(ad::bmm(probs, vh, false, false), b, t, cfg.heads);
    ad::Var<T> attn = ad::add_rowbias(ad::matmul(ctx, blk.wo), blk.bo);
    if (train) attn = ad::dropout(attn, drop, dropout_rng);
    x = ad::layer_norm(ad::add(x, attn), blk.ln1_g, blk.ln1_b, eps);

    ad::Var<T> ffn = ad::add_rowbias(ad::matmul(x, blk.w1), blk.b1);
    ffn = ad::gelu(ffn);
    ffn = ad::add_rowbias(ad::matmul(ffn, blk.w2), blk.b2);
    if (train) ffn = ad::dropout(ffn, drop, dropout_rng);
    x = ad::layer_norm(ad::add(x, ffn), blk.ln2_g, blk.ln2_b, eps);

    stack.layers.push_back(x);
  }
  return stack;
}

template <typename T>
ad::Var<T> mlm_logits(ad::Graph<T>& g, const EncoderVars<T>& vars, const HiddenStack<T>& stack,
                      const EncoderConfig& cfg) {
  (void)g;
  ad::Var<T> h = ad::add_rowbias(ad::matmul(stack.last(), vars.mlm_w), vars.mlm_b);
  h = ad::gelu(h);
  h = ad::layer_norm(h, vars.mlm_ln_g, vars.mlm_ln_b, static_cast<T>(cfg.layer_norm_eps));
  // tied projection: logits = h * token_emb^T + bias
  return ad::add_rowbias(ad::matmul(h, vars.token_emb, false, true), vars.mlm_out_b);
}

template <typename T>
ad::Var<T> sequence_logits(ad::Graph<T>& g, const SequenceHeadVars<T>& head,
                           const HiddenStack<T>& stack) {
  (void)g;
  Tensor<int32_t> cls_rows({stack.b});
  for (int64_t bi = 0; bi < stack.b; ++bi) cls_rows[bi] = static_cast<int32_t>(bi * stack.t);
  ad::Var<T> cls = ad::gather_rows(stack.last(), std::move(cls_rows));
  ad::Var<T> pooled = ad::tanh_act(ad::add_rowbias(ad::matmul(cls, head.pool_w), head.pool_b));
  return ad::add_rowbias(ad::matmul(pooled, head.out_w), head.out_b);
}

template <typename T>
ad::Var<T> token_logits(ad::Graph<T>& g, const TokenHeadVars<T>& head,
                        const HiddenStack<T>& stack) {
  (void)g;
  return ad::add_rowbias(ad::matmul(stack.last(), head.w), head.b);
}

template <typename T>
SequenceHead<T> SequenceHead<T>::init(int64_t hidden, int64_t n_classes, uint64_t seed) {
  SequenceHead<T> h;
  auto engine = rng::make_engine(seed);
  h.pool_w = Tensor<T>({hidden, hidden});
  for (int64_t i = 0; i < h.pool_w.numel(); ++i) {
    h.pool_w[i] = static_cast<T>(rng::trunc_normal(engine, 0.02));
  }
  h.pool_b = Tensor<T>({hidden});
  h.out_w = Tensor<T>({hidden, n_classes});
  for (int64_t i = 0; i < h.out_w.numel(); ++i) {
    h.out_w[i] = static_cast<T>(rng::trunc_normal(engine, 0.02));
  }
  h.out_b = Tensor<T>({n_classes});
  return h;
}

template <typename T>
TokenHead<T> TokenHead<T>::init(int64_t hidden, int64_t n_labels, uint64_t seed) {
  TokenHead<T> h;
  auto engine = rng::make_engine(seed);
  h.w = Tensor<T>({hidden, n_labels});
  for (int64_t i = 0; i < h.w.numel(); ++i) {
    h.w[i] = static_cast<T>(rng::trunc_normal(engine, 0.02));
  }
  h.b = Tensor<T>({n_labels});
  return h;
}

#define TWEETLM_INSTANTIATE_MODEL(T)                                                       \
  template HiddenStack<T> encoder_forward<T>(ad::Graph<T>&, const EncoderVars<T>&,         \
                                             const mlm::Batch&, const EncoderConfig&,     \
                                             Mode, std::mt19937_64&);                     \
  template ad::Var<T> mlm_logits<T>(ad::Graph<T>&, const EncoderVars<T>&,                 \
                                    const HiddenStack<T>&, const EncoderConfig&);         \
  template ad::Var<T> sequence_logits<T>(ad::Graph<T>&, const SequenceHeadVars<T>&,       \
                                         const HiddenStack<T>&);                          \
  template ad::Var<T> token_logits<T>(ad::Graph<T>&, const TokenHeadVars<T>&,             \
                                      const HiddenStack<T>&);                             \
  template struct SequenceHead<T>;                                                        \
  template struct TokenHead<T>;

TWEETLM_INSTANTIATE_MODEL(float)
TWEETLM_INSTANTIATE_MODEL(double)
#undef TWEETLM_INSTANTIATE_MODEL

}  // namespace tweetlm::model
