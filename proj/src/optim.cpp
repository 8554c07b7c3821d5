#include "tweetlm/optim.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tweetlm/errors.hpp"
#include "tweetlm/io.hpp"
#include "tweetlm/kernels.hpp"
#include "tweetlm/rng.hpp"

namespace tweetlm::optim {

void SchedulerConfig::validate() const {
  if (warmup_steps < 0 || warmup_steps > total_steps) {
    throw ValidationError("scheduler: need 0 <= warmup_steps <= total_steps");
  }
  if (min_lr < 0.0 || min_lr > peak_lr) {
    throw ValidationError("scheduler: need 0 <= min_lr <= peak_lr");
  }
}

double lr_at_step(int64_t step, const SchedulerConfig& cfg) {
  cfg.validate();
  if (step < 0) step = 0;
  if (step > cfg.total_steps) step = cfg.total_steps;
  if (step <= cfg.warmup_steps) {
    if (cfg.warmup_steps == 0) return cfg.peak_lr;
    return cfg.peak_lr * (static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
  }
  const double frac = static_cast<double>(cfg.total_steps - step) /
                      static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.min_lr + (cfg.peak_lr - cfg.min_lr) * frac;
}

void AdamConfig::validate() const {
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ValidationError("adam: betas must be in [0,1)");
  }
  if (epsilon <= 0.0) throw ValidationError("adam: epsilon must be positive");
  if (weight_decay < 0.0) throw ValidationError("adam: weight_decay must be non-negative");
}

template <typename T>
void adam_step(model::NamedTensorRefs<T>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state, const AdamConfig& cfg, double lr) {
  cfg.validate();
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ValidationError("adam_step: parameter/gradient/state counts disagree");
  }
  if (lr < 0.0) throw ValidationError("adam_step: negative learning rate");
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor<T>& g = grads[i];
    if (!g.same_shape(*params.tensors[i])) {
      throw ValidationError("adam_step: gradient shape mismatch for '" + params.names[i] + "'");
    }
    for (int64_t j = 0; j < g.numel(); ++j) {
      if (!std::isfinite(static_cast<double>(g[j]))) {
        throw std::runtime_error("non-finite gradient in parameter '" + params.names[i] + "'");
      }
    }
  }
  ++state.t;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params.tensors[i];
    kernels::adam_update(p.data(), grads[i].data(), state.m[i].data(), state.v[i].data(),
                         p.numel(), static_cast<T>(lr), static_cast<T>(cfg.beta1),
                         static_cast<T>(cfg.beta2), static_cast<T>(cfg.epsilon), state.t,
                         static_cast<T>(cfg.weight_decay));
  }
}

template <typename T>
BatchGradients<T> mlm_gradients(const model::ModelParams<T>& params,
                                const model::EncoderConfig& cfg,
                                const std::vector<mlm::Batch>& micro_batches, model::Mode mode,
                                std::mt19937_64& dropout_rng) {
  BatchGradients<T> out;
  auto refs = model::encoder_param_refs(const_cast<model::ModelParams<T>&>(params));
  for (Tensor<T>* t : refs.tensors) out.grads.emplace_back(t->shape());

  for (const mlm::Batch& batch : micro_batches) {
    bool any_supervised = false;
    for (const int32_t l : batch.labels) any_supervised = any_supervised || l != mlm::kIgnoreLabel;
    if (!any_supervised) continue;

    ad::Graph<T> g;
    auto vars = model::EncoderVars<T>::bind(g, params);
    auto stack = model::encoder_forward(g, vars, batch, cfg, mode, dropout_rng);
    auto logits = model::mlm_logits(g, vars, stack, cfg);
    Tensor<int32_t> labels({batch.b * batch.t});
    for (int64_t i = 0; i < batch.b * batch.t; ++i) labels[i] = batch.labels[static_cast<size_t>(i)];
    auto loss = ad::cross_entropy(logits, std::move(labels), mlm::kIgnoreLabel, Tensor<T>(),
                                  ad::Reduction::kSum);
    g.backward(loss.loss);

    out.loss_sum += static_cast<double>(g.val(loss.loss.id)[0]);
    out.supervised += loss.supervised;
    auto var_list = model::encoder_var_list(vars);
    for (size_t i = 0; i < var_list.size(); ++i) {
      if (!g.grad_touched(var_list[i].id)) continue;
      const Tensor<T>& grad = g.grad_of(var_list[i].id);
      Tensor<T>& acc = out.grads[i];
      for (int64_t j = 0; j < grad.numel(); ++j) acc[j] += grad[j];
    }
  }
  return out;
}

template <typename T>
double masked_top1_accuracy(const model::ModelParams<T>& params, const model::EncoderConfig& cfg,
                            const std::vector<mlm::Batch>& batches) {
  int64_t hit = 0, total = 0;
  auto rng = rng::make_engine(0);
  for (const mlm::Batch& batch : batches) {
    ad::Graph<T> g;
    auto vars = model::EncoderVars<T>::bind(g, params);
    auto stack = model::encoder_forward(g, vars, batch, cfg, model::Mode::kEval, rng);
    auto logits = model::mlm_logits(g, vars, stack, cfg);
    const Tensor<T>& lv = g.val(logits.id);
    const int64_t v = lv.dim(1);
    for (int64_t r = 0; r < batch.b * batch.t; ++r) {
      const int32_t label = batch.labels[static_cast<size_t>(r)];
      if (label == mlm::kIgnoreLabel) continue;
      const T* row = lv.data() + r * v;
      int64_t best = 0;
      for (int64_t j = 1; j < v; ++j) {
        if (row[j] > row[best]) best = j;
      }
      hit += best == label ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

namespace {

// Cycles corpus sequences in epoch order, reshuffling each pass.
class EpochSampler {
 public:
  EpochSampler(size_t n, uint64_t seed) : n_(n), seed_(seed) { refill(); }

  size_t next() {
    if (cursor_ == order_.size()) refill();
    return static_cast<size_t>(order_[cursor_++]);
  }

 private:
  void refill() {
    order_.resize(n_);
    for (size_t i = 0; i < n_; ++i) order_[i] = static_cast<int64_t>(i);
    auto engine = rng::derive_engine(seed_, 0xE90C0000ULL + epoch_);
    rng::shuffle_indices(order_, engine);
    cursor_ = 0;
    ++epoch_;
  }

  size_t n_;
  uint64_t seed_;
  uint64_t epoch_ = 0;
  std::vector<int64_t> order_;
  size_t cursor_ = 0;
};

}  // namespace

template <typename T>
PretrainResult pretrain(const std::vector<std::string>& corpus, const bpe::Vocabulary& vocab,
                        const model::EncoderConfig& cfg, const mlm::MaskingConfig& mask_cfg,
                        const SchedulerConfig& sched, const AdamConfig& adam_cfg,
                        const PretrainOptions& opts, model::ModelParams<T>& params) {
  cfg.validate();
  mask_cfg.validate();
  sched.validate();
  adam_cfg.validate();
  if (opts.micro_batch < 1) throw ValidationError("pretrain: micro_batch must be positive");
  if (opts.accum < 1) throw ValidationError("pretrain: accum must be at least 1");
  if (opts.total_steps < 0) throw ValidationError("pretrain: total_steps must be non-negative");
  if (corpus.empty()) throw ValidationError("pretrain: empty corpus");

  // encode once; sequences over max_len are dropped with a note
  std::vector<bpe::TokenSequence> seqs;
  int64_t dropped = 0;
  for (const std::string& text : corpus) {
    bpe::TokenSequence seq = vocab.encode(text, /*add_cls_sep=*/true);
    if (static_cast<int64_t>(seq.ids.size()) > mask_cfg.max_len) {
      ++dropped;
      continue;
    }
    seqs.push_back(std::move(seq));
  }
  if (seqs.empty()) throw ValidationError("pretrain: every sequence exceeds max_len");
  if (dropped > 0) {
    std::cerr << "pretrain: dropped " << dropped << " sequences over max_len "
              << mask_cfg.max_len << "\n";
  }

  std::filesystem::create_directories(opts.out_dir);
  std::ofstream log(opts.out_dir + "/loss_log.csv");
  if (!log) throw std::runtime_error("cannot write " + opts.out_dir + "/loss_log.csv");
  log << "step,lr,loss\n";

  auto refs = model::encoder_param_refs(params);
  auto state = AdamState<T>::like(refs);
  EpochSampler sampler(seqs.size(), opts.seed);

  PretrainResult result;
  result.checkpoint_dir = opts.out_dir + "/checkpoint";
  // the vocabulary rides along so a checkpoint directory is self-contained
  auto save = [&] {
    io::save_checkpoint(result.checkpoint_dir, cfg, refs);
    vocab.save(result.checkpoint_dir);
  };

  uint64_t micro_counter = 0;
  for (int64_t step = 1; step <= opts.total_steps; ++step) {
    std::vector<mlm::Batch> micros;
    micros.reserve(static_cast<size_t>(opts.accum));
    for (int64_t a = 0; a < opts.accum; ++a) {
      std::vector<bpe::TokenSequence> chunk;
      chunk.reserve(static_cast<size_t>(opts.micro_batch));
      for (int64_t i = 0; i < opts.micro_batch; ++i) chunk.push_back(seqs[sampler.next()]);
      // short tweets can draw zero mask candidates; redraw deterministically
      const uint64_t mask_seed = rng::splitmix64(mask_cfg.seed ^ (0x4D61736BULL + micro_counter));
      ++micro_counter;
      mlm::Batch batch;
      for (uint64_t retry = 0; retry < 16; ++retry) {
        batch = mlm::pad_and_batch(chunk, mask_cfg, rng::splitmix64(mask_seed + retry),
                                   cfg.vocab_size);
        bool any = false;
        for (const int32_t l : batch.labels) any = any || l != mlm::kIgnoreLabel;
        if (any) break;
      }
      micros.push_back(std::move(batch));
    }

    auto dropout_rng = rng::derive_engine(opts.seed, 0xD0D0ULL + static_cast<uint64_t>(step));
    BatchGradients<T> bg =
        mlm_gradients(params, cfg, micros, model::Mode::kTrain, dropout_rng);
    if (bg.supervised == 0) {
      throw std::runtime_error("pretrain: step " + std::to_string(step) +
                               " produced no supervised positions");
    }
    const T inv = T(1) / static_cast<T>(bg.supervised);
    for (Tensor<T>& grad : bg.grads) {
      for (int64_t j = 0; j < grad.numel(); ++j) grad[j] *= inv;
    }

    const double lr = lr_at_step(step - 1, sched);
    adam_step(refs, bg.grads, state, adam_cfg, lr);

    const double loss = bg.loss_sum / static_cast<double>(bg.supervised);
    result.losses.push_back(loss);
    log << step << ',' << lr << ',' << loss << '\n';

    if (opts.checkpoint_interval > 0 && step % opts.checkpoint_interval == 0) save();
  }
  save();
  log.flush();
  return result;
}

#define TWEETLM_INSTANTIATE_OPTIM(T)                                                          \
  template void adam_step<T>(model::NamedTensorRefs<T>&, const std::vector<Tensor<T>>&,       \
                             AdamState<T>&, const AdamConfig&, double);                       \
  template BatchGradients<T> mlm_gradients<T>(const model::ModelParams<T>&,                   \
                                              const model::EncoderConfig&,                    \
                                              const std::vector<mlm::Batch>&, model::Mode,    \
                                              std::mt19937_64&);                              \
  template double masked_top1_accuracy<T>(const model::ModelParams<T>&,                       \
                                          const model::EncoderConfig&,                        \
                                          const std::vector<mlm::Batch>&);                    \
  template PretrainResult pretrain<T>(const std::vector<std::string>&, const bpe::Vocabulary&, \
                                      const model::EncoderConfig&, const mlm::MaskingConfig&, \
                                      const SchedulerConfig&, const AdamConfig&,              \
                                      const PretrainOptions&, model::ModelParams<T>&);

TWEETLM_INSTANTIATE_OPTIM(float)
TWEETLM_INSTANTIATE_OPTIM(double)
#undef TWEETLM_INSTANTIATE_OPTIM

}  // namespace tweetlm::optim
