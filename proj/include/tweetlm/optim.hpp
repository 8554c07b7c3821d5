#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tweetlm/autodiff.hpp"
#include "tweetlm/mlm.hpp"
#include "tweetlm/model.hpp"
#include "tweetlm/tensor.hpp"
#include "tweetlm/tokenizer.hpp"

namespace tweetlm::optim {

struct SchedulerConfig {
  double peak_lr = 1e-4;
  int64_t warmup_steps = 10000;
  int64_t total_steps = 1000000;
  double min_lr = 0.0;

  void validate() const;
};

// Linear 0 -> peak over warmup, then linear peak -> min over the remainder.
// Steps outside [0, total] clamp to the endpoints.
double lr_at_step(int64_t step, const SchedulerConfig& cfg);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  int64_t t = 0;

  static AdamState like(const model::NamedTensorRefs<T>& params) {
    AdamState s;
    for (Tensor<T>* p : params.tensors) {
      s.m.emplace_back(p->shape());
      s.v.emplace_back(p->shape());
    }
    return s;
  }
};

// Bias-corrected Adam over a named parameter list. A non-finite gradient
// raises an error naming the offending parameter. lr = 0 leaves parameters
// untouched while the moments still advance.
template <typename T>
void adam_step(model::NamedTensorRefs<T>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state, const AdamConfig& cfg, double lr);

// Mean cross entropy over positions whose label is not kIgnoreLabel.
template <typename T>
ad::LossInfo<T> masked_cross_entropy(ad::Var<T> logits, Tensor<int32_t> labels) {
  return ad::cross_entropy(logits, std::move(labels), mlm::kIgnoreLabel, Tensor<T>(),
                           ad::Reduction::kMean);
}

// Summed MLM loss and gradients over a list of micro-batches. Gradients are
// position-weighted: dividing by `supervised` afterwards equals the gradient
// of the mean loss over one combined batch.
template <typename T>
struct BatchGradients {
  std::vector<Tensor<T>> grads;  // aligned with encoder_param_refs order
  double loss_sum = 0.0;
  int64_t supervised = 0;
};

template <typename T>
BatchGradients<T> mlm_gradients(const model::ModelParams<T>& params,
                                const model::EncoderConfig& cfg,
                                const std::vector<mlm::Batch>& micro_batches, model::Mode mode,
                                std::mt19937_64& dropout_rng);

// Fraction of supervised positions whose top logit equals the label.
template <typename T>
double masked_top1_accuracy(const model::ModelParams<T>& params,
                            const model::EncoderConfig& cfg,
                            const std::vector<mlm::Batch>& batches);

struct PretrainOptions {
  int64_t micro_batch = 8;
  int64_t accum = 1;
  int64_t total_steps = 100;
  int64_t checkpoint_interval = 1000;
  uint64_t seed = 0;
  std::string out_dir;
};

struct PretrainResult {
  std::vector<double> losses;  // mean masked cross entropy per optimizer step
  std::string checkpoint_dir;
};

// MLM pre-training loop with gradient accumulation: per optimizer step the
// gradient is the mean over all supervised positions of accum micro-batches.
// The corpus cycles epoch-style with a fresh seeded shuffle each pass.
// Writes loss_log.csv and periodic checkpoints under opts.out_dir.
template <typename T>
PretrainResult pretrain(const std::vector<std::string>& corpus, const bpe::Vocabulary& vocab,
                        const model::EncoderConfig& cfg, const mlm::MaskingConfig& mask_cfg,
                        const SchedulerConfig& sched, const AdamConfig& adam_cfg,
                        const PretrainOptions& opts, model::ModelParams<T>& params);

}  // namespace tweetlm::optim
