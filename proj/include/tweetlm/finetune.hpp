#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tweetlm/errors.hpp"
#include "tweetlm/model.hpp"
#include "tweetlm/rng.hpp"
#include "tweetlm/tokenizer.hpp"

namespace tweetlm::finetune {

struct LabeledSequence {
  std::string text;
  int32_t label = 0;
};

// One sentence of (word, label) pairs for token-level tasks.
struct LabeledTokens {
  std::vector<std::pair<std::string, int32_t>> tokens;
};

struct FinetuneConfig {
  double lr = 2e-5;       // 5e-5 for token tasks
  int64_t epochs = 3;     // 10 for token tasks
  int64_t patience = 5;   // epochs without validation improvement
  double train_frac = 0.70;
  double val_frac = 0.10;
  double test_frac = 0.20;
  uint64_t seed = 0;      // data order + split
  uint64_t head_seed = 0; // head initialization (varied across repeated runs)
  int64_t batch_size = 8;
  bool use_class_weights = true;

  void validate() const;
};

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  // classes absent from gold and never predicted; their F1 is pinned to 0
  std::vector<int64_t> absent_classes;
};

template <typename Item>
struct Split {
  std::vector<Item> train, val, test;
};

// Seeded shuffle then contiguous cut; val/test sizes floor, remainder to
// train. Requires at least 10 items.
template <typename Item>
Split<Item> split_dataset(const std::vector<Item>& data, double train_frac, double val_frac,
                          double test_frac, uint64_t seed) {
  if (data.empty()) throw ValidationError("split_dataset: empty data");
  if (data.size() < 10) throw ValidationError("split_dataset: need at least 10 items");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ValidationError("split_dataset: ratios must sum to 1");
  }
  std::vector<int64_t> idx(data.size());
  for (size_t i = 0; i < data.size(); ++i) idx[i] = static_cast<int64_t>(i);
  auto engine = rng::derive_engine(seed, 0x5EED5911ULL);
  rng::shuffle_indices(idx, engine);

  const auto n = static_cast<int64_t>(data.size());
  const auto n_val = static_cast<int64_t>(static_cast<double>(n) * val_frac);
  const auto n_test = static_cast<int64_t>(static_cast<double>(n) * test_frac);
  const int64_t n_train = n - n_val - n_test;

  Split<Item> split;
  for (int64_t i = 0; i < n; ++i) {
    const Item& item = data[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    if (i < n_train) {
      split.train.push_back(item);
    } else if (i < n_train + n_val) {
      split.val.push_back(item);
    } else {
      split.test.push_back(item);
    }
  }
  return split;
}

// w_c = N / (K * n_c); every class must be present.
std::vector<double> compute_class_weights(const std::vector<int32_t>& labels, int64_t n_classes);

// accuracy + macro-F1 over predictions vs gold.
Metrics evaluate(const std::vector<int32_t>& predictions, const std::vector<int32_t>& gold,
                 int64_t n_classes);

template <typename T>
struct SequenceOutcome {
  model::ModelParams<T> backbone;
  model::SequenceHead<T> head;
  Metrics test;
  std::vector<double> val_history;  // validation macro-F1 per epoch
  double best_val = 0.0;
};

// Fine-tunes head + full backbone with class-weighted cross entropy and a
// linear lr decay to zero over all steps; early stops on validation macro-F1
// and returns the best-validation model evaluated on test.
template <typename T>
SequenceOutcome<T> finetune_sequence(const std::vector<LabeledSequence>& data,
                                     const bpe::Vocabulary& vocab,
                                     const model::ModelParams<T>& base,
                                     const model::EncoderConfig& enc_cfg, int64_t n_classes,
                                     const FinetuneConfig& cfg);

template <typename T>
struct TokenOutcome {
  model::ModelParams<T> backbone;
  model::TokenHead<T> head;
  Metrics test;
  std::vector<double> val_history;
  double best_val = 0.0;
};

// Token-level variant; labels sit on the first subword of each word, all
// other positions (markers, later subwords, specials, padding) are ignored.
template <typename T>
TokenOutcome<T> finetune_token(const std::vector<LabeledTokens>& data,
                               const bpe::Vocabulary& vocab, const model::ModelParams<T>& base,
                               const model::EncoderConfig& enc_cfg, int64_t n_labels,
                               const FinetuneConfig& cfg);

struct RunSummary {
  std::vector<Metrics> runs;
  double mean_accuracy = 0.0, std_accuracy = 0.0;
  double mean_macro_f1 = 0.0, std_macro_f1 = 0.0;
};

RunSummary summarize(const std::vector<Metrics>& runs);

// Repeats fine-tuning n_runs times, varying only the head initialization
// seed, and reports mean and deviation.
template <typename T>
RunSummary run_repeated_sequence(const std::vector<LabeledSequence>& data,
                                 const bpe::Vocabulary& vocab, const model::ModelParams<T>& base,
                                 const model::EncoderConfig& enc_cfg, int64_t n_classes,
                                 const FinetuneConfig& cfg, int64_t n_runs);

template <typename T>
RunSummary run_repeated_token(const std::vector<LabeledTokens>& data,
                              const bpe::Vocabulary& vocab, const model::ModelParams<T>& base,
                              const model::EncoderConfig& enc_cfg, int64_t n_labels,
                              const FinetuneConfig& cfg, int64_t n_runs);

// CSV with header text,label; labels may be integers or strings (strings are
// mapped to ids in lexicographic order).
struct SequenceDataset {
  std::vector<LabeledSequence> items;
  std::vector<std::string> label_names;
};
SequenceDataset load_sequence_csv(const std::string& path);

// CoNLL-style: "token<TAB>label" lines, blank line between sentences.
struct TokenDataset {
  std::vector<LabeledTokens> items;
  std::vector<std::string> label_names;
};
TokenDataset load_token_conll(const std::string& path);

}  // namespace tweetlm::finetune
