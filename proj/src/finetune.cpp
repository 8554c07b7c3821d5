#include "tweetlm/finetune.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tweetlm/mlm.hpp"
#include "tweetlm/optim.hpp"

namespace tweetlm::finetune {

void FinetuneConfig::validate() const {
  if (lr < 0.0) throw ValidationError("finetune.lr must be non-negative");
  if (epochs < 0) throw ValidationError("finetune.epochs must be non-negative");
  if (patience < 1) throw ValidationError("finetune.patience must be positive");
  if (batch_size < 1) throw ValidationError("finetune.batch_size must be positive");
  if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ValidationError("finetune split ratios must sum to 1");
  }
}

std::vector<double> compute_class_weights(const std::vector<int32_t>& labels,
                                          int64_t n_classes) {
  if (n_classes < 1) throw ValidationError("compute_class_weights: n_classes must be positive");
  std::vector<int64_t> counts(static_cast<size_t>(n_classes), 0);
  for (const int32_t l : labels) {
    if (l < 0 || l >= n_classes) {
      throw ValidationError("label " + std::to_string(l) + " outside configured classes");
    }
    ++counts[static_cast<size_t>(l)];
  }
  std::vector<double> weights(static_cast<size_t>(n_classes));
  const auto n = static_cast<double>(labels.size());
  for (int64_t c = 0; c < n_classes; ++c) {
    if (counts[static_cast<size_t>(c)] == 0) {
      throw ValidationError("class " + std::to_string(c) + " has no examples");
    }
    weights[static_cast<size_t>(c)] =
        n / (static_cast<double>(n_classes) * static_cast<double>(counts[static_cast<size_t>(c)]));
  }
  return weights;
}

Metrics evaluate(const std::vector<int32_t>& predictions, const std::vector<int32_t>& gold,
                 int64_t n_classes) {
  if (predictions.size() != gold.size()) {
    throw ValidationError("evaluate: prediction/gold length mismatch");
  }
  if (gold.empty()) throw ValidationError("evaluate: empty inputs");

  int64_t correct = 0;
  std::vector<int64_t> tp(static_cast<size_t>(n_classes), 0);
  std::vector<int64_t> fp(static_cast<size_t>(n_classes), 0);
  std::vector<int64_t> fn(static_cast<size_t>(n_classes), 0);
  for (size_t i = 0; i < gold.size(); ++i) {
    const int32_t p = predictions[i], g = gold[i];
    if (p < 0 || p >= n_classes || g < 0 || g >= n_classes) {
      throw ValidationError("evaluate: label outside [0, n_classes)");
    }
    if (p == g) {
      ++correct;
      ++tp[static_cast<size_t>(p)];
    } else {
      ++fp[static_cast<size_t>(p)];
      ++fn[static_cast<size_t>(g)];
    }
  }

  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
  m.per_class_f1.resize(static_cast<size_t>(n_classes), 0.0);
  double f1_sum = 0.0;
  for (int64_t c = 0; c < n_classes; ++c) {
    const auto ci = static_cast<size_t>(c);
    const double denom = static_cast<double>(2 * tp[ci] + fp[ci] + fn[ci]);
    const double f1 = denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp[ci]) / denom;
    if (tp[ci] + fp[ci] + fn[ci] == 0) m.absent_classes.push_back(c);
    m.per_class_f1[ci] = f1;
    f1_sum += f1;
  }
  m.macro_f1 = f1_sum / static_cast<double>(n_classes);
  return m;
}

RunSummary summarize(const std::vector<Metrics>& runs) {
  RunSummary s;
  s.runs = runs;
  if (runs.empty()) return s;
  const auto n = static_cast<double>(runs.size());
  for (const Metrics& m : runs) {
    s.mean_accuracy += m.accuracy;
    s.mean_macro_f1 += m.macro_f1;
  }
  s.mean_accuracy /= n;
  s.mean_macro_f1 /= n;
  if (runs.size() > 1) {
    double va = 0.0, vf = 0.0;
    for (const Metrics& m : runs) {
      va += (m.accuracy - s.mean_accuracy) * (m.accuracy - s.mean_accuracy);
      vf += (m.macro_f1 - s.mean_macro_f1) * (m.macro_f1 - s.mean_macro_f1);
    }
    s.std_accuracy = std::sqrt(va / (n - 1.0));
    s.std_macro_f1 = std::sqrt(vf / (n - 1.0));
  }
  return s;
}

namespace {

struct EncodedExample {
  std::vector<int32_t> ids;
  std::vector<int32_t> pos_labels;  // per-position labels; kIgnoreLabel when unsupervised
  int32_t seq_label = 0;            // sequence-task label
};

// Pads a chunk of encoded examples into a model batch (no masking).
mlm::Batch make_batch(const std::vector<const EncodedExample*>& chunk) {
  int64_t t = 2;
  for (const EncodedExample* e : chunk) {
    t = std::max<int64_t>(t, static_cast<int64_t>(e->ids.size()));
  }
  mlm::Batch batch;
  batch.b = static_cast<int64_t>(chunk.size());
  batch.t = t;
  batch.input_ids.assign(static_cast<size_t>(batch.b * t), bpe::kPad);
  batch.labels.assign(static_cast<size_t>(batch.b * t), mlm::kIgnoreLabel);
  batch.attention.assign(static_cast<size_t>(batch.b * t), 0);
  batch.segments.assign(static_cast<size_t>(batch.b * t), 0);
  for (int64_t bi = 0; bi < batch.b; ++bi) {
    const EncodedExample& e = *chunk[static_cast<size_t>(bi)];
    for (size_t i = 0; i < e.ids.size(); ++i) {
      batch.input_ids[static_cast<size_t>(bi * t) + i] = e.ids[i];
      batch.attention[static_cast<size_t>(bi * t) + i] = 1;
      if (!e.pos_labels.empty()) {
        batch.labels[static_cast<size_t>(bi * t) + i] = e.pos_labels[i];
      }
    }
  }
  return batch;
}

EncodedExample encode_sequence_example(const LabeledSequence& item, const bpe::Vocabulary& vocab,
                                       const model::EncoderConfig& enc_cfg) {
  EncodedExample e;
  const bpe::TokenSequence seq = vocab.encode(item.text, /*add_cls_sep=*/true);
  if (static_cast<int64_t>(seq.ids.size()) > enc_cfg.max_positions) {
    throw ValidationError("fine-tuning text of " + std::to_string(seq.ids.size()) +
                          " tokens exceeds max_positions");
  }
  e.ids = seq.ids;
  e.seq_label = item.label;
  return e;
}

EncodedExample encode_token_example(const LabeledTokens& item, const bpe::Vocabulary& vocab,
                                    const model::EncoderConfig& enc_cfg) {
  EncodedExample e;
  e.ids.push_back(bpe::kCls);
  e.pos_labels.push_back(mlm::kIgnoreLabel);
  for (const auto& [word, label] : item.tokens) {
    const bpe::TokenSequence seq = vocab.encode(word, /*add_cls_sep=*/false);
    bool labeled = false;
    for (const int32_t id : seq.ids) {
      e.ids.push_back(id);
      // label sits on the first non-marker subword of the word
      if (!labeled && id != bpe::kMarker) {
        e.pos_labels.push_back(label);
        labeled = true;
      } else {
        e.pos_labels.push_back(mlm::kIgnoreLabel);
      }
    }
  }
  e.ids.push_back(bpe::kSep);
  e.pos_labels.push_back(mlm::kIgnoreLabel);
  if (static_cast<int64_t>(e.ids.size()) > enc_cfg.max_positions) {
    throw ValidationError("token sentence of " + std::to_string(e.ids.size()) +
                          " subwords exceeds max_positions");
  }
  return e;
}

template <typename T, typename HeadT, typename HeadVarsT, typename LogitsFn, typename HeadRefsFn>
struct Tuner {
  const model::EncoderConfig& enc_cfg;
  const FinetuneConfig& cfg;
  int64_t n_classes;
  bool sequence_level;

  model::ModelParams<T> backbone;
  HeadT head;
  LogitsFn logits_fn;      // (graph, encoder vars, head vars, stack) -> logits Var
  HeadRefsFn head_refs_fn; // HeadT& -> NamedTensorRefs<T>

  std::vector<int32_t> predict(const std::vector<EncodedExample>& data) {
    std::vector<int32_t> preds;
    auto rng = rng::make_engine(0);
    for (size_t at = 0; at < data.size(); at += static_cast<size_t>(cfg.batch_size)) {
      std::vector<const EncodedExample*> chunk;
      for (size_t i = at; i < std::min(data.size(), at + static_cast<size_t>(cfg.batch_size));
           ++i) {
        chunk.push_back(&data[i]);
      }
      const mlm::Batch batch = make_batch(chunk);
      ad::Graph<T> g;
      auto vars = model::EncoderVars<T>::bind(g, backbone);
      auto hvars = HeadVarsT::bind(g, head);
      auto stack = model::encoder_forward(g, vars, batch, enc_cfg, model::Mode::kEval, rng);
      auto logits = logits_fn(g, vars, hvars, stack);
      const Tensor<T>& lv = g.val(logits.id);
      if (sequence_level) {
        for (int64_t r = 0; r < batch.b; ++r) {
          preds.push_back(argmax_row(lv, r));
        }
      } else {
        for (int64_t r = 0; r < batch.b * batch.t; ++r) {
          if (batch.labels[static_cast<size_t>(r)] == mlm::kIgnoreLabel) continue;
          preds.push_back(argmax_row(lv, r));
        }
      }
    }
    return preds;
  }

  static int32_t argmax_row(const Tensor<T>& m, int64_t row) {
    const int64_t cols = m.dim(1);
    const T* p = m.data() + row * cols;
    int64_t best = 0;
    for (int64_t j = 1; j < cols; ++j) {
      if (p[j] > p[best]) best = j;
    }
    return static_cast<int32_t>(best);
  }

  static std::vector<int32_t> gold_of(const std::vector<EncodedExample>& data,
                                      bool sequence_level) {
    std::vector<int32_t> gold;
    for (const EncodedExample& e : data) {
      if (sequence_level) {
        gold.push_back(e.seq_label);
      } else {
        for (const int32_t l : e.pos_labels) {
          if (l != mlm::kIgnoreLabel) gold.push_back(l);
        }
      }
    }
    return gold;
  }

  // Returns (test metrics, val history, best val).
  std::tuple<Metrics, std::vector<double>, double> fit(
      const std::vector<EncodedExample>& train, const std::vector<EncodedExample>& val,
      const std::vector<EncodedExample>& test, const Tensor<T>& class_weights) {
    auto enc_refs = model::encoder_param_refs(backbone);
    model::NamedTensorRefs<T> refs = enc_refs;
    {
      auto head_refs = head_refs_fn(head);
      for (size_t i = 0; i < head_refs.size(); ++i) {
        refs.add(head_refs.names[i], *head_refs.tensors[i]);
      }
    }
    auto state = optim::AdamState<T>::like(refs);

    const int64_t steps_per_epoch =
        (static_cast<int64_t>(train.size()) + cfg.batch_size - 1) / cfg.batch_size;
    optim::SchedulerConfig sched;
    sched.peak_lr = cfg.lr;
    sched.warmup_steps = 0;
    sched.total_steps = std::max<int64_t>(1, cfg.epochs * steps_per_epoch);
    sched.min_lr = 0.0;

    model::ModelParams<T> best_backbone = backbone;
    HeadT best_head = head;
    double best_val = -1.0;
    int64_t best_epoch = -1;
    std::vector<double> val_history;

    std::vector<int64_t> order(train.size());
    for (size_t i = 0; i < train.size(); ++i) order[i] = static_cast<int64_t>(i);

    int64_t global_step = 0;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      auto shuffle_rng = rng::derive_engine(cfg.seed, 0xF17EULL + static_cast<uint64_t>(epoch));
      rng::shuffle_indices(order, shuffle_rng);
      auto dropout_rng =
          rng::derive_engine(cfg.head_seed, 0xD809ULL + static_cast<uint64_t>(epoch));

      for (int64_t at = 0; at < static_cast<int64_t>(train.size()); at += cfg.batch_size) {
        std::vector<const EncodedExample*> chunk;
        std::vector<int32_t> seq_labels;
        for (int64_t i = at;
             i < std::min<int64_t>(static_cast<int64_t>(train.size()), at + cfg.batch_size);
             ++i) {
          const EncodedExample& e = train[static_cast<size_t>(order[static_cast<size_t>(i)])];
          chunk.push_back(&e);
          seq_labels.push_back(e.seq_label);
        }
        const mlm::Batch batch = make_batch(chunk);

        ad::Graph<T> g;
        auto vars = model::EncoderVars<T>::bind(g, backbone);
        auto hvars = HeadVarsT::bind(g, head);
        auto stack =
            model::encoder_forward(g, vars, batch, enc_cfg, model::Mode::kTrain, dropout_rng);
        auto logits = logits_fn(g, vars, hvars, stack);

        Tensor<int32_t> labels;
        if (sequence_level) {
          labels = Tensor<int32_t>({batch.b});
          for (int64_t r = 0; r < batch.b; ++r) labels[r] = seq_labels[static_cast<size_t>(r)];
        } else {
          labels = Tensor<int32_t>({batch.b * batch.t});
          for (int64_t r = 0; r < batch.b * batch.t; ++r) {
            labels[r] = batch.labels[static_cast<size_t>(r)];
          }
          bool any = false;
          for (int64_t r = 0; r < labels.numel(); ++r) any = any || labels[r] != mlm::kIgnoreLabel;
          if (!any) {
            ++global_step;
            continue;  // batch of all-ignored rows contributes nothing
          }
        }
        auto loss = ad::cross_entropy(logits, std::move(labels), mlm::kIgnoreLabel,
                                      class_weights, ad::Reduction::kMean);
        g.backward(loss.loss);

        std::vector<Tensor<T>> grads;
        grads.reserve(refs.size());
        auto var_list = model::encoder_var_list(vars);
        append_head_vars(var_list, hvars);
        for (size_t i = 0; i < var_list.size(); ++i) {
          if (g.grad_touched(var_list[i].id)) {
            grads.push_back(g.grad_of(var_list[i].id));
          } else {
            grads.emplace_back(refs.tensors[i]->shape());
          }
        }
        optim::adam_step(refs, grads, state, optim::AdamConfig{},
                         optim::lr_at_step(global_step, sched));
        ++global_step;
      }

      const Metrics val_metrics =
          evaluate(predict(val), gold_of(val, sequence_level), n_classes);
      val_history.push_back(val_metrics.macro_f1);
      if (val_metrics.macro_f1 > best_val) {
        best_val = val_metrics.macro_f1;
        best_epoch = epoch;
        best_backbone = backbone;
        best_head = head;
      } else if (epoch - best_epoch >= cfg.patience) {
        break;  // early stop
      }
    }

    if (best_epoch >= 0) {
      backbone = best_backbone;
      head = best_head;
    }
    const Metrics test_metrics = evaluate(predict(test), gold_of(test, sequence_level), n_classes);
    return {test_metrics, val_history, std::max(best_val, 0.0)};
  }

  static void append_head_vars(std::vector<ad::Var<T>>& list,
                               model::SequenceHeadVars<T>& hvars) {
    list.push_back(hvars.pool_w);
    list.push_back(hvars.pool_b);
    list.push_back(hvars.out_w);
    list.push_back(hvars.out_b);
  }
  static void append_head_vars(std::vector<ad::Var<T>>& list, model::TokenHeadVars<T>& hvars) {
    list.push_back(hvars.w);
    list.push_back(hvars.b);
  }
};

template <typename T>
Tensor<T> weights_tensor(const std::vector<double>& w) {
  Tensor<T> t({static_cast<int64_t>(w.size())});
  for (size_t i = 0; i < w.size(); ++i) t[static_cast<int64_t>(i)] = static_cast<T>(w[i]);
  return t;
}

}  // namespace

template <typename T>
SequenceOutcome<T> finetune_sequence(const std::vector<LabeledSequence>& data,
                                     const bpe::Vocabulary& vocab,
                                     const model::ModelParams<T>& base,
                                     const model::EncoderConfig& enc_cfg, int64_t n_classes,
                                     const FinetuneConfig& cfg) {
  cfg.validate();
  enc_cfg.validate();
  for (const LabeledSequence& s : data) {
    if (s.label < 0 || s.label >= n_classes) {
      throw ValidationError("label " + std::to_string(s.label) + " outside configured " +
                            std::to_string(n_classes) + " classes");
    }
  }
  auto split = split_dataset(data, cfg.train_frac, cfg.val_frac, cfg.test_frac, cfg.seed);

  Tensor<T> class_weights;
  if (cfg.use_class_weights) {
    std::vector<int32_t> train_labels;
    for (const auto& s : split.train) train_labels.push_back(s.label);
    class_weights = weights_tensor<T>(compute_class_weights(train_labels, n_classes));
  }

  auto encode = [&](const std::vector<LabeledSequence>& items) {
    std::vector<EncodedExample> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(encode_sequence_example(item, vocab, enc_cfg));
    return out;
  };

  auto logits_fn = [](ad::Graph<T>& g, model::EncoderVars<T>&,
                      model::SequenceHeadVars<T>& hvars, model::HiddenStack<T>& stack) {
    return model::sequence_logits(g, hvars, stack);
  };
  auto head_refs_fn = [](model::SequenceHead<T>& h) {
    model::NamedTensorRefs<T> refs;
    model::for_each_sequence_head_field(h, [&](const std::string& n, Tensor<T>& t) {
      refs.add(n, t);
    });
    return refs;
  };

  Tuner<T, model::SequenceHead<T>, model::SequenceHeadVars<T>, decltype(logits_fn),
        decltype(head_refs_fn)>
      tuner{enc_cfg,
            cfg,
            n_classes,
            /*sequence_level=*/true,
            base,
            model::SequenceHead<T>::init(enc_cfg.hidden, n_classes, cfg.head_seed),
            logits_fn,
            head_refs_fn};

  auto [test_metrics, history, best_val] =
      tuner.fit(encode(split.train), encode(split.val), encode(split.test), class_weights);

  SequenceOutcome<T> out{std::move(tuner.backbone), std::move(tuner.head), test_metrics, history,
                         best_val};
  return out;
}

template <typename T>
TokenOutcome<T> finetune_token(const std::vector<LabeledTokens>& data,
                               const bpe::Vocabulary& vocab, const model::ModelParams<T>& base,
                               const model::EncoderConfig& enc_cfg, int64_t n_labels,
                               const FinetuneConfig& cfg) {
  cfg.validate();
  enc_cfg.validate();
  for (const LabeledTokens& s : data) {
    for (const auto& [word, label] : s.tokens) {
      if (label < 0 || label >= n_labels) {
        throw ValidationError("token label " + std::to_string(label) + " outside configured " +
                              std::to_string(n_labels) + " labels");
      }
    }
  }
  auto split = split_dataset(data, cfg.train_frac, cfg.val_frac, cfg.test_frac, cfg.seed);

  Tensor<T> class_weights;
  if (cfg.use_class_weights) {
    std::vector<int32_t> train_labels;
    for (const auto& s : split.train) {
      for (const auto& [word, label] : s.tokens) train_labels.push_back(label);
    }
    class_weights = weights_tensor<T>(compute_class_weights(train_labels, n_labels));
  }

  auto encode = [&](const std::vector<LabeledTokens>& items) {
    std::vector<EncodedExample> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(encode_token_example(item, vocab, enc_cfg));
    return out;
  };

  auto logits_fn = [](ad::Graph<T>& g, model::EncoderVars<T>&, model::TokenHeadVars<T>& hvars,
                      model::HiddenStack<T>& stack) {
    return model::token_logits(g, hvars, stack);
  };
  auto head_refs_fn = [](model::TokenHead<T>& h) {
    model::NamedTensorRefs<T> refs;
    model::for_each_token_head_field(h, [&](const std::string& n, Tensor<T>& t) {
      refs.add(n, t);
    });
    return refs;
  };

  Tuner<T, model::TokenHead<T>, model::TokenHeadVars<T>, decltype(logits_fn),
        decltype(head_refs_fn)>
      tuner{enc_cfg,
            cfg,
            n_labels,
            /*sequence_level=*/false,
            base,
            model::TokenHead<T>::init(enc_cfg.hidden, n_labels, cfg.head_seed),
            logits_fn,
            head_refs_fn};

  auto [test_metrics, history, best_val] =
      tuner.fit(encode(split.train), encode(split.val), encode(split.test), class_weights);

  TokenOutcome<T> out{std::move(tuner.backbone), std::move(tuner.head), test_metrics, history,
                      best_val};
  return out;
}

template <typename T>
RunSummary run_repeated_sequence(const std::vector<LabeledSequence>& data,
                                 const bpe::Vocabulary& vocab, const model::ModelParams<T>& base,
                                 const model::EncoderConfig& enc_cfg, int64_t n_classes,
                                 const FinetuneConfig& cfg, int64_t n_runs) {
  std::vector<Metrics> runs;
  for (int64_t r = 0; r < n_runs; ++r) {
    FinetuneConfig run_cfg = cfg;
    run_cfg.head_seed = cfg.head_seed + static_cast<uint64_t>(r);
    runs.push_back(
        finetune_sequence(data, vocab, base, enc_cfg, n_classes, run_cfg).test);
  }
  return summarize(runs);
}

template <typename T>
RunSummary run_repeated_token(const std::vector<LabeledTokens>& data,
                              const bpe::Vocabulary& vocab, const model::ModelParams<T>& base,
                              const model::EncoderConfig& enc_cfg, int64_t n_labels,
                              const FinetuneConfig& cfg, int64_t n_runs) {
  std::vector<Metrics> runs;
  for (int64_t r = 0; r < n_runs; ++r) {
    FinetuneConfig run_cfg = cfg;
    run_cfg.head_seed = cfg.head_seed + static_cast<uint64_t>(r);
    runs.push_back(finetune_token(data, vocab, base, enc_cfg, n_labels, run_cfg).test);
  }
  return summarize(runs);
}

namespace {

// RFC-4180-ish: quoted fields, doubled quotes, newlines allowed inside quotes.
std::vector<std::vector<std::string>> parse_csv(const std::string& content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  size_t i = 0;
  while (i < content.size()) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
        ++i;
        continue;
      }
      field += c;
      ++i;
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
      ++i;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      ++i;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
      ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
    } else {
      field += c;
      ++i;
    }
  }
  if (!field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Integer-looking labels are used verbatim; otherwise distinct strings are
// sorted and numbered.
std::pair<std::vector<int32_t>, std::vector<std::string>> map_labels(
    const std::vector<std::string>& raw) {
  bool all_int = true;
  for (const std::string& s : raw) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      all_int = false;
      break;
    }
  }
  std::vector<int32_t> ids;
  std::vector<std::string> names;
  if (all_int) {
    int32_t max_id = 0;
    for (const std::string& s : raw) {
      const int32_t v = static_cast<int32_t>(std::stol(s));
      ids.push_back(v);
      max_id = std::max(max_id, v);
    }
    for (int32_t c = 0; c <= max_id; ++c) names.push_back(std::to_string(c));
  } else {
    std::set<std::string> distinct(raw.begin(), raw.end());
    std::map<std::string, int32_t> to_id;
    for (const std::string& s : distinct) {
      to_id.emplace(s, static_cast<int32_t>(names.size()));
      names.push_back(s);
    }
    for (const std::string& s : raw) ids.push_back(to_id.at(s));
  }
  return {ids, names};
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

SequenceDataset load_sequence_csv(const std::string& path) {
  const auto rows = parse_csv(read_file(path));
  if (rows.empty()) throw ParseError(path + ": empty CSV");
  if (rows[0].size() != 2 || rows[0][0] != "text" || rows[0][1] != "label") {
    throw SchemaError(path + ": expected header 'text,label'");
  }
  std::vector<std::string> texts, labels;
  for (size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() == 1 && rows[r][0].empty()) continue;  // trailing blank line
    if (rows[r].size() != 2) {
      throw ParseError(path + ": row " + std::to_string(r + 1) + " has " +
                       std::to_string(rows[r].size()) + " fields, expected 2");
    }
    texts.push_back(rows[r][0]);
    labels.push_back(rows[r][1]);
  }
  auto [ids, names] = map_labels(labels);
  SequenceDataset ds;
  ds.label_names = std::move(names);
  for (size_t i = 0; i < texts.size(); ++i) ds.items.push_back({texts[i], ids[i]});
  return ds;
}

TokenDataset load_token_conll(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<std::pair<std::string, std::string>>> sentences(1);
  std::string line;
  int64_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (!sentences.back().empty()) sentences.emplace_back();
      continue;
    }
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": expected 'token<TAB>label'");
    }
    sentences.back().emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  if (sentences.back().empty()) sentences.pop_back();
  if (sentences.empty()) throw ParseError(path + ": no sentences");

  std::vector<std::string> raw;
  for (const auto& s : sentences) {
    for (const auto& [w, l] : s) raw.push_back(l);
  }
  auto [ids, names] = map_labels(raw);
  TokenDataset ds;
  ds.label_names = std::move(names);
  size_t at = 0;
  for (const auto& s : sentences) {
    LabeledTokens item;
    for (const auto& [w, l] : s) item.tokens.emplace_back(w, ids[at++]);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

#define TWEETLM_INSTANTIATE_FINETUNE(T)                                                         \
  template SequenceOutcome<T> finetune_sequence<T>(                                             \
      const std::vector<LabeledSequence>&, const bpe::Vocabulary&, const model::ModelParams<T>&, \
      const model::EncoderConfig&, int64_t, const FinetuneConfig&);                             \
  template TokenOutcome<T> finetune_token<T>(const std::vector<LabeledTokens>&,                 \
                                             const bpe::Vocabulary&,                            \
                                             const model::ModelParams<T>&,                      \
                                             const model::EncoderConfig&, int64_t,              \
                                             const FinetuneConfig&);                            \
  template RunSummary run_repeated_sequence<T>(                                                 \
      const std::vector<LabeledSequence>&, const bpe::Vocabulary&, const model::ModelParams<T>&, \
      const model::EncoderConfig&, int64_t, const FinetuneConfig&, int64_t);                    \
  template RunSummary run_repeated_token<T>(const std::vector<LabeledTokens>&,                  \
                                            const bpe::Vocabulary&,                             \
                                            const model::ModelParams<T>&,                       \
                                            const model::EncoderConfig&, int64_t,               \
                                            const FinetuneConfig&, int64_t);

TWEETLM_INSTANTIATE_FINETUNE(float)
TWEETLM_INSTANTIATE_FINETUNE(double)
#undef TWEETLM_INSTANTIATE_FINETUNE

}  // namespace tweetlm::finetune
