#include "tweetlm/embed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "tweetlm/autodiff.hpp"
#include "tweetlm/errors.hpp"
#include "tweetlm/mlm.hpp"
#include "tweetlm/optim.hpp"
#include "tweetlm/rng.hpp"

namespace tweetlm::embed {

int64_t resolve_layer_index(const EmbedOptions& opts, int64_t blocks) {
  const int64_t index = opts.layer_index < 0 ? blocks - 1 : opts.layer_index;
  if (index < 0 || index > blocks) {
    throw ValidationError("embedding layer index " + std::to_string(index) +
                          " outside stack of " + std::to_string(blocks + 1) + " layers");
  }
  return index;
}

Aggregate aggregate_from_string(const std::string& s) {
  if (s == "mean") return Aggregate::kMean;
  if (s == "max") return Aggregate::kMax;
  throw ValidationError("unknown aggregation '" + s + "' (expected mean or max)");
}

namespace {

template <typename T>
std::vector<std::vector<double>> embed_batch(const std::vector<bpe::TokenSequence>& seqs,
                                             const model::ModelParams<T>& params,
                                             const model::EncoderConfig& cfg, int64_t layer) {
  int64_t t = 2;
  for (const auto& s : seqs) t = std::max<int64_t>(t, static_cast<int64_t>(s.ids.size()));
  if (t > cfg.max_positions) {
    throw ValidationError("text of " + std::to_string(t) + " tokens exceeds max_positions");
  }
  mlm::Batch batch;
  batch.b = static_cast<int64_t>(seqs.size());
  batch.t = t;
  batch.input_ids.assign(static_cast<size_t>(batch.b * t), bpe::kPad);
  batch.labels.assign(static_cast<size_t>(batch.b * t), mlm::kIgnoreLabel);
  batch.attention.assign(static_cast<size_t>(batch.b * t), 0);
  batch.segments.assign(static_cast<size_t>(batch.b * t), 0);
  for (int64_t bi = 0; bi < batch.b; ++bi) {
    const auto& ids = seqs[static_cast<size_t>(bi)].ids;
    for (size_t i = 0; i < ids.size(); ++i) {
      batch.input_ids[static_cast<size_t>(bi * t) + i] = ids[i];
      batch.attention[static_cast<size_t>(bi * t) + i] = 1;
    }
  }

  auto rng = rng::make_engine(0);
  ad::Graph<T> g;
  auto vars = model::EncoderVars<T>::bind(g, params);
  auto stack = model::encoder_forward(g, vars, batch, cfg, model::Mode::kEval, rng);
  Tensor<uint8_t> mask({batch.b * batch.t});
  for (int64_t i = 0; i < batch.b * batch.t; ++i) mask[i] = batch.attention[static_cast<size_t>(i)];
  auto pooled =
      ad::mean_pool_rows(stack.layers[static_cast<size_t>(layer)], std::move(mask), batch.b, t);

  const Tensor<T>& pv = g.val(pooled.id);
  std::vector<std::vector<double>> out(static_cast<size_t>(batch.b));
  for (int64_t bi = 0; bi < batch.b; ++bi) {
    out[static_cast<size_t>(bi)].resize(static_cast<size_t>(cfg.hidden));
    for (int64_t j = 0; j < cfg.hidden; ++j) {
      out[static_cast<size_t>(bi)][static_cast<size_t>(j)] =
          static_cast<double>(pv.at2(bi, j));
    }
  }
  return out;
}

}  // namespace

template <typename T>
std::vector<double> embed_sequence(const std::string& clean_text, const bpe::Vocabulary& vocab,
                                   const model::ModelParams<T>& params,
                                   const model::EncoderConfig& cfg, const EmbedOptions& opts) {
  const int64_t layer = resolve_layer_index(opts, cfg.blocks);
  std::vector<bpe::TokenSequence> seqs{vocab.encode(clean_text, /*add_cls_sep=*/true)};
  return embed_batch(seqs, params, cfg, layer)[0];
}

template <typename T>
std::vector<std::vector<double>> embed_many(const std::vector<std::string>& texts,
                                            const bpe::Vocabulary& vocab,
                                            const model::ModelParams<T>& params,
                                            const model::EncoderConfig& cfg,
                                            const EmbedOptions& opts, int64_t batch_size) {
  if (batch_size < 1) throw ValidationError("embed: batch_size must be positive");
  const int64_t layer = resolve_layer_index(opts, cfg.blocks);
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (size_t at = 0; at < texts.size(); at += static_cast<size_t>(batch_size)) {
    std::vector<bpe::TokenSequence> seqs;
    for (size_t i = at; i < std::min(texts.size(), at + static_cast<size_t>(batch_size)); ++i) {
      seqs.push_back(vocab.encode(texts[i], /*add_cls_sep=*/true));
    }
    for (auto& row : embed_batch(seqs, params, cfg, layer)) out.push_back(std::move(row));
  }
  return out;
}

std::vector<AuthorTweets> load_authors_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<AuthorTweets> authors;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    AuthorTweets a;
    if (!j.contains("author_id")) {
      throw SchemaError(path + ": line " + std::to_string(line_no) + ": missing author_id");
    }
    a.author_id = j.at("author_id").is_string() ? j.at("author_id").get<std::string>()
                                               : j.at("author_id").dump();
    if (j.contains("label") && !j.at("label").is_null()) {
      const auto& l = j.at("label");
      if (l.is_number_integer()) {
        a.label = l.get<int32_t>();
      } else if (l.is_string()) {
        const std::string s = l.get<std::string>();
        if (s == "spreader") {
          a.label = 1;
        } else if (s == "non-spreader") {
          a.label = 0;
        } else {
          throw SchemaError(path + ": line " + std::to_string(line_no) + ": unknown label '" +
                            s + "'");
        }
      } else {
        throw SchemaError(path + ": line " + std::to_string(line_no) + ": bad label type");
      }
    }
    if (!j.contains("tweets") || !j.at("tweets").is_array() || j.at("tweets").empty()) {
      throw SchemaError(path + ": line " + std::to_string(line_no) +
                        ": tweets must be a non-empty array");
    }
    for (const auto& t : j.at("tweets")) a.tweets.push_back(t.get<std::string>());
    authors.push_back(std::move(a));
  }
  if (authors.empty()) throw SchemaError(path + ": no authors");
  return authors;
}

template <typename T>
AuthorProfile embed_author(const AuthorTweets& author, const bpe::Vocabulary& vocab,
                           const model::ModelParams<T>& params, const model::EncoderConfig& cfg,
                           const EmbedOptions& opts) {
  AuthorProfile p;
  p.author_id = author.author_id;
  p.label = author.label;
  p.tweet_embeddings = embed_many(author.tweets, vocab, params, cfg, opts);
  return p;
}

std::vector<double> aggregate_author(const AuthorProfile& profile, Aggregate mode) {
  if (profile.tweet_embeddings.empty()) {
    throw ValidationError("author '" + profile.author_id + "' has no tweet embeddings");
  }
  const size_t dim = profile.tweet_embeddings[0].size();
  std::vector<double> out = profile.tweet_embeddings[0];
  for (size_t i = 1; i < profile.tweet_embeddings.size(); ++i) {
    const auto& row = profile.tweet_embeddings[i];
    if (row.size() != dim) {
      throw ValidationError("author '" + profile.author_id + "' has ragged embeddings");
    }
    for (size_t j = 0; j < dim; ++j) {
      if (mode == Aggregate::kMean) {
        out[j] += row[j];
      } else {
        out[j] = std::max(out[j], row[j]);
      }
    }
  }
  if (mode == Aggregate::kMean) {
    const double inv = 1.0 / static_cast<double>(profile.tweet_embeddings.size());
    for (double& v : out) v *= inv;
  }
  return out;
}

// ---- dense profile head ----

DenseHeadParams init_profile_head(int64_t dim, const ProfileHeadConfig& cfg, uint64_t seed) {
  DenseHeadParams h;
  auto engine = rng::make_engine(seed);
  auto fill = [&](Tensor<double>& t, std::vector<int64_t> shape) {
    t = Tensor<double>(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng::trunc_normal(engine, 0.1);
  };
  fill(h.w1, {dim, cfg.hidden1});
  h.b1 = Tensor<double>({cfg.hidden1});
  fill(h.w2, {cfg.hidden1, cfg.hidden2});
  h.b2 = Tensor<double>({cfg.hidden2});
  fill(h.w3, {cfg.hidden2, 2});
  h.b3 = Tensor<double>({2});
  return h;
}

Tensor<double> profile_head_logits(const DenseHeadParams& h, const Tensor<double>& x) {
  ad::Graph<double> g;
  auto xv = g.input(x);
  auto hv1 = ad::tanh_act(ad::add_rowbias(ad::matmul(xv, g.param(h.w1)), g.param(h.b1)));
  auto hv2 = ad::tanh_act(ad::add_rowbias(ad::matmul(hv1, g.param(h.w2)), g.param(h.b2)));
  auto logits = ad::add_rowbias(ad::matmul(hv2, g.param(h.w3)), g.param(h.b3));
  return g.val(logits.id);
}

namespace {

using DenseHead = DenseHeadParams;

model::NamedTensorRefs<double> head_refs(DenseHead& h) {
  model::NamedTensorRefs<double> r;
  r.add("head.w1", h.w1);
  r.add("head.b1", h.b1);
  r.add("head.w2", h.w2);
  r.add("head.b2", h.b2);
  r.add("head.w3", h.w3);
  r.add("head.b3", h.b3);
  return r;
}

struct Feat {
  std::vector<double> x;
  int32_t y = 0;
};

Tensor<double> feature_matrix(const std::vector<const Feat*>& feats) {
  const auto n = static_cast<int64_t>(feats.size());
  const auto d = static_cast<int64_t>(feats[0]->x.size());
  Tensor<double> x({n, d});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) x.at2(i, j) = feats[static_cast<size_t>(i)]->x[static_cast<size_t>(j)];
  }
  return x;
}

ProfileRun eval_head(const DenseHead& head, const std::vector<Feat>& test) {
  std::vector<const Feat*> ptrs;
  for (const Feat& f : test) ptrs.push_back(&f);
  const Tensor<double> logits = profile_head_logits(head, feature_matrix(ptrs));
  int64_t correct = 0, tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    const int32_t pred = logits.at2(static_cast<int64_t>(i), 1) >
                                 logits.at2(static_cast<int64_t>(i), 0)
                             ? 1
                             : 0;
    const int32_t gold = test[i].y;
    if (pred == gold) ++correct;
    if (pred == 1 && gold == 1) ++tp;
    if (pred == 1 && gold == 0) ++fp;
    if (pred == 0 && gold == 1) ++fn;
  }
  ProfileRun run;
  run.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  run.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  run.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return run;
}

double head_accuracy(const DenseHead& head, const std::vector<Feat>& data) {
  return eval_head(head, data).accuracy;
}

ProfileRun train_one(const std::vector<Feat>& train, const std::vector<Feat>& val,
                     const std::vector<Feat>& test, const ProfileHeadConfig& cfg,
                     uint64_t run_seed) {
  const auto dim = static_cast<int64_t>(train[0].x.size());
  DenseHead head = init_profile_head(dim, cfg, run_seed);
  auto refs = head_refs(head);
  auto state = optim::AdamState<double>::like(refs);

  DenseHead best = head;
  double best_val = -1.0;
  int64_t best_epoch = -1;

  std::vector<int64_t> order(train.size());
  for (size_t i = 0; i < train.size(); ++i) order[i] = static_cast<int64_t>(i);

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto shuffle_rng = rng::derive_engine(run_seed, 0xA0A0ULL + static_cast<uint64_t>(epoch));
    rng::shuffle_indices(order, shuffle_rng);
    for (int64_t at = 0; at < static_cast<int64_t>(train.size()); at += cfg.batch_size) {
      std::vector<const Feat*> chunk;
      Tensor<int32_t> labels(
          {std::min<int64_t>(static_cast<int64_t>(train.size()) - at, cfg.batch_size)});
      for (int64_t i = at;
           i < std::min<int64_t>(static_cast<int64_t>(train.size()), at + cfg.batch_size); ++i) {
        const Feat& f = train[static_cast<size_t>(order[static_cast<size_t>(i)])];
        labels[i - at] = f.y;
        chunk.push_back(&f);
      }

      ad::Graph<double> g;
      auto xv = g.input(feature_matrix(chunk));
      auto w1 = g.param(head.w1), b1 = g.param(head.b1);
      auto w2 = g.param(head.w2), b2 = g.param(head.b2);
      auto w3 = g.param(head.w3), b3 = g.param(head.b3);
      auto h1 = ad::tanh_act(ad::add_rowbias(ad::matmul(xv, w1), b1));
      auto h2 = ad::tanh_act(ad::add_rowbias(ad::matmul(h1, w2), b2));
      auto logits = ad::add_rowbias(ad::matmul(h2, w3), b3);
      auto loss = ad::cross_entropy(logits, std::move(labels), mlm::kIgnoreLabel,
                                    Tensor<double>(), ad::Reduction::kMean);
      g.backward(loss.loss);

      std::vector<Tensor<double>> grads;
      for (const auto v : {w1, b1, w2, b2, w3, b3}) {
        if (g.grad_touched(v.id)) {
          grads.push_back(g.grad_of(v.id));
        } else {
          grads.emplace_back(g.val(v.id).shape());
        }
      }
      optim::adam_step(refs, grads, state, optim::AdamConfig{}, cfg.lr);
    }

    const double val_acc = head_accuracy(head, val);
    if (val_acc > best_val) {
      best_val = val_acc;
      best_epoch = epoch;
      best = head;
    } else if (epoch - best_epoch >= cfg.patience) {
      break;
    }
  }
  return eval_head(best, test);
}

// Features are standardized against train-split statistics before the head
// sees them; the offsets between raw embedding dimensions are otherwise much
// smaller than their shared scale.
void standardize(std::vector<Feat>& train, std::vector<Feat>& val, std::vector<Feat>& test) {
  const size_t dim = train[0].x.size();
  std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
  for (const Feat& f : train) {
    for (size_t j = 0; j < dim; ++j) mean[j] += f.x[j];
  }
  for (double& m : mean) m /= static_cast<double>(train.size());
  for (const Feat& f : train) {
    for (size_t j = 0; j < dim; ++j) sd[j] += (f.x[j] - mean[j]) * (f.x[j] - mean[j]);
  }
  for (double& s : sd) s = std::sqrt(s / static_cast<double>(train.size())) + 1e-8;
  for (auto* part : {&train, &val, &test}) {
    for (Feat& f : *part) {
      for (size_t j = 0; j < dim; ++j) f.x[j] = (f.x[j] - mean[j]) / sd[j];
    }
  }
}

ProfileResult train_eval_runs(std::vector<Feat> train, std::vector<Feat> val,
                              std::vector<Feat> test, const ProfileHeadConfig& cfg,
                              int64_t n_runs) {
  standardize(train, val, test);
  ProfileResult result;
  for (int64_t r = 0; r < n_runs; ++r) {
    result.runs.push_back(train_one(train, val, test, cfg, cfg.seed + static_cast<uint64_t>(r)));
  }
  const auto n = static_cast<double>(result.runs.size());
  for (const ProfileRun& run : result.runs) {
    result.mean_accuracy += run.accuracy;
    result.mean_precision += run.precision;
    result.mean_recall += run.recall;
  }
  result.mean_accuracy /= n;
  result.mean_precision /= n;
  result.mean_recall /= n;
  if (result.runs.size() > 1) {
    double va = 0.0;
    for (const ProfileRun& run : result.runs) {
      va += (run.accuracy - result.mean_accuracy) * (run.accuracy - result.mean_accuracy);
    }
    result.std_accuracy = std::sqrt(va / (n - 1.0));
  }
  return result;
}

std::vector<Feat> to_features(const std::vector<AuthorProfile>& authors, Aggregate mode) {
  std::vector<Feat> feats;
  bool has0 = false, has1 = false;
  for (const AuthorProfile& a : authors) {
    if (!a.label.has_value()) {
      throw ValidationError("author '" + a.author_id + "' has no label");
    }
    Feat f;
    f.x = aggregate_author(a, mode);
    f.y = *a.label;
    has0 = has0 || f.y == 0;
    has1 = has1 || f.y == 1;
    feats.push_back(std::move(f));
  }
  if (!has0 || !has1) throw ValidationError("profile training needs both labels present");
  return feats;
}

}  // namespace

ProfileResult train_profile_head(const std::vector<AuthorProfile>& authors, Aggregate mode,
                                 const ProfileHeadConfig& cfg, int64_t n_runs) {
  const std::vector<Feat> feats = to_features(authors, mode);
  auto split = finetune::split_dataset(feats, 0.70, 0.10, 0.20, cfg.seed);
  return train_eval_runs(split.train, split.val, split.test, cfg, n_runs);
}

std::vector<AblationPoint> ablate_tweets_per_author(const std::vector<AuthorProfile>& authors,
                                                    const std::vector<int64_t>& counts,
                                                    Aggregate mode,
                                                    const ProfileHeadConfig& cfg,
                                                    int64_t n_runs) {
  std::vector<AblationPoint> curve;
  for (const int64_t count : counts) {
    if (count < 1) throw ValidationError("ablation tweet count must be positive");
    std::vector<AuthorProfile> sub;
    sub.reserve(authors.size());
    for (size_t ai = 0; ai < authors.size(); ++ai) {
      const AuthorProfile& a = authors[ai];
      const auto avail = static_cast<int64_t>(a.tweet_embeddings.size());
      if (count > avail) {
        throw ValidationError("author '" + a.author_id + "' has only " + std::to_string(avail) +
                              " tweets, requested " + std::to_string(count));
      }
      AuthorProfile s;
      s.author_id = a.author_id;
      s.label = a.label;
      if (count == avail) {
        s.tweet_embeddings = a.tweet_embeddings;  // identity keeps results bit-exact
      } else {
        std::vector<int64_t> idx(static_cast<size_t>(avail));
        for (int64_t i = 0; i < avail; ++i) idx[static_cast<size_t>(i)] = i;
        auto engine = rng::derive_engine(cfg.seed, 0x7EE7ULL + static_cast<uint64_t>(ai));
        rng::shuffle_indices(idx, engine);
        for (int64_t i = 0; i < count; ++i) {
          s.tweet_embeddings.push_back(a.tweet_embeddings[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
        }
      }
      sub.push_back(std::move(s));
    }
    const ProfileResult res = train_profile_head(sub, mode, cfg, n_runs);
    curve.push_back({count, res.mean_accuracy, res.std_accuracy});
  }
  return curve;
}

std::vector<AblationPoint> ablate_num_users(const std::vector<AuthorProfile>& authors,
                                            const std::vector<int64_t>& user_counts,
                                            Aggregate mode, const ProfileHeadConfig& cfg,
                                            int64_t n_runs) {
  const std::vector<Feat> feats = to_features(authors, mode);
  auto split = finetune::split_dataset(feats, 0.70, 0.10, 0.20, cfg.seed);

  std::vector<AblationPoint> curve;
  for (const int64_t count : user_counts) {
    if (count < 2) throw ValidationError("ablation user count must be at least 2");
    const auto avail = static_cast<int64_t>(split.train.size());
    if (count > avail) {
      throw ValidationError("training split has only " + std::to_string(avail) + " users");
    }
    std::vector<Feat> train;
    if (count == avail) {
      train = split.train;
    } else {
      std::vector<int64_t> idx(static_cast<size_t>(avail));
      for (int64_t i = 0; i < avail; ++i) idx[static_cast<size_t>(i)] = i;
      auto engine = rng::derive_engine(cfg.seed, 0x05E75ULL + static_cast<uint64_t>(count));
      rng::shuffle_indices(idx, engine);
      bool has0 = false, has1 = false;
      for (int64_t i = 0; i < count; ++i) {
        train.push_back(split.train[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
        has0 = has0 || train.back().y == 0;
        has1 = has1 || train.back().y == 1;
      }
      if (!has0 || !has1) {
        // guarantee both classes by swapping in the first missing-class user
        const int32_t missing = has0 ? 1 : 0;
        for (int64_t i = count; i < avail; ++i) {
          const Feat& f = split.train[static_cast<size_t>(idx[static_cast<size_t>(i)])];
          if (f.y == missing) {
            train.back() = f;
            break;
          }
        }
      }
    }
    const ProfileResult res = train_eval_runs(train, split.val, split.test, cfg, n_runs);
    curve.push_back({count, res.mean_accuracy, res.std_accuracy});
  }
  return curve;
}

void write_ablation_csv(const std::string& path, const std::string& x_name,
                        const std::vector<AblationPoint>& points) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << x_name << ",mean_accuracy,std_accuracy\n";
  f << std::setprecision(10);
  for (const AblationPoint& p : points) {
    f << p.count << ',' << p.mean_accuracy << ',' << p.std_accuracy << '\n';
  }
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

void write_embeddings_csv(const std::string& path, const std::vector<std::string>& ids,
                          const std::vector<std::string>& labels,
                          const std::vector<std::vector<double>>& rows) {
  if (ids.size() != rows.size() || (!labels.empty() && labels.size() != rows.size())) {
    throw ValidationError("embedding CSV: id/label/row counts disagree");
  }
  if (rows.empty()) throw ValidationError("embedding CSV: nothing to write");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "id,label";
  for (size_t j = 0; j < rows[0].size(); ++j) f << ",e" << j;
  f << '\n';
  f << std::setprecision(17);
  for (size_t i = 0; i < rows.size(); ++i) {
    f << csv_escape(ids[i]) << ',' << (labels.empty() ? "" : csv_escape(labels[i]));
    for (const double v : rows[i]) f << ',' << v;
    f << '\n';
  }
}

EmbeddingTable read_embeddings_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  EmbeddingTable table;
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ": empty file");
  if (line.rfind("id,label", 0) != 0) {
    throw SchemaError(path + ": expected header starting with 'id,label'");
  }
  int64_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size()) {
        fields.push_back(field);
        break;
      }
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          field += c;
        }
      } else if (c == '"' && field.empty()) {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(field);
        field.clear();
      } else {
        field += c;
      }
    }
    if (fields.size() < 3) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": too few fields");
    }
    table.ids.push_back(fields[0]);
    table.labels.push_back(fields[1]);
    std::vector<double> row;
    for (size_t i = 2; i < fields.size(); ++i) {
      try {
        row.push_back(std::stod(fields[i]));
      } catch (const std::exception&) {
        throw ParseError(path + ": line " + std::to_string(line_no) + ": bad number '" +
                         fields[i] + "'");
      }
    }
    if (!table.rows.empty() && row.size() != table.rows[0].size()) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": ragged row");
    }
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty()) throw ParseError(path + ": no data rows");
  return table;
}

#define TWEETLM_INSTANTIATE_EMBED(T)                                                        \
  template std::vector<double> embed_sequence<T>(const std::string&, const bpe::Vocabulary&, \
                                                 const model::ModelParams<T>&,               \
                                                 const model::EncoderConfig&,                \
                                                 const EmbedOptions&);                       \
  template std::vector<std::vector<double>> embed_many<T>(                                   \
      const std::vector<std::string>&, const bpe::Vocabulary&, const model::ModelParams<T>&, \
      const model::EncoderConfig&, const EmbedOptions&, int64_t);                            \
  template AuthorProfile embed_author<T>(const AuthorTweets&, const bpe::Vocabulary&,        \
                                         const model::ModelParams<T>&,                       \
                                         const model::EncoderConfig&, const EmbedOptions&);

TWEETLM_INSTANTIATE_EMBED(float)
TWEETLM_INSTANTIATE_EMBED(double)
#undef TWEETLM_INSTANTIATE_EMBED

}  // namespace tweetlm::embed
