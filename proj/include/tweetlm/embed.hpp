#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tweetlm/finetune.hpp"
#include "tweetlm/model.hpp"
#include "tweetlm/tokenizer.hpp"

namespace tweetlm::embed {

struct EmbedOptions {
  // Index into the hidden stack (0 = embedding output, i = block i output).
  // -1 selects blocks-1: the penultimate block's output, which degenerates to
  // the embedding output on a 1-block model.
  int64_t layer_index = -1;
};

int64_t resolve_layer_index(const EmbedOptions& opts, int64_t blocks);

// Mean of the selected layer over all attention-masked-in positions
// (<cls>/<sep> included, padding excluded). Empty text embeds [<cls>,<sep>].
template <typename T>
std::vector<double> embed_sequence(const std::string& clean_text, const bpe::Vocabulary& vocab,
                                   const model::ModelParams<T>& params,
                                   const model::EncoderConfig& cfg,
                                   const EmbedOptions& opts = {});

// Batched variant; one row per input text.
template <typename T>
std::vector<std::vector<double>> embed_many(const std::vector<std::string>& texts,
                                            const bpe::Vocabulary& vocab,
                                            const model::ModelParams<T>& params,
                                            const model::EncoderConfig& cfg,
                                            const EmbedOptions& opts = {},
                                            int64_t batch_size = 16);

enum class Aggregate { kMean, kMax };

Aggregate aggregate_from_string(const std::string& s);  // "mean" | "max"

struct AuthorTweets {
  std::string author_id;
  std::optional<int32_t> label;  // 1 = spreader
  std::vector<std::string> tweets;
};

struct AuthorProfile {
  std::string author_id;
  std::optional<int32_t> label;
  std::vector<std::vector<double>> tweet_embeddings;
};

// JSON-lines: {"author_id": ..., "label": 0|1 (optional), "tweets": [...]}
std::vector<AuthorTweets> load_authors_jsonl(const std::string& path);

template <typename T>
AuthorProfile embed_author(const AuthorTweets& author, const bpe::Vocabulary& vocab,
                           const model::ModelParams<T>& params, const model::EncoderConfig& cfg,
                           const EmbedOptions& opts = {});

// Element-wise mean or max across the author's tweet embeddings.
std::vector<double> aggregate_author(const AuthorProfile& profile, Aggregate mode);

// Dense classifier over aggregated author vectors: input -> 60 -> 60 -> 2
// with tanh activations.
struct ProfileHeadConfig {
  int64_t hidden1 = 60;
  int64_t hidden2 = 60;
  double lr = 1e-3;
  int64_t epochs = 100;
  int64_t patience = 10;  // on validation accuracy
  int64_t batch_size = 16;
  uint64_t seed = 0;
};

struct DenseHeadParams {
  Tensor<double> w1, b1, w2, b2, w3, b3;
};

DenseHeadParams init_profile_head(int64_t dim, const ProfileHeadConfig& cfg, uint64_t seed);

// Logits (n, 2) for a feature matrix (n, dim).
Tensor<double> profile_head_logits(const DenseHeadParams& head, const Tensor<double>& features);

struct ProfileRun {
  double accuracy = 0.0;
  double precision = 0.0;  // for the spreader class
  double recall = 0.0;
};

struct ProfileResult {
  std::vector<ProfileRun> runs;
  double mean_accuracy = 0.0, std_accuracy = 0.0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
};

// Aggregates each author, splits 70/10/20, trains the dense head, and
// reports test accuracy/precision/recall averaged over n_runs seeded runs.
ProfileResult train_profile_head(const std::vector<AuthorProfile>& authors, Aggregate mode,
                                 const ProfileHeadConfig& cfg, int64_t n_runs = 10);

struct AblationPoint {
  int64_t count = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

// Subsamples each author to `count` tweets (seeded; full count keeps the
// original list) and retrains; one curve point per count.
std::vector<AblationPoint> ablate_tweets_per_author(const std::vector<AuthorProfile>& authors,
                                                    const std::vector<int64_t>& counts,
                                                    Aggregate mode,
                                                    const ProfileHeadConfig& cfg,
                                                    int64_t n_runs = 3);

// Subsamples the training users to each requested count; validation and test
// stay fixed so the curve is comparable across points.
std::vector<AblationPoint> ablate_num_users(const std::vector<AuthorProfile>& authors,
                                            const std::vector<int64_t>& user_counts,
                                            Aggregate mode, const ProfileHeadConfig& cfg,
                                            int64_t n_runs = 3);

void write_ablation_csv(const std::string& path, const std::string& x_name,
                        const std::vector<AblationPoint>& points);

// Embedding dump: id,label,e0..e_{dim-1} per row.
void write_embeddings_csv(const std::string& path, const std::vector<std::string>& ids,
                          const std::vector<std::string>& labels,
                          const std::vector<std::vector<double>>& rows);

struct EmbeddingTable {
  std::vector<std::string> ids;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;
};

EmbeddingTable read_embeddings_csv(const std::string& path);

}  // namespace tweetlm::embed
