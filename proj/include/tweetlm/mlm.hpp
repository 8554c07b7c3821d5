#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tweetlm/tokenizer.hpp"

namespace tweetlm::mlm {

// Sentinel for unsupervised positions; distinct from every token id.
inline constexpr int32_t kIgnoreLabel = -100;

struct MaskingConfig {
  double candidate_rate = 0.15;
  double mask_frac = 0.80;
  double random_frac = 0.10;
  double keep_frac = 0.10;
  int64_t max_len = 256;
  uint64_t seed = 0;
  // When set, random/kept candidates are also labeled (standard BERT). Off
  // by default: only mask-replaced positions are supervised.
  bool supervise_all_candidates = false;

  void validate() const;  // throws ValidationError
};

struct MaskedExample {
  std::vector<int32_t> input_ids;  // max_len
  std::vector<int32_t> labels;     // max_len, kIgnoreLabel where unsupervised
  std::vector<uint8_t> attention;  // max_len, 1 = real token
};

// Row-stacked examples, all fields (b, t) flattened row-major.
struct Batch {
  int64_t b = 0;
  int64_t t = 0;
  std::vector<int32_t> input_ids;
  std::vector<int32_t> labels;
  std::vector<uint8_t> attention;
  std::vector<int32_t> segments;  // all zero during pre-training
};

// Bernoulli candidate selection at candidate_rate over non-special positions,
// then mask/random/keep assignment. Sequences longer than max_len are an
// error; padding fills to max_len.
MaskedExample build_masked_example(const bpe::TokenSequence& tokens, const MaskingConfig& cfg,
                                   std::mt19937_64& rng, int64_t vocab_size);

// One example per sequence (tweets are never packed together); example i uses
// the rng stream derived from (seed, i).
Batch pad_and_batch(const std::vector<bpe::TokenSequence>& seqs, const MaskingConfig& cfg,
                    uint64_t seed, int64_t vocab_size);

// Optional pre-materialized form: flat little-endian int32 arrays plus a JSON
// sidecar describing shapes.
void write_batch_dump(const Batch& batch, const std::string& dir);
Batch read_batch_dump(const std::string& dir);

}  // namespace tweetlm::mlm
