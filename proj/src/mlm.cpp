#include "tweetlm/mlm.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "tweetlm/errors.hpp"
#include "tweetlm/rng.hpp"

namespace tweetlm::mlm {

void MaskingConfig::validate() const {
  if (candidate_rate < 0.0 || candidate_rate > 1.0) {
    throw ValidationError("masking.candidate_rate must be in [0,1]");
  }
  if (mask_frac < 0.0 || random_frac < 0.0 || keep_frac < 0.0) {
    throw ValidationError("masking fractions must be non-negative");
  }
  if (std::fabs(mask_frac + random_frac + keep_frac - 1.0) > 1e-9) {
    throw ValidationError("masking.mask_frac + random_frac + keep_frac must equal 1");
  }
  if (max_len < 2) throw ValidationError("masking.max_len must be at least 2");
}

MaskedExample build_masked_example(const bpe::TokenSequence& tokens, const MaskingConfig& cfg,
                                   std::mt19937_64& rng, int64_t vocab_size) {
  cfg.validate();
  const auto n = static_cast<int64_t>(tokens.ids.size());
  if (n > cfg.max_len) {
    throw ValidationError("sequence of " + std::to_string(n) + " tokens exceeds max_len " +
                          std::to_string(cfg.max_len) + " (tweets are never truncated)");
  }
  const int64_t non_special_ids = vocab_size - bpe::kNumSpecials;
  if (non_special_ids <= 0) throw ValidationError("vocab has no non-special ids");

  MaskedExample ex;
  ex.input_ids.assign(static_cast<size_t>(cfg.max_len), bpe::kPad);
  ex.labels.assign(static_cast<size_t>(cfg.max_len), kIgnoreLabel);
  ex.attention.assign(static_cast<size_t>(cfg.max_len), 0);

  for (int64_t i = 0; i < n; ++i) {
    const int32_t id = tokens.ids[static_cast<size_t>(i)];
    ex.input_ids[static_cast<size_t>(i)] = id;
    ex.attention[static_cast<size_t>(i)] = 1;
    if (bpe::Vocabulary::is_special(id)) continue;
    if (!rng::bernoulli(rng, cfg.candidate_rate)) continue;

    const double u = rng::uniform01(rng);
    if (u < cfg.mask_frac) {
      ex.input_ids[static_cast<size_t>(i)] = bpe::kMask;
      ex.labels[static_cast<size_t>(i)] = id;
    } else if (u < cfg.mask_frac + cfg.random_frac) {
      const auto repl = static_cast<int32_t>(
          bpe::kNumSpecials + rng::uniform_index(rng, static_cast<uint64_t>(non_special_ids)));
      ex.input_ids[static_cast<size_t>(i)] = repl;
      if (cfg.supervise_all_candidates) ex.labels[static_cast<size_t>(i)] = id;
    } else {
      if (cfg.supervise_all_candidates) ex.labels[static_cast<size_t>(i)] = id;
    }
  }
  return ex;
}

Batch pad_and_batch(const std::vector<bpe::TokenSequence>& seqs, const MaskingConfig& cfg,
                    uint64_t seed, int64_t vocab_size) {
  cfg.validate();
  if (seqs.empty()) throw ValidationError("pad_and_batch: empty input");

  Batch batch;
  batch.b = static_cast<int64_t>(seqs.size());
  batch.t = cfg.max_len;
  batch.input_ids.reserve(static_cast<size_t>(batch.b * batch.t));
  batch.labels.reserve(static_cast<size_t>(batch.b * batch.t));
  batch.attention.reserve(static_cast<size_t>(batch.b * batch.t));
  for (size_t i = 0; i < seqs.size(); ++i) {
    auto stream = rng::derive_engine(seed, static_cast<uint64_t>(i));
    MaskedExample ex = build_masked_example(seqs[i], cfg, stream, vocab_size);
    batch.input_ids.insert(batch.input_ids.end(), ex.input_ids.begin(), ex.input_ids.end());
    batch.labels.insert(batch.labels.end(), ex.labels.begin(), ex.labels.end());
    batch.attention.insert(batch.attention.end(), ex.attention.begin(), ex.attention.end());
  }
  batch.segments.assign(static_cast<size_t>(batch.b * batch.t), 0);
  return batch;
}

namespace {

void write_i32(const std::string& path, const std::vector<int32_t>& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  // raw little-endian int32; this build targets little-endian hosts
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(int32_t)));
}

std::vector<int32_t> read_i32(const std::string& path, size_t count) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<int32_t> data(count);
  f.read(reinterpret_cast<char*>(data.data()),
         static_cast<std::streamsize>(count * sizeof(int32_t)));
  if (static_cast<size_t>(f.gcount()) != count * sizeof(int32_t)) {
    throw ParseError("short read: " + path);
  }
  return data;
}

}  // namespace

void write_batch_dump(const Batch& batch, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_i32(dir + "/input_ids.bin", batch.input_ids);
  write_i32(dir + "/labels.bin", batch.labels);
  std::vector<int32_t> attn(batch.attention.begin(), batch.attention.end());
  write_i32(dir + "/attention.bin", attn);

  nlohmann::json side;
  side["shape"] = {batch.b, batch.t};
  side["dtype"] = "int32le";
  side["fields"] = {"input_ids", "labels", "attention"};
  std::ofstream f(dir + "/shapes.json");
  if (!f) throw std::runtime_error("cannot write " + dir + "/shapes.json");
  f << side.dump(2) << '\n';
}

Batch read_batch_dump(const std::string& dir) {
  std::ifstream f(dir + "/shapes.json");
  if (!f) throw std::runtime_error("cannot open " + dir + "/shapes.json");
  nlohmann::json side;
  try {
    f >> side;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(dir + "/shapes.json: " + e.what());
  }
  Batch batch;
  batch.b = side.at("shape").at(0).get<int64_t>();
  batch.t = side.at("shape").at(1).get<int64_t>();
  const auto count = static_cast<size_t>(batch.b * batch.t);
  batch.input_ids = read_i32(dir + "/input_ids.bin", count);
  batch.labels = read_i32(dir + "/labels.bin", count);
  std::vector<int32_t> attn = read_i32(dir + "/attention.bin", count);
  batch.attention.assign(attn.begin(), attn.end());
  batch.segments.assign(count, 0);
  return batch;
}

}  // namespace tweetlm::mlm
