#pragma once

#include <json.hpp>
#include <map>
#include <string>

#include "tweetlm/model.hpp"
#include "tweetlm/tensor.hpp"

namespace tweetlm::io {

nlohmann::json encoder_config_to_json(const model::EncoderConfig& cfg);
model::EncoderConfig encoder_config_from_json(const nlohmann::json& j);

// Checkpoint directory layout: config.json (encoder config plus optional
// extra fields), manifest.json (name -> shape), and one raw little-endian
// float32 file per named parameter.
template <typename T>
void save_checkpoint(const std::string& dir, const model::EncoderConfig& cfg,
                     const model::NamedTensorRefs<T>& refs,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  model::EncoderConfig config;
  nlohmann::json extra = nlohmann::json::object();
  std::map<std::string, Tensor<float>> tensors;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

// Copies loaded float tensors into typed refs; throws on missing names or
// shape mismatches.
template <typename T>
void fill_from_checkpoint(const LoadedCheckpoint& ckpt, model::NamedTensorRefs<T>& refs);

// run.json: resolved config + seed + tool version, written into every
// artifact directory.
inline constexpr const char* kToolVersion = "0.1.0";
void write_run_json(const std::string& dir, const nlohmann::json& config, uint64_t seed);

}  // namespace tweetlm::io
