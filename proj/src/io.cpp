#include "tweetlm/io.hpp"

#include <filesystem>
#include <fstream>

#include "tweetlm/errors.hpp"

namespace tweetlm::io {

using nlohmann::json;

json encoder_config_to_json(const model::EncoderConfig& cfg) {
  return json{{"hidden", cfg.hidden},
              {"feedforward", cfg.feedforward},
              {"heads", cfg.heads},
              {"blocks", cfg.blocks},
              {"max_positions", cfg.max_positions},
              {"vocab_size", cfg.vocab_size},
              {"segments", cfg.segments},
              {"dropout", cfg.dropout},
              {"layer_norm_eps", cfg.layer_norm_eps}};
}

model::EncoderConfig encoder_config_from_json(const json& j) {
  model::EncoderConfig cfg;
  try {
    if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<int64_t>();
    if (j.contains("feedforward")) cfg.feedforward = j.at("feedforward").get<int64_t>();
    if (j.contains("heads")) cfg.heads = j.at("heads").get<int64_t>();
    if (j.contains("blocks")) cfg.blocks = j.at("blocks").get<int64_t>();
    if (j.contains("max_positions")) cfg.max_positions = j.at("max_positions").get<int64_t>();
    if (j.contains("vocab_size")) cfg.vocab_size = j.at("vocab_size").get<int64_t>();
    if (j.contains("segments")) cfg.segments = j.at("segments").get<int64_t>();
    if (j.contains("dropout")) cfg.dropout = j.at("dropout").get<double>();
    if (j.contains("layer_norm_eps")) cfg.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad encoder config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

void write_json_file(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << '\n';
}

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return j;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& dir, const model::EncoderConfig& cfg,
                     const model::NamedTensorRefs<T>& refs, const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);

  json config = encoder_config_to_json(cfg);
  for (auto it = extra.begin(); it != extra.end(); ++it) config[it.key()] = it.value();
  write_json_file(dir + "/config.json", config);

  json manifest = json::object();
  for (size_t i = 0; i < refs.size(); ++i) {
    manifest[refs.names[i]] = refs.tensors[i]->shape();
  }
  write_json_file(dir + "/manifest.json", manifest);

  for (size_t i = 0; i < refs.size(); ++i) {
    const Tensor<T>& t = *refs.tensors[i];
    std::ofstream f(dir + "/" + refs.names[i] + ".bin", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint tensor " + refs.names[i]);
    if constexpr (std::is_same_v<T, float>) {
      f.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
    } else {
      Tensor<float> cast = t.template cast<float>();
      f.write(reinterpret_cast<const char*>(cast.data()),
              static_cast<std::streamsize>(cast.numel() * sizeof(float)));
    }
  }
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  LoadedCheckpoint ckpt;
  json config = read_json_file(dir + "/config.json");
  ckpt.config = encoder_config_from_json(config);
  static const char* known[] = {"hidden",     "feedforward", "heads",
                                "blocks",     "max_positions", "vocab_size",
                                "segments",   "dropout",     "layer_norm_eps"};
  for (auto it = config.begin(); it != config.end(); ++it) {
    bool is_known = false;
    for (const char* k : known) is_known = is_known || it.key() == k;
    if (!is_known) ckpt.extra[it.key()] = it.value();
  }

  json manifest = read_json_file(dir + "/manifest.json");
  for (auto it = manifest.begin(); it != manifest.end(); ++it) {
    std::vector<int64_t> shape = it.value().get<std::vector<int64_t>>();
    Tensor<float> t(shape);
    std::ifstream f(dir + "/" + it.key() + ".bin", std::ios::binary);
    if (!f) throw std::runtime_error("missing checkpoint tensor file: " + it.key());
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(t.numel() * sizeof(float))) {
      throw ParseError("checkpoint tensor " + it.key() + " is truncated");
    }
    ckpt.tensors.emplace(it.key(), std::move(t));
  }
  return ckpt;
}

template <typename T>
void fill_from_checkpoint(const LoadedCheckpoint& ckpt, model::NamedTensorRefs<T>& refs) {
  for (size_t i = 0; i < refs.size(); ++i) {
    auto it = ckpt.tensors.find(refs.names[i]);
    if (it == ckpt.tensors.end()) {
      throw ValidationError("checkpoint is missing parameter '" + refs.names[i] + "'");
    }
    if (it->second.shape() != refs.tensors[i]->shape()) {
      throw ValidationError("checkpoint parameter '" + refs.names[i] + "' has shape " +
                            Tensor<float>::shape_str(it->second.shape()) + ", expected " +
                            Tensor<float>::shape_str(refs.tensors[i]->shape()));
    }
    *refs.tensors[i] = it->second.template cast<T>();
  }
}

void write_run_json(const std::string& dir, const nlohmann::json& config, uint64_t seed) {
  std::filesystem::create_directories(dir);
  json run;
  run["version"] = kToolVersion;
  run["seed"] = seed;
  run["config"] = config;
  write_json_file(dir + "/run.json", run);
}

template void save_checkpoint<float>(const std::string&, const model::EncoderConfig&,
                                     const model::NamedTensorRefs<float>&,
                                     const nlohmann::json&);
template void save_checkpoint<double>(const std::string&, const model::EncoderConfig&,
                                      const model::NamedTensorRefs<double>&,
                                      const nlohmann::json&);
template void fill_from_checkpoint<float>(const LoadedCheckpoint&,
                                          model::NamedTensorRefs<float>&);
template void fill_from_checkpoint<double>(const LoadedCheckpoint&,
                                           model::NamedTensorRefs<double>&);

}  // namespace tweetlm::io
