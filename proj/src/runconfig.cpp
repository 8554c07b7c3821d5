#include "tweetlm/runconfig.hpp"

#include <fstream>
#include <set>

#include "tweetlm/errors.hpp"
#include "tweetlm/io.hpp"

namespace tweetlm {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ValidationError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError(std::string("bad value for '") + key + "'");
    }
  }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  reject_unknown(j, {"encoder", "masking", "scheduler", "adam", "finetune", "profile_head",
                     "seed"},
                 "config");
  get_if(j, "seed", cfg.seed);

  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    reject_unknown(e,
                   {"hidden", "feedforward", "heads", "blocks", "max_positions", "vocab_size",
                    "segments", "dropout", "layer_norm_eps"},
                   "config.encoder");
    cfg.encoder = io::encoder_config_from_json(e);
  }
  if (j.contains("masking")) {
    const json& m = j.at("masking");
    reject_unknown(m,
                   {"candidate_rate", "mask_frac", "random_frac", "keep_frac", "max_len",
                    "supervise_all_candidates"},
                   "config.masking");
    get_if(m, "candidate_rate", cfg.masking.candidate_rate);
    get_if(m, "mask_frac", cfg.masking.mask_frac);
    get_if(m, "random_frac", cfg.masking.random_frac);
    get_if(m, "keep_frac", cfg.masking.keep_frac);
    get_if(m, "max_len", cfg.masking.max_len);
    get_if(m, "supervise_all_candidates", cfg.masking.supervise_all_candidates);
  }
  if (j.contains("scheduler")) {
    const json& s = j.at("scheduler");
    reject_unknown(s, {"peak_lr", "warmup_steps", "total_steps", "min_lr"}, "config.scheduler");
    get_if(s, "peak_lr", cfg.scheduler.peak_lr);
    get_if(s, "warmup_steps", cfg.scheduler.warmup_steps);
    get_if(s, "total_steps", cfg.scheduler.total_steps);
    get_if(s, "min_lr", cfg.scheduler.min_lr);
  }
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    reject_unknown(a, {"beta1", "beta2", "epsilon", "weight_decay"}, "config.adam");
    get_if(a, "beta1", cfg.adam.beta1);
    get_if(a, "beta2", cfg.adam.beta2);
    get_if(a, "epsilon", cfg.adam.epsilon);
    get_if(a, "weight_decay", cfg.adam.weight_decay);
  }
  if (j.contains("finetune")) {
    const json& f = j.at("finetune");
    reject_unknown(f, {"lr", "epochs", "patience", "split", "batch_size", "class_weights"},
                   "config.finetune");
    get_if(f, "lr", cfg.finetune.lr);
    get_if(f, "epochs", cfg.finetune.epochs);
    get_if(f, "patience", cfg.finetune.patience);
    get_if(f, "batch_size", cfg.finetune.batch_size);
    get_if(f, "class_weights", cfg.finetune.use_class_weights);
    if (f.contains("split")) {
      const auto split = f.at("split").get<std::vector<double>>();
      if (split.size() != 3) throw ValidationError("config.finetune.split needs 3 fractions");
      cfg.finetune.train_frac = split[0];
      cfg.finetune.val_frac = split[1];
      cfg.finetune.test_frac = split[2];
    }
  }
  if (j.contains("profile_head")) {
    const json& p = j.at("profile_head");
    reject_unknown(p, {"hidden1", "hidden2", "lr", "epochs", "patience", "batch_size"},
                   "config.profile_head");
    get_if(p, "hidden1", cfg.profile_head.hidden1);
    get_if(p, "hidden2", cfg.profile_head.hidden2);
    get_if(p, "lr", cfg.profile_head.lr);
    get_if(p, "epochs", cfg.profile_head.epochs);
    get_if(p, "patience", cfg.profile_head.patience);
    get_if(p, "batch_size", cfg.profile_head.batch_size);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["encoder"] = io::encoder_config_to_json(encoder);
  j["masking"] = {{"candidate_rate", masking.candidate_rate},
                  {"mask_frac", masking.mask_frac},
                  {"random_frac", masking.random_frac},
                  {"keep_frac", masking.keep_frac},
                  {"max_len", masking.max_len},
                  {"supervise_all_candidates", masking.supervise_all_candidates}};
  j["scheduler"] = {{"peak_lr", scheduler.peak_lr},
                    {"warmup_steps", scheduler.warmup_steps},
                    {"total_steps", scheduler.total_steps},
                    {"min_lr", scheduler.min_lr}};
  j["adam"] = {{"beta1", adam.beta1},
               {"beta2", adam.beta2},
               {"epsilon", adam.epsilon},
               {"weight_decay", adam.weight_decay}};
  j["finetune"] = {{"lr", finetune.lr},
                   {"epochs", finetune.epochs},
                   {"patience", finetune.patience},
                   {"split", {finetune.train_frac, finetune.val_frac, finetune.test_frac}},
                   {"batch_size", finetune.batch_size},
                   {"class_weights", finetune.use_class_weights}};
  j["profile_head"] = {{"hidden1", profile_head.hidden1}, {"hidden2", profile_head.hidden2},
                       {"lr", profile_head.lr},           {"epochs", profile_head.epochs},
                       {"patience", profile_head.patience}, {"batch_size", profile_head.batch_size}};
  return j;
}

void RunConfig::validate() const {
  encoder.validate();
  masking.validate();
  scheduler.validate();
  adam.validate();
  finetune.validate();
}

}  // namespace tweetlm
