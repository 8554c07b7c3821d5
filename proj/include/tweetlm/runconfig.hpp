#pragma once

#include <json.hpp>
#include <string>

#include "tweetlm/embed.hpp"
#include "tweetlm/finetune.hpp"
#include "tweetlm/mlm.hpp"
#include "tweetlm/model.hpp"
#include "tweetlm/optim.hpp"

namespace tweetlm {

// Top-level run configuration: nested sections mirroring the module configs
// plus a global seed. Unknown keys are rejected at every level so typos fail
// loudly; command-line flags override file values.
struct RunConfig {
  model::EncoderConfig encoder;
  mlm::MaskingConfig masking;
  optim::SchedulerConfig scheduler;
  optim::AdamConfig adam;
  finetune::FinetuneConfig finetune;
  embed::ProfileHeadConfig profile_head;
  uint64_t seed = 0;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;
};

}  // namespace tweetlm
