#pragma once

#include <string>

#include "model/policy.hpp"

namespace mmp::model {

struct CheckpointMeta {
  std::string phase = "init";  // init | pretrain | finetune
  int64_t step = 0;
  uint64_t seed = 0;
  std::string manifest_text;  // training-data manifest snapshot
};

// Versioned binary container: config text, vocabulary word list, named
// parameter tensors, training metadata. Reload reproduces forward outputs
// bitwise within one build; unknown versions are rejected.
void save_checkpoint(const Policy& policy, const CheckpointMeta& meta, const std::string& path);

Policy load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr);

}  // namespace mmp::model
