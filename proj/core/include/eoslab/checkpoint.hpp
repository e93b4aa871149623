#pragma once

#include <map>
#include <string>

#include "eoslab/train.hpp"

namespace eoslab {

// Single-file container: magic, manifest JSON (config, vocab layout, step,
// free-form metadata, tensor directory), then row-major little-endian f64
// tensor data in directory order. Optimizer moments are included so a
// resumed run continues bit-exactly.
struct Checkpoint {
  ModelConfig config;
  EosMode eosMode = EosMode::Single;
  int lMax = 0;
  int contentTokens = 0;
  TrainState state;
  std::map<std::string, std::string> meta;

  Vocab vocab() const { return Vocab::build(contentTokens, eosMode, lMax); }
};

void save_checkpoint(const std::string& path, Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json);

}  // namespace eoslab
