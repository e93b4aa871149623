#pragma once

#include <functional>

#include "eoslab/model.hpp"

namespace eoslab {

struct OptimizerSpec {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  int warmupSteps = 200;  // linear warmup, constant after
  int batchSize = 32;
};

// Parameters plus optimizer moments; checkpointing the whole state makes
// a resumed run bit-equal to an uninterrupted one.
struct TrainState {
  Parameters params;
  std::vector<nn::Mat> adamM, adamV;  // in for_each_tensor order
  long step = 0;
};

using LossLogger = std::function<void(long step, double loss)>;

TrainState init_train_state(const ModelConfig& config, const Vocab& vocab);

void train_steps(TrainState& state, const ModelConfig& config, const Corpus& corpus,
                 const Vocab& vocab, int steps, const OptimizerSpec& opt,
                 const LossLogger& logger = nullptr);

Parameters train(const ModelConfig& config, const Corpus& corpus, const Vocab& vocab,
                 int steps, const OptimizerSpec& opt, const LossLogger& logger = nullptr);

}  // namespace eoslab
