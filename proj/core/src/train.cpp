#include "eoslab/train.hpp"

#include <cmath>

#include "eoslab/rng.hpp"

namespace eoslab {

TrainState init_train_state(const ModelConfig& config, const Vocab& vocab) {
  TrainState state;
  state.params = init_parameters(config, vocab);
  for_each_tensor(state.params, [&](const std::string&, nn::Tensor& t) {
    state.adamM.push_back(nn::Mat::Zero(t.v.rows(), t.v.cols()));
    state.adamV.push_back(nn::Mat::Zero(t.v.rows(), t.v.cols()));
  });
  return state;
}

void train_steps(TrainState& state, const ModelConfig& config, const Corpus& corpus,
                 const Vocab& vocab, int steps, const OptimizerSpec& opt,
                 const LossLogger& logger) {
  config.validate();
  if (opt.batchSize < 1) throw EoslabError("OptimizerSpec: batchSize < 1");

  std::vector<Batch> batches;
  long cachedEpoch = -1;
  const long batchesPerEpoch =
      (static_cast<long>(corpus.pairs.size()) + opt.batchSize - 1) / opt.batchSize;

  for (int i = 0; i < steps; ++i) {
    const long step = state.step;  // absolute step index, 0-based
    const long epoch = step / batchesPerEpoch;
    if (epoch != cachedEpoch) {
      const std::uint64_t shuffleSeed =
          splitmix64(splitmix64(config.seed ^ fnv1a("shuffle")) + static_cast<std::uint64_t>(epoch));
      batches = make_batches(corpus, vocab, opt.batchSize, shuffleSeed);
      cachedEpoch = epoch;
    }
    const Batch& batch = batches[step % batchesPerEpoch];

    double loss;
    std::mt19937_64 dropRng = substream(splitmix64(config.seed + static_cast<std::uint64_t>(step)), "dropout");
    try {
      loss = loss_and_gradients(state.params, batch, config, vocab,
                                config.dropout > 0.0 ? &dropRng : nullptr);
    } catch (const EoslabError& e) {
      throw EoslabError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(loss))
      throw EoslabError("training diverged at step " + std::to_string(step));

    const long t = step + 1;
    const double warm = opt.warmupSteps > 0
                            ? std::min(1.0, static_cast<double>(t) / opt.warmupSteps)
                            : 1.0;
    const double lr = opt.lr * warm;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));

    std::size_t idx = 0;
    for_each_tensor(state.params, [&](const std::string&, nn::Tensor& p) {
      nn::Mat& m = state.adamM[idx];
      nn::Mat& v = state.adamV[idx];
      m = opt.beta1 * m + (1.0 - opt.beta1) * p.g;
      v = opt.beta2 * v + (1.0 - opt.beta2) * p.g.cwiseProduct(p.g);
      p.v.array() -=
          lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opt.eps);
      ++idx;
    });

    state.step = t;
    if (logger) logger(t, loss);
  }
}

Parameters train(const ModelConfig& config, const Corpus& corpus, const Vocab& vocab,
                 int steps, const OptimizerSpec& opt, const LossLogger& logger) {
  TrainState state = init_train_state(config, vocab);
  train_steps(state, config, corpus, vocab, steps, opt, logger);
  return std::move(state.params);
}

}  // namespace eoslab
