#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eoslab/nn.hpp"
#include "eoslab/vocab.hpp"

namespace eoslab {

enum class SmoothingPolicy { Standard, ExcludeEosGold };

struct ModelConfig {
  int dModel = 32;
  int nHeads = 4;
  int nLayers = 2;  // encoder and decoder each
  int dFFN = 64;
  int maxLen = 64;
  double labelSmoothing = 0.0;  // epsilon
  SmoothingPolicy eosSmoothingPolicy = SmoothingPolicy::Standard;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EncBlockParam {
  nn::NormParam ln1, ln2;
  nn::AttnParam att;
  nn::Tensor w1, b1, w2, b2;  // feed-forward
};

struct DecBlockParam {
  nn::NormParam ln1, ln2, ln3;
  nn::AttnParam self, cross;
  nn::Tensor w1, b1, w2, b2;
};

// All trainable weights. The target embedding doubles as the output
// projection, so the EoS logit is literally h_t . e_EoS.
struct Parameters {
  nn::Tensor srcEmb, tgtEmb;  // |V| x d
  std::vector<EncBlockParam> enc;
  std::vector<DecBlockParam> dec;
  nn::NormParam encNorm, decNorm;

  int vocabSize = 0;
  int dModel = 0;

  void zero_grads();
};

Parameters init_parameters(const ModelConfig& config, const Vocab& vocab);

// Visits every tensor in a fixed order with a stable dotted name.
void for_each_tensor(Parameters& params,
                     const std::function<void(const std::string&, nn::Tensor&)>& fn);

// Per-position next-token log-probabilities.
struct StepDistribution {
  Eigen::VectorXd logProbs;  // length |V|
};

// Teacher-forced conditionals: one distribution per position of
// [BOS] + targetPrefix, i.e. prefix.size()+1 rows.
std::vector<StepDistribution> forward(const Parameters& params, const ModelConfig& config,
                                      const TokenSeq& source, const TokenSeq& targetPrefix);

// Encoder output computed once per source; decoders reuse it across steps.
struct SourceEncoding {
  TokenSeq source;
  nn::Mat encOut;
};

SourceEncoding encode_source(const Parameters& params, const ModelConfig& config,
                             const TokenSeq& source);

// Rows of next-token log-probabilities for [BOS] + targetPrefix.
nn::Mat decoder_logprobs(const Parameters& params, const ModelConfig& config,
                         const SourceEncoding& enc, const TokenSeq& targetPrefix);

double label_smoothed_loss(const StepDistribution& dist, TokenId gold, double epsilon,
                           SmoothingPolicy policy, const Vocab& vocab);

// Masked-mean label-smoothed loss over a batch, no gradients.
double batch_loss(const Parameters& params, const Batch& batch,
                  const ModelConfig& config, const Vocab& vocab);

// Masked-mean label-smoothed loss over a batch; gradients accumulate into
// params (zeroed here first). dropRng drives dropout masks when the config
// asks for dropout; null means inference-style deterministic forward.
double loss_and_gradients(Parameters& params, const Batch& batch,
                          const ModelConfig& config, const Vocab& vocab);
double loss_and_gradients(Parameters& params, const Batch& batch,
                          const ModelConfig& config, const Vocab& vocab,
                          std::mt19937_64* dropRng);

// Central finite differences on a random sample of >= minCoords coordinates
// spanning every tensor; returns the max relative error.
double gradient_check(Parameters& params, const Batch& batch, const ModelConfig& config,
                      const Vocab& vocab, double h, int minCoords = 200,
                      std::uint64_t sampleSeed = 0);

}  // namespace eoslab
