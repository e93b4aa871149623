#pragma once

#include <functional>

#include "eoslab/model.hpp"

namespace eoslab {

// Search state: content tokens only; the terminator's factor is folded
// into logProb once the hypothesis finishes.
struct Hypothesis {
  TokenSeq tokens;
  double logProb = 0.0;
  bool finished = false;
  TokenId terminator = -1;

  int content_length() const { return static_cast<int>(tokens.size()); }
};

struct DecodeResult {
  std::vector<Hypothesis> hypotheses;  // finished, sorted by logProb desc
  Eigen::VectorXd firstStepLogProbs;   // full-vocab distribution at position 1
  int beamSize = 0;
  double emptyLogP = 0.0;
  bool emptyPreferred = false;  // empty outscores every finished non-empty hyp
};

// One record per retained hypothesis per step, for decode traces.
using TraceFn = std::function<void(int step, const TokenSeq& prefix, TokenId chosen,
                                   double logpStep, double logpCum)>;

inline int default_max_steps(int sourceLen) { return 2 * sourceLen + 4; }

// Sum of teacher-forced log factors including the terminator
// (eos_for_length(l) in Multi mode). target may be empty.
double score_sequence(const Parameters& params, const ModelConfig& config,
                      const Vocab& vocab, const TokenSeq& source, const TokenSeq& target);

Hypothesis greedy_decode(const Parameters& params, const ModelConfig& config,
                         const Vocab& vocab, const TokenSeq& source, int maxSteps);

// Length-synchronous beam search over raw log-probs, no length
// normalization. In Multi mode only [EOS-l] at step l+1 may finish a
// hypothesis; other EoS types are masked without renormalization.
DecodeResult beam_decode(const Parameters& params, const ModelConfig& config,
                         const Vocab& vocab, const TokenSeq& source, int k, int maxSteps,
                         const TraceFn& trace = nullptr);

// Brute-force argmax over all content sequences up to maxContentLen
// (including the empty one). Guarded to ~1e7 sequences.
Hypothesis exact_decode(const Parameters& params, const ModelConfig& config,
                        const Vocab& vocab, const TokenSeq& source, int maxContentLen);

struct EmptyPreference {
  bool preferred = false;
  bool vacuous = false;  // no non-empty hypothesis finished
  double emptyLogP = 0.0;
  double bestNonEmptyLogP = 0.0;
};

EmptyPreference empty_preferred(const Parameters& params, const ModelConfig& config,
                                const Vocab& vocab, const TokenSeq& source, int k,
                                int maxSteps);

// The score comparison alone, for injected per-token numbers.
inline bool empty_preferred_given_scores(double emptyLogP, double candidateLogP) {
  return emptyLogP > candidateLogP;
}

std::string decode_result_to_json(const DecodeResult& result, const TokenSeq& source);

}  // namespace eoslab
