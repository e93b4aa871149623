#pragma once

#include "eoslab/decode.hpp"

namespace eoslab {

struct MetricsReport {
  std::string runId;
  std::string eosMode;     // "single" | "multi"
  double epsilon = 0.0;
  int beamK = 1;
  double sigma = 0.0;
  double lengthRatio = 0.0;
  double emptyRatio = 0.0;
  double minFirstTokenLogP = 0.0;
  double eosFirstLogP = 0.0;
  double refAvgTokenLogP = 0.0;
  double qPerplexity = 0.0;
  double taskAccuracy = 0.0;

  std::string to_json() const;
  std::string csv_row() const;
  static std::string csv_header();
};

// Total output content tokens over total reference content tokens.
double length_ratio(const std::vector<Hypothesis>& outputs,
                    const std::vector<TokenSeq>& references);

double empty_ratio(const std::vector<Hypothesis>& outputs);

struct FirstPositionStats {
  double minFirstTokenLogP = 0.0;  // mean over sources of min_j log p(j)
  double eosFirstLogP = 0.0;       // mean log p of the empty-terminating token
};

// sources are vocab-space content sequences.
FirstPositionStats first_position_stats(const Parameters& params, const ModelConfig& config,
                                        const std::vector<TokenSeq>& sources,
                                        const Vocab& vocab);

// Mean of score_sequence / (l+1); the terminator position counts in the
// denominator. Over-length pairs are skipped and counted.
double reference_avg_logprob(const Parameters& params, const ModelConfig& config,
                             const Corpus& corpus, const Vocab& vocab,
                             int* skippedOut = nullptr);

// Fraction of greedy decodes that exactly match the reference content.
double task_accuracy(const Parameters& params, const ModelConfig& config,
                     const Corpus& corpus, const Vocab& vocab);

}  // namespace eoslab
