#include "eoslab/metrics.hpp"

#include <sstream>

#include <nlohmann/json.hpp>

namespace eoslab {

std::string MetricsReport::csv_header() {
  return "run_id,eos_mode,epsilon,beam_k,sigma,length_ratio,empty_ratio,"
         "min_first_logp,eos_first_logp,ref_avg_logp,q_perplexity,task_accuracy";
}

std::string MetricsReport::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << runId << "," << eosMode << "," << epsilon << "," << beamK << "," << sigma << ","
     << lengthRatio << "," << emptyRatio << "," << minFirstTokenLogP << ","
     << eosFirstLogP << "," << refAvgTokenLogP << "," << qPerplexity << ","
     << taskAccuracy;
  return os.str();
}

std::string MetricsReport::to_json() const {
  nlohmann::json j{{"run_id", runId},
                   {"eos_mode", eosMode},
                   {"epsilon", epsilon},
                   {"beam_k", beamK},
                   {"sigma", sigma},
                   {"length_ratio", lengthRatio},
                   {"empty_ratio", emptyRatio},
                   {"min_first_logp", minFirstTokenLogP},
                   {"eos_first_logp", eosFirstLogP},
                   {"ref_avg_logp", refAvgTokenLogP},
                   {"q_perplexity", qPerplexity},
                   {"task_accuracy", taskAccuracy}};
  return j.dump(2);
}

double length_ratio(const std::vector<Hypothesis>& outputs,
                    const std::vector<TokenSeq>& references) {
  if (outputs.size() != references.size())
    throw EoslabError("length_ratio: list size mismatch");
  long outTokens = 0, refTokens = 0;
  for (const auto& hyp : outputs) outTokens += hyp.content_length();
  for (const auto& ref : references) refTokens += static_cast<long>(ref.size());
  if (refTokens == 0) throw EoslabError("length_ratio: zero reference tokens");
  return static_cast<double>(outTokens) / static_cast<double>(refTokens);
}

double empty_ratio(const std::vector<Hypothesis>& outputs) {
  if (outputs.empty()) throw EoslabError("empty_ratio: no outputs");
  long empty = 0;
  for (const auto& hyp : outputs)
    if (hyp.content_length() == 0) ++empty;
  return static_cast<double>(empty) / static_cast<double>(outputs.size());
}

FirstPositionStats first_position_stats(const Parameters& params, const ModelConfig& config,
                                        const std::vector<TokenSeq>& sources,
                                        const Vocab& vocab) {
  if (sources.empty()) throw EoslabError("first_position_stats: no sources");
  const TokenId emptyTerm = vocab.eos_for_length(0);
  double sumMin = 0.0, sumEos = 0.0;
  for (const auto& src : sources) {
    const auto dists = forward(params, config, src, {});
    const auto& logp = dists.front().logProbs;
    sumMin += logp.minCoeff();
    sumEos += logp(emptyTerm);
  }
  FirstPositionStats stats;
  stats.minFirstTokenLogP = sumMin / static_cast<double>(sources.size());
  stats.eosFirstLogP = sumEos / static_cast<double>(sources.size());
  return stats;
}

double reference_avg_logprob(const Parameters& params, const ModelConfig& config,
                             const Corpus& corpus, const Vocab& vocab, int* skippedOut) {
  if (corpus.pairs.empty()) throw EoslabError("reference_avg_logprob: empty corpus");
  double sum = 0.0;
  int used = 0, skipped = 0;
  for (const auto& pair : corpus.pairs) {
    const int l = static_cast<int>(pair.target.size());
    // [BOS] + l content + terminator must fit in maxLen positions.
    if (l + 2 > config.maxLen || static_cast<int>(pair.source.size()) > config.maxLen ||
        (vocab.eos_mode() == EosMode::Multi && l > vocab.l_max())) {
      ++skipped;
      continue;
    }
    const double score = score_sequence(params, config, vocab,
                                        vocab.map_from_corpus(pair.source),
                                        vocab.map_from_corpus(pair.target));
    sum += score / (l + 1);
    ++used;
  }
  if (skippedOut) *skippedOut = skipped;
  if (used == 0) throw EoslabError("reference_avg_logprob: every pair over-length");
  return sum / used;
}

double task_accuracy(const Parameters& params, const ModelConfig& config,
                     const Corpus& corpus, const Vocab& vocab) {
  if (corpus.pairs.empty()) throw EoslabError("task_accuracy: empty corpus");
  long correct = 0;
  for (const auto& pair : corpus.pairs) {
    const TokenSeq src = vocab.map_from_corpus(pair.source);
    const TokenSeq ref = vocab.map_from_corpus(pair.target);
    const Hypothesis hyp = greedy_decode(params, config, vocab, src,
                                         default_max_steps(static_cast<int>(src.size())));
    if (hyp.finished && hyp.tokens == ref) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(corpus.pairs.size());
}

}  // namespace eoslab
