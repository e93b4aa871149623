#include "eoslab/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace eoslab {

using nn::Mat;

namespace {

// Terminator permitted at a step whose hypothesis has content length l,
// or -1 when none is legal (Multi beyond lMax).
TokenId legal_terminator(const Vocab& vocab, int contentLen) {
  if (vocab.eos_mode() == EosMode::Single) return vocab.eos_for_length(0);
  if (contentLen > vocab.l_max()) return -1;
  return vocab.eos_for_length(contentLen);
}

bool hyp_less(const Hypothesis& a, const Hypothesis& b) {
  if (a.logProb != b.logProb) return a.logProb > b.logProb;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

int clamp_max_steps(const ModelConfig& config, int maxSteps) {
  // [BOS] + emitted content must fit in maxLen decoder positions.
  return std::min(maxSteps, config.maxLen - 1);
}

}  // namespace

double score_sequence(const Parameters& params, const ModelConfig& config,
                      const Vocab& vocab, const TokenSeq& source, const TokenSeq& target) {
  const int l = static_cast<int>(target.size());
  TokenSeq encoded = target;
  encoded.push_back(vocab.eos_for_length(vocab.eos_mode() == EosMode::Single ? 0 : l));

  const auto dists = forward(params, config, source, target);
  double total = 0.0;
  for (std::size_t i = 0; i < encoded.size(); ++i) total += dists[i].logProbs(encoded[i]);
  return total;
}

Hypothesis greedy_decode(const Parameters& params, const ModelConfig& config,
                         const Vocab& vocab, const TokenSeq& source, int maxSteps) {
  maxSteps = clamp_max_steps(config, maxSteps);
  const SourceEncoding enc = encode_source(params, config, source);

  Hypothesis hyp;
  for (int step = 1; step <= maxSteps; ++step) {
    const Mat logp = decoder_logprobs(params, config, enc, hyp.tokens);
    const auto row = logp.row(logp.rows() - 1);
    const TokenId term = legal_terminator(vocab, hyp.content_length());

    TokenId best = -1;
    double bestLogP = -std::numeric_limits<double>::infinity();
    auto consider = [&](TokenId id) {
      if (row(id) > bestLogP) {  // ties: lower id wins (first seen)
        bestLogP = row(id);
        best = id;
      }
    };
    for (TokenId id = 2; id < vocab.eos_family_start(); ++id) consider(id);
    if (term >= 0) consider(term);

    hyp.logProb += bestLogP;
    if (best == term && term >= 0 && vocab.is_eos(best)) {
      hyp.finished = true;
      hyp.terminator = best;
      return hyp;
    }
    hyp.tokens.push_back(best);
  }
  return hyp;  // unfinished
}

DecodeResult beam_decode(const Parameters& params, const ModelConfig& config,
                         const Vocab& vocab, const TokenSeq& source, int k, int maxSteps,
                         const TraceFn& trace) {
  if (k < 1) throw EoslabError("beam_decode: k < 1");
  maxSteps = clamp_max_steps(config, maxSteps);
  const SourceEncoding enc = encode_source(params, config, source);

  DecodeResult result;
  result.beamSize = k;

  std::vector<Hypothesis> active(1);  // the BOS-only hypothesis
  std::vector<Hypothesis> finished;

  struct Expansion {
    Hypothesis hyp;
    double stepLogP;
  };

  for (int step = 1; step <= maxSteps && !active.empty(); ++step) {
    std::vector<Expansion> expansions;
    for (const Hypothesis& hyp : active) {
      const Mat logp = decoder_logprobs(params, config, enc, hyp.tokens);
      const auto row = logp.row(logp.rows() - 1);
      if (step == 1) result.firstStepLogProbs = row.transpose();

      const TokenId term = legal_terminator(vocab, hyp.content_length());
      if (term >= 0) {
        Hypothesis done = hyp;
        done.logProb += row(term);
        done.finished = true;
        done.terminator = term;
        expansions.push_back({std::move(done), row(term)});
      }
      for (TokenId id = 2; id < vocab.eos_family_start(); ++id) {
        Hypothesis next = hyp;
        next.logProb += row(id);
        next.tokens.push_back(id);
        expansions.push_back({std::move(next), row(id)});
      }
    }
    // Finished and content expansions compete for the same k slots; a
    // terminator outside the top k is dropped, which makes k=1 coincide
    // with greedy decoding.
    std::sort(expansions.begin(), expansions.end(),
              [](const Expansion& a, const Expansion& b) { return hyp_less(a.hyp, b.hyp); });
    if (static_cast<int>(expansions.size()) > k) expansions.resize(k);
    active.clear();
    for (Expansion& e : expansions) {
      if (trace) {
        if (e.hyp.finished)
          trace(step, e.hyp.tokens, e.hyp.terminator, e.stepLogP, e.hyp.logProb);
        else
          trace(step, TokenSeq(e.hyp.tokens.begin(), e.hyp.tokens.end() - 1),
                e.hyp.tokens.back(), e.stepLogP, e.hyp.logProb);
      }
      if (e.hyp.finished)
        finished.push_back(std::move(e.hyp));
      else
        active.push_back(std::move(e.hyp));
    }

    // Nonpositive increments: an active hypothesis can never beat its own
    // current score, so k finished hyps above the best active score end it.
    if (static_cast<int>(finished.size()) >= k && !active.empty()) {
      std::sort(finished.begin(), finished.end(), hyp_less);
      if (finished[k - 1].logProb >= active.front().logProb) break;
    }
  }

  std::sort(finished.begin(), finished.end(), hyp_less);
  result.hypotheses = std::move(finished);

  result.emptyLogP = score_sequence(params, config, vocab, source, {});
  result.emptyPreferred = true;
  for (const Hypothesis& hyp : result.hypotheses)
    if (hyp.content_length() > 0 && hyp.logProb >= result.emptyLogP) {
      result.emptyPreferred = false;
      break;
    }
  return result;
}

Hypothesis exact_decode(const Parameters& params, const ModelConfig& config,
                        const Vocab& vocab, const TokenSeq& source, int maxContentLen) {
  const int C = vocab.content_count();
  double spaceSize = 1.0;
  double layer = 1.0;
  for (int t = 1; t <= maxContentLen; ++t) {
    layer *= C;
    spaceSize += layer;
    if (spaceSize > 1e7)
      throw EoslabError("exact_decode: search space exceeds 1e7 sequences");
  }

  const SourceEncoding enc = encode_source(params, config, source);
  Hypothesis best;
  bool haveBest = false;

  // DFS over content prefixes; terminator considered at every node. The
  // visiting order (empty first, ascending ids, shorter first) makes the
  // strict-improvement rule match the beam tie-breaks.
  TokenSeq prefix;
  std::function<void(double)> visit = [&](double prefixLogP) {
    const Mat logp = decoder_logprobs(params, config, enc, prefix);
    const auto row = logp.row(logp.rows() - 1);
    const TokenId term = legal_terminator(vocab, static_cast<int>(prefix.size()));
    if (term >= 0) {
      const double score = prefixLogP + row(term);
      if (!haveBest || score > best.logProb) {
        best.tokens = prefix;
        best.logProb = score;
        best.finished = true;
        best.terminator = term;
        haveBest = true;
      }
    }
    if (static_cast<int>(prefix.size()) >= maxContentLen) return;
    for (TokenId id = 2; id < vocab.eos_family_start(); ++id) {
      prefix.push_back(id);
      visit(prefixLogP + row(id));
      prefix.pop_back();
    }
  };
  visit(0.0);
  if (!haveBest) throw EoslabError("exact_decode: no finishable sequence");
  return best;
}

EmptyPreference empty_preferred(const Parameters& params, const ModelConfig& config,
                                const Vocab& vocab, const TokenSeq& source, int k,
                                int maxSteps) {
  const DecodeResult result = beam_decode(params, config, vocab, source, k, maxSteps);
  EmptyPreference pref;
  pref.emptyLogP = result.emptyLogP;
  pref.bestNonEmptyLogP = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const Hypothesis& hyp : result.hypotheses)
    if (hyp.content_length() > 0) {
      pref.bestNonEmptyLogP = std::max(pref.bestNonEmptyLogP, hyp.logProb);
      any = true;
    }
  pref.vacuous = !any;
  pref.preferred = !any || pref.emptyLogP > pref.bestNonEmptyLogP;
  return pref;
}

std::string decode_result_to_json(const DecodeResult& result, const TokenSeq& source) {
  nlohmann::json j;
  j["source_ids"] = source;
  j["beam"] = result.beamSize;
  j["empty_logp"] = result.emptyLogP;
  j["empty_preferred"] = result.emptyPreferred;
  j["hypotheses"] = nlohmann::json::array();
  for (const Hypothesis& hyp : result.hypotheses)
    j["hypotheses"].push_back(
        {{"ids", hyp.tokens}, {"logp", hyp.logProb}, {"terminator", hyp.terminator}});
  return j.dump();
}

}  // namespace eoslab
