#include "eoslab/vocab.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "eoslab/rng.hpp"

namespace eoslab {

Vocab Vocab::build(int contentTokens, EosMode mode, int lMax) {
  if (contentTokens < 1) throw EoslabError("Vocab: contentTokens < 1");
  if (mode == EosMode::Multi && lMax < 1) throw EoslabError("Vocab: lMax < 1 in Multi mode");
  Vocab v;
  v.mode_ = mode;
  v.lMax_ = lMax;
  v.eosStart_ = 2 + contentTokens;
  v.size_ = v.eosStart_ + v.eos_family_size();
  return v;
}

Vocab Vocab::build(const Corpus& corpus, int contentTokens, EosMode mode, int lMax) {
  if (mode == EosMode::Multi) {
    for (const auto& pair : corpus.pairs)
      if (static_cast<int>(pair.target.size()) > lMax)
        throw EoslabError("Vocab: corpus target length " +
                          std::to_string(pair.target.size()) +
                          " exceeds lMax=" + std::to_string(lMax));
  }
  return build(contentTokens, mode, lMax);
}

TokenId Vocab::eos_for_length(int l) const {
  if (mode_ == EosMode::Single) return eosStart_;
  if (l < 0 || l > lMax_)
    throw EoslabError("eos_for_length: l=" + std::to_string(l) +
                      " outside [0," + std::to_string(lMax_) + "]");
  return eosStart_ + l;
}

TokenSeq Vocab::map_from_corpus(const TokenSeq& raw) const {
  TokenSeq out;
  out.reserve(raw.size());
  for (TokenId t : raw) {
    if (t < 0 || t >= content_count())
      throw EoslabError("corpus token " + std::to_string(t) + " outside content alphabet");
    out.push_back(content_id(t));
  }
  return out;
}

TokenSeq Vocab::map_to_corpus(const TokenSeq& ids) const {
  TokenSeq out;
  out.reserve(ids.size());
  for (TokenId t : ids) {
    if (!is_content(t))
      throw EoslabError("token " + std::to_string(t) + " is not a content token");
    out.push_back(t - 2);
  }
  return out;
}

std::string Vocab::token_string(TokenId id) const {
  if (id == kPad) return "[PAD]";
  if (id == kBos) return "[BOS]";
  if (is_content(id)) return "t" + std::to_string(id - 2);
  if (is_eos(id)) {
    if (mode_ == EosMode::Single) return "[EOS]";
    return "[EOS-" + std::to_string(id - eosStart_) + "]";
  }
  throw EoslabError("token id out of range: " + std::to_string(id));
}

std::string Vocab::to_json() const {
  nlohmann::json j;
  j["eos_mode"] = mode_ == EosMode::Single ? "single" : "multi";
  j["l_max"] = lMax_;
  nlohmann::json tokens = nlohmann::json::object();
  for (TokenId id = 0; id < size_; ++id) tokens[token_string(id)] = id;
  j["tokens"] = tokens;
  return j.dump(2);
}

TokenSeq encode_target(const TokenSeq& target, const Vocab& vocab) {
  const int l = static_cast<int>(target.size());
  if (l < 1) throw EoslabError("encode_target: empty target");
  if (vocab.eos_mode() == EosMode::Multi && l > vocab.l_max())
    throw EoslabError("encode_target: target length " + std::to_string(l) +
                      " exceeds lMax=" + std::to_string(vocab.l_max()));
  TokenSeq out = target;
  out.push_back(vocab.eos_for_length(l));
  return out;
}

std::vector<Batch> make_batches(const Corpus& corpus, const Vocab& vocab,
                                int batchSize, std::uint64_t shuffleSeed) {
  if (batchSize < 1) throw EoslabError("make_batches: batchSize < 1");
  if (corpus.pairs.empty()) throw EoslabError("make_batches: empty corpus");

  // Stable length sort keeps padding low; batch order is then shuffled.
  std::vector<std::size_t> order(corpus.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus.pairs[a].target.size() + corpus.pairs[a].source.size() <
           corpus.pairs[b].target.size() + corpus.pairs[b].source.size();
  });

  const std::size_t nBatches = (order.size() + batchSize - 1) / batchSize;
  std::vector<std::size_t> batchOrder(nBatches);
  std::iota(batchOrder.begin(), batchOrder.end(), 0);
  auto rng = substream(shuffleSeed, "shuffle/batches");
  for (std::size_t i = nBatches; i > 1; --i) {
    auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1));
    std::swap(batchOrder[i - 1], batchOrder[j]);
  }

  std::vector<Batch> batches;
  batches.reserve(nBatches);
  for (std::size_t b : batchOrder) {
    const std::size_t lo = b * batchSize;
    const std::size_t hi = std::min(lo + batchSize, order.size());
    Batch batch;
    std::size_t maxSrc = 0, maxTgt = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& pair = corpus.pairs[order[i]];
      maxSrc = std::max(maxSrc, pair.source.size());
      maxTgt = std::max(maxTgt, pair.target.size() + 1);  // + terminator
    }
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& pair = corpus.pairs[order[i]];
      TokenSeq src = vocab.map_from_corpus(pair.source);
      TokenSeq tgt = vocab.map_from_corpus(pair.target);
      TokenSeq gold = encode_target(tgt, vocab);

      src.resize(maxSrc, Vocab::kPad);
      TokenSeq input;
      input.reserve(maxTgt);
      input.push_back(Vocab::kBos);
      input.insert(input.end(), tgt.begin(), tgt.end());
      input.resize(maxTgt, Vocab::kPad);

      std::vector<bool> mask(maxTgt, false);
      for (std::size_t p = 0; p < gold.size(); ++p) mask[p] = true;
      gold.resize(maxTgt, Vocab::kPad);

      batch.source.push_back(std::move(src));
      batch.targetInput.push_back(std::move(input));
      batch.targetGold.push_back(std::move(gold));
      batch.lossMask.push_back(std::move(mask));
      batch.sourceLen.push_back(static_cast<int>(pair.source.size()));
      batch.targetLen.push_back(static_cast<int>(pair.target.size()));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace eoslab
