#pragma once

#include <string>
#include <vector>

#include "eoslab/corpus.hpp"

namespace eoslab {

enum class EosMode { Single, Multi };

// Token id layout: [PAD]=0, [BOS]=1, content tokens t0..t{C-1} at 2..C+1,
// then the EoS family ([EOS], or [EOS-0]..[EOS-Lmax] contiguous).
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;

  static Vocab build(int contentTokens, EosMode mode, int lMax);
  // Checks corpus target lengths against lMax in Multi mode.
  static Vocab build(const Corpus& corpus, int contentTokens, EosMode mode, int lMax);

  int size() const { return size_; }
  EosMode eos_mode() const { return mode_; }
  int l_max() const { return lMax_; }
  TokenId eos_family_start() const { return eosStart_; }
  int eos_family_size() const { return mode_ == EosMode::Single ? 1 : lMax_ + 1; }

  bool is_eos(TokenId id) const {
    return id >= eosStart_ && id < eosStart_ + eos_family_size();
  }
  // Terminator for a length-l target; [EOS-0] encodes the empty translation.
  TokenId eos_for_length(int l) const;
  bool is_content(TokenId id) const { return id >= 2 && id < eosStart_; }
  TokenId content_id(int k) const { return 2 + k; }
  int content_count() const { return eosStart_ - 2; }

  // Corpus files store raw content indices 0..C-1; the model works in
  // vocab-space ids. Throws on out-of-range input.
  TokenSeq map_from_corpus(const TokenSeq& raw) const;
  TokenSeq map_to_corpus(const TokenSeq& ids) const;

  std::string token_string(TokenId id) const;
  std::string to_json() const;

 private:
  EosMode mode_ = EosMode::Single;
  int lMax_ = 0;
  TokenId eosStart_ = 0;
  int size_ = 0;
};

struct Batch {
  // Row-major [sentence][position] id matrices; -1 is never used, PAD fills.
  std::vector<TokenSeq> source;       // padded with kPad
  std::vector<TokenSeq> targetInput;  // BOS + content, padded
  std::vector<TokenSeq> targetGold;   // content + terminator, padded
  std::vector<std::vector<bool>> lossMask;
  std::vector<int> sourceLen;
  std::vector<int> targetLen;  // content length l per sentence
  int size() const { return static_cast<int>(source.size()); }
};

// Appends the terminator: eos_for_length(l) in Multi mode, [EOS] otherwise.
TokenSeq encode_target(const TokenSeq& target, const Vocab& vocab);

// Length-sorted batching (minimal padding), batch order shuffled by seed;
// every pair appears exactly once per epoch.
std::vector<Batch> make_batches(const Corpus& corpus, const Vocab& vocab,
                                int batchSize, std::uint64_t shuffleSeed);

}  // namespace eoslab
