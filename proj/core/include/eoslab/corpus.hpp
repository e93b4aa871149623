#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eoslab/error.hpp"

namespace eoslab {

using TokenId = int;
using TokenSeq = std::vector<TokenId>;

// One parallel pair. The stored target holds content tokens only; the
// terminator is appended at encoding time.
struct SentencePair {
  TokenSeq source;  // length m >= 1
  TokenSeq target;  // length l >= 1
};

struct Corpus {
  std::vector<SentencePair> pairs;
  std::string split = "train";
  std::uint64_t seed = 0;
};

// Synthetic-task knobs. sigma controls target-length uncertainty: the
// length delta is drawn with P(delta=d) proportional to exp(-|d|/sigma)
// over [-maxDelta, maxDelta], a point mass at 0 when sigma == 0.
struct GenSpec {
  int sourceAlphabetSize = 64;
  int targetAlphabetSize = 64;
  int mMin = 4;
  int mMax = 24;
  double lengthNoise = 0.0;  // sigma
  int maxDelta = 4;
  int pairCount = 1;
  std::uint64_t seed = 0;

  void validate() const;
  std::string canonical_string() const;
};

// Empirical conditional length distribution Q(l|m) as raw counts.
class LengthModel {
 public:
  void add(int m, int l, std::int64_t n = 1);
  std::int64_t count(int m, int l) const;
  std::int64_t marginal(int m) const;
  // Q(l|m); throws if m was never observed.
  double prob(int l, int m) const;
  const std::map<int, std::map<int, std::int64_t>>& counts() const { return counts_; }

  void save_csv(const std::string& path) const;
  static LengthModel load_csv(const std::string& path);

 private:
  std::map<int, std::map<int, std::int64_t>> counts_;   // m -> l -> count
  std::map<int, std::int64_t> marginals_;               // m -> count
};

Corpus generate_corpus(const GenSpec& spec);
LengthModel estimate_length_model(const Corpus& corpus);
double length_model_perplexity(const LengthModel& model, const Corpus& corpus);

// Keep, per source length m, the smallest most-frequent-first prefix of
// target lengths whose cumulative mass reaches keepFraction; drop the rest.
Corpus filter_by_length_percentile(const Corpus& corpus, double keepFraction);

// Line-oriented corpus file: "# seed=<n> spec=<str>" header, then one
// "src ids<TAB>tgt ids" line per pair.
void save_corpus(const Corpus& corpus, const std::string& path,
                 const std::string& specString);
Corpus load_corpus(const std::string& path);

}  // namespace eoslab
