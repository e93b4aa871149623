#include "eoslab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "eoslab/io.hpp"
#include "eoslab/rng.hpp"

namespace eoslab {

void GenSpec::validate() const {
  if (sourceAlphabetSize != targetAlphabetSize)
    throw EoslabError("GenSpec: source/target alphabet sizes must match (token bijection)");
  if (sourceAlphabetSize < 1) throw EoslabError("GenSpec: alphabet size < 1");
  if (mMin < 1) throw EoslabError("GenSpec: mMin < 1");
  if (mMin > mMax) throw EoslabError("GenSpec: mMin > mMax");
  if (lengthNoise < 0.0) throw EoslabError("GenSpec: sigma < 0");
  if (maxDelta < 0) throw EoslabError("GenSpec: maxDelta < 0");
  if (pairCount < 1) throw EoslabError("GenSpec: pairCount < 1");
}

std::string GenSpec::canonical_string() const {
  std::ostringstream os;
  os << "srcA=" << sourceAlphabetSize << ",tgtA=" << targetAlphabetSize
     << ",mMin=" << mMin << ",mMax=" << mMax << ",sigma=" << lengthNoise
     << ",D=" << maxDelta << ",n=" << pairCount << ",seed=" << seed;
  return os.str();
}

void LengthModel::add(int m, int l, std::int64_t n) {
  counts_[m][l] += n;
  marginals_[m] += n;
}

std::int64_t LengthModel::count(int m, int l) const {
  auto it = counts_.find(m);
  if (it == counts_.end()) return 0;
  auto jt = it->second.find(l);
  return jt == it->second.end() ? 0 : jt->second;
}

std::int64_t LengthModel::marginal(int m) const {
  auto it = marginals_.find(m);
  return it == marginals_.end() ? 0 : it->second;
}

double LengthModel::prob(int l, int m) const {
  std::int64_t denom = marginal(m);
  if (denom == 0) throw EoslabError("LengthModel: unseen source length m=" + std::to_string(m));
  return static_cast<double>(count(m, l)) / static_cast<double>(denom);
}

void LengthModel::save_csv(const std::string& path) const {
  std::ostringstream os;
  os << "m,l,count\n";
  for (const auto& [m, row] : counts_)
    for (const auto& [l, c] : row) os << m << "," << l << "," << c << "\n";
  atomic_write_file(path, os.str());
}

LengthModel LengthModel::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EoslabError("cannot open length-model csv: " + path);
  LengthModel model;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int m, l;
    long long c;
    char comma;
    std::istringstream ls(line);
    if (!(ls >> m >> comma >> l >> comma >> c))
      throw EoslabError("bad length-model csv line: " + line);
    model.add(m, l, c);
  }
  return model;
}

namespace {

// Seed-determined bijection over the content alphabet.
std::vector<int> make_permutation(int n, std::mt19937_64& rng) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(uniform_int(rng, 0, i));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

}  // namespace

Corpus generate_corpus(const GenSpec& spec) {
  spec.validate();
  auto piRng = substream(spec.seed, "data/bijection");
  const std::vector<int> pi = make_permutation(spec.sourceAlphabetSize, piRng);
  auto rng = substream(spec.seed, "data/pairs");

  // Length-delta weights, |d| <= D, P(d) ~ exp(-|d|/sigma).
  std::vector<double> deltaWeights;
  const int D = spec.lengthNoise == 0.0 ? 0 : spec.maxDelta;
  for (int d = -D; d <= D; ++d)
    deltaWeights.push_back(spec.lengthNoise == 0.0
                               ? 1.0
                               : std::exp(-std::abs(d) / spec.lengthNoise));

  Corpus corpus;
  corpus.seed = spec.seed;
  corpus.pairs.reserve(spec.pairCount);
  for (int p = 0; p < spec.pairCount; ++p) {
    SentencePair pair;
    const int m = static_cast<int>(uniform_int(rng, spec.mMin, spec.mMax));
    pair.source.resize(m);
    for (int i = 0; i < m; ++i)
      pair.source[i] = static_cast<int>(uniform_int(rng, 0, spec.sourceAlphabetSize - 1));

    pair.target.resize(m);
    for (int i = 0; i < m; ++i) pair.target[i] = pi[pair.source[i]];

    const int delta = static_cast<int>(discrete(rng, deltaWeights)) - D;
    const int l = std::max(1, m + delta);
    while (static_cast<int>(pair.target.size()) > l) {
      auto pos = uniform_int(rng, 0, static_cast<std::int64_t>(pair.target.size()) - 1);
      pair.target.erase(pair.target.begin() + pos);
    }
    while (static_cast<int>(pair.target.size()) < l) {
      auto pos = uniform_int(rng, 0, static_cast<std::int64_t>(pair.target.size()) - 1);
      pair.target.insert(pair.target.begin() + pos, pair.target[pos]);
    }
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

LengthModel estimate_length_model(const Corpus& corpus) {
  if (corpus.pairs.empty()) throw EoslabError("estimate_length_model: empty corpus");
  LengthModel model;
  for (const auto& pair : corpus.pairs)
    model.add(static_cast<int>(pair.source.size()),
              static_cast<int>(pair.target.size()));
  return model;
}

double length_model_perplexity(const LengthModel& model, const Corpus& corpus) {
  if (corpus.pairs.empty()) throw EoslabError("length_model_perplexity: empty corpus");
  double sumLog = 0.0;
  for (const auto& pair : corpus.pairs) {
    const int m = static_cast<int>(pair.source.size());
    const int l = static_cast<int>(pair.target.size());
    const double q = model.prob(l, m);
    if (q <= 0.0)
      throw EoslabError("length_model_perplexity: Q(l|m)=0 for (m=" + std::to_string(m) +
                        ",l=" + std::to_string(l) + "); model/corpus mismatch");
    sumLog += std::log(q);
  }
  return std::exp(-sumLog / static_cast<double>(corpus.pairs.size()));
}

Corpus filter_by_length_percentile(const Corpus& corpus, double keepFraction) {
  if (corpus.pairs.empty()) throw EoslabError("filter: empty corpus");
  if (!(keepFraction > 0.0 && keepFraction <= 1.0))
    throw EoslabError("filter: keepFraction must be in (0,1]");

  LengthModel model = estimate_length_model(corpus);
  // Per source length, the set of kept target lengths.
  std::map<int, std::vector<int>> kept;
  for (const auto& [m, row] : model.counts()) {
    std::vector<std::pair<int, std::int64_t>> ranked(row.begin(), row.end());
    std::sort(ranked.begin(), ranked.end(), [m](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      const int da = std::abs(a.first - m), db = std::abs(b.first - m);
      if (da != db) return da < db;
      return a.first < b.first;
    });
    const double total = static_cast<double>(model.marginal(m));
    double mass = 0.0;
    for (const auto& [l, c] : ranked) {
      kept[m].push_back(l);
      mass += static_cast<double>(c) / total;
      if (mass >= keepFraction) break;
    }
  }

  Corpus out;
  out.split = corpus.split;
  out.seed = corpus.seed;
  for (const auto& pair : corpus.pairs) {
    const auto& lengths = kept[static_cast<int>(pair.source.size())];
    const int l = static_cast<int>(pair.target.size());
    if (std::find(lengths.begin(), lengths.end(), l) != lengths.end())
      out.pairs.push_back(pair);
  }
  if (out.pairs.empty()) throw EoslabError("filter: all pairs removed");
  return out;
}

void save_corpus(const Corpus& corpus, const std::string& path,
                 const std::string& specString) {
  std::ostringstream os;
  os << "# seed=" << corpus.seed << " spec=" << specString << "\n";
  for (const auto& pair : corpus.pairs) {
    for (std::size_t i = 0; i < pair.source.size(); ++i)
      os << (i ? " " : "") << pair.source[i];
    os << "\t";
    for (std::size_t i = 0; i < pair.target.size(); ++i)
      os << (i ? " " : "") << pair.target[i];
    os << "\n";
  }
  atomic_write_file(path, os.str());
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EoslabError("cannot open corpus file: " + path);
  Corpus corpus;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto pos = line.find("seed=");
      if (pos != std::string::npos)
        corpus.seed = std::strtoull(line.c_str() + pos + 5, nullptr, 10);
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw EoslabError("corpus line " + std::to_string(lineNo) + ": missing tab");
    SentencePair pair;
    auto parse = [&](const std::string& s, TokenSeq& out) {
      std::istringstream ts(s);
      int id;
      while (ts >> id) out.push_back(id);
    };
    parse(line.substr(0, tab), pair.source);
    parse(line.substr(tab + 1), pair.target);
    if (pair.source.empty() || pair.target.empty())
      throw EoslabError("corpus line " + std::to_string(lineNo) + ": empty side");
    corpus.pairs.push_back(std::move(pair));
  }
  if (corpus.pairs.empty()) throw EoslabError("corpus file has no pairs: " + path);
  return corpus;
}

}  // namespace eoslab
