#include <doctest.h>

#include <nlohmann/json.hpp>
#include <set>

#include "eoslab/rng.hpp"
#include "eoslab/vocab.hpp"

using namespace eoslab;

TEST_CASE("vocab layout and sizes") {
  Vocab single = Vocab::build(64, EosMode::Single, 32);
  CHECK(single.size() == 64 + 2 + 1);  // content + PAD/BOS + one EoS
  CHECK(single.eos_family_size() == 1);
  CHECK(single.is_eos(single.eos_for_length(0)));
  CHECK(single.eos_for_length(0) == single.eos_for_length(17));

  Vocab multi = Vocab::build(64, EosMode::Multi, 32);
  CHECK(multi.size() == 64 + 2 + 33);  // [EOS-0]..[EOS-32]
  CHECK(multi.eos_family_size() == 33);
  for (int l = 0; l <= 32; ++l) {
    const TokenId id = multi.eos_for_length(l);
    CHECK(multi.is_eos(id));
    CHECK(id == multi.eos_family_start() + l);
  }
  CHECK_THROWS_AS(multi.eos_for_length(33), EoslabError);
}

TEST_CASE("vocab rejects over-length corpus targets in Multi mode") {
  Corpus corpus;
  SentencePair p;
  p.source.assign(4, 0);
  p.target.assign(9, 0);
  corpus.pairs.push_back(p);
  CHECK_THROWS_AS(Vocab::build(corpus, 16, EosMode::Multi, 8), EoslabError);
  CHECK_NOTHROW(Vocab::build(corpus, 16, EosMode::Multi, 9));
  CHECK_NOTHROW(Vocab::build(corpus, 16, EosMode::Single, 8));
}

TEST_CASE("encode_target appends the right terminator") {
  Vocab single = Vocab::build(16, EosMode::Single, 16);
  Vocab multi = Vocab::build(16, EosMode::Multi, 16);

  const TokenSeq t2 = {single.content_id(7), single.content_id(9)};
  TokenSeq enc = encode_target(t2, single);
  REQUIRE(enc.size() == 3);
  CHECK(enc[0] == t2[0]);
  CHECK(enc[1] == t2[1]);
  CHECK(enc[2] == single.eos_for_length(0));

  enc = encode_target(t2, multi);
  CHECK(enc.back() == multi.eos_for_length(2));

  const TokenSeq t1 = {multi.content_id(5)};
  CHECK(encode_target(t1, multi).back() == multi.eos_for_length(1));

  CHECK_THROWS_AS(encode_target({}, multi), EoslabError);
  CHECK_THROWS_AS(encode_target(TokenSeq(17, multi.content_id(0)), multi), EoslabError);
}

TEST_CASE("encode_target round trip strips back to the input") {
  Vocab multi = Vocab::build(16, EosMode::Multi, 24);
  auto rng = substream(3, "test");
  for (int rep = 0; rep < 50; ++rep) {
    TokenSeq t;
    const int l = static_cast<int>(uniform_int(rng, 1, 20));
    for (int i = 0; i < l; ++i)
      t.push_back(multi.content_id(static_cast<int>(uniform_int(rng, 0, 15))));
    TokenSeq enc = encode_target(t, multi);
    enc.pop_back();
    CHECK(enc == t);
  }
}

namespace {

Corpus small_corpus(int n, std::uint64_t seed) {
  GenSpec spec;
  spec.sourceAlphabetSize = spec.targetAlphabetSize = 16;
  spec.mMin = 2;
  spec.mMax = 8;
  spec.lengthNoise = 1.0;
  spec.maxDelta = 2;
  spec.pairCount = n;
  spec.seed = seed;
  return generate_corpus(spec);
}

}  // namespace

TEST_CASE("make_batches covers every pair once with correct sizes") {
  Corpus corpus = small_corpus(10, 5);
  Vocab vocab = Vocab::build(16, EosMode::Single, 16);
  auto batches = make_batches(corpus, vocab, 4, 99);
  REQUIRE(batches.size() == 3);
  std::multiset<std::size_t> sizes;
  int total = 0;
  for (const auto& b : batches) {
    sizes.insert(b.source.size());
    total += b.size();
  }
  CHECK(total == 10);
  CHECK(sizes == std::multiset<std::size_t>({4, 4, 2}));
}

TEST_CASE("make_batches is deterministic per seed") {
  Corpus corpus = small_corpus(64, 5);
  Vocab vocab = Vocab::build(16, EosMode::Single, 16);
  auto a = make_batches(corpus, vocab, 8, 7);
  auto b = make_batches(corpus, vocab, 8, 7);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].source == b[i].source);
    CHECK(a[i].targetGold == b[i].targetGold);
  }
}

TEST_CASE("loss mask counts content plus terminator positions") {
  Corpus corpus;
  for (int l : {2, 3, 5}) {
    SentencePair p;
    p.source.assign(4, 1);
    p.target.assign(l, 2);
    corpus.pairs.push_back(p);
  }
  Vocab vocab = Vocab::build(16, EosMode::Single, 16);
  auto batches = make_batches(corpus, vocab, 3, 0);
  REQUIRE(batches.size() == 1);
  int maskCount = 0;
  for (const auto& mask : batches[0].lossMask)
    for (bool b : mask) maskCount += b ? 1 : 0;
  CHECK(maskCount == (2 + 1) + (3 + 1) + (5 + 1));
}

TEST_CASE("gold matrices never contain EOS-0 and terminate per length") {
  Corpus corpus = small_corpus(200, 8);
  Vocab vocab = Vocab::build(16, EosMode::Multi, 16);
  auto batches = make_batches(corpus, vocab, 16, 3);
  const TokenId eos0 = vocab.eos_for_length(0);
  for (const auto& batch : batches)
    for (int s = 0; s < batch.size(); ++s) {
      const int l = batch.targetLen[s];
      for (TokenId id : batch.targetGold[s]) CHECK(id != eos0);
      CHECK(batch.targetGold[s][l] == vocab.eos_for_length(l));
    }
}

TEST_CASE("vocab json export carries mode, l_max and token strings") {
  Vocab vocab = Vocab::build(4, EosMode::Multi, 3);
  auto j = nlohmann::json::parse(vocab.to_json());
  CHECK(j["eos_mode"] == "multi");
  CHECK(j["l_max"] == 3);
  CHECK(j["tokens"]["[PAD]"] == 0);
  CHECK(j["tokens"]["[BOS]"] == 1);
  CHECK(j["tokens"]["t0"] == 2);
  CHECK(j["tokens"]["[EOS-0]"] == vocab.eos_family_start());
  CHECK(j["tokens"]["[EOS-3]"] == vocab.eos_family_start() + 3);
  CHECK(j["tokens"].size() == static_cast<std::size_t>(vocab.size()));
}
