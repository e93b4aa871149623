#include <benchmark/benchmark.h>

#include "eoslab/decode.hpp"
#include "eoslab/train.hpp"

namespace {

using namespace eoslab;

struct Fixture {
  GenSpec gen;
  Corpus corpus;
  Vocab vocab;
  ModelConfig config;
  Parameters params;
  std::vector<Batch> batches;

  Fixture() : vocab(Vocab::build(16, EosMode::Single, 16)) {
    gen.sourceAlphabetSize = gen.targetAlphabetSize = 16;
    gen.mMin = 4;
    gen.mMax = 12;
    gen.lengthNoise = 1.0;
    gen.maxDelta = 2;
    gen.pairCount = 256;
    gen.seed = 7;
    corpus = generate_corpus(gen);
    config.dModel = 32;
    config.seed = 7;
    params = init_parameters(config, vocab);
    batches = make_batches(corpus, vocab, 32, 7);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_CorpusGeneration(benchmark::State& state) {
  GenSpec spec = fixture().gen;
  spec.pairCount = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Corpus c = generate_corpus(spec);
    benchmark::DoNotOptimize(c.pairs.data());
  }
  state.SetItemsProcessed(state.iterations() * spec.pairCount);
}
BENCHMARK(BM_CorpusGeneration)->Arg(1000)->Arg(10000);

void BM_TeacherForcedForward(benchmark::State& state) {
  auto& f = fixture();
  const auto& pair = f.corpus.pairs.front();
  const TokenSeq src = f.vocab.map_from_corpus(pair.source);
  const TokenSeq tgt = f.vocab.map_from_corpus(pair.target);
  for (auto _ : state) {
    auto dists = forward(f.params, f.config, src, tgt);
    benchmark::DoNotOptimize(dists.data());
  }
}
BENCHMARK(BM_TeacherForcedForward);

void BM_LossAndGradients(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    double loss = loss_and_gradients(f.params, f.batches.front(), f.config, f.vocab);
    benchmark::DoNotOptimize(loss);
  }
}
BENCHMARK(BM_LossAndGradients);

void BM_BeamDecode(benchmark::State& state) {
  auto& f = fixture();
  const TokenSeq src = f.vocab.map_from_corpus(f.corpus.pairs.front().source);
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto result = beam_decode(f.params, f.config, f.vocab, src, k,
                              default_max_steps(static_cast<int>(src.size())));
    benchmark::DoNotOptimize(result.hypotheses.data());
  }
}
BENCHMARK(BM_BeamDecode)->Arg(1)->Arg(4)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
