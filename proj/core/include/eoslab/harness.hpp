#pragma once

#include "eoslab/checkpoint.hpp"
#include "eoslab/metrics.hpp"

namespace eoslab {

// One experiment: data generation knobs, model/training settings, and the
// evaluation grid. Serialized as JSON; the canonical dump is hashed into
// run_id for provenance.
struct ExperimentConfig {
  GenSpec gen;
  int testPairCount = 200;
  EosMode eosMode = EosMode::Single;
  int lMax = 32;
  ModelConfig model;
  int trainSteps = 3000;
  OptimizerSpec opt;
  std::vector<int> beams = {1};
  std::vector<double> keepFractions;
  std::string outDir = ".";
  std::uint64_t seed = 0;

  void validate() const;
  std::string canonical_json() const;
  std::string run_id() const;
  Vocab vocab() const { return Vocab::build(gen.sourceAlphabetSize, eosMode, lMax); }

  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

// Writes train.txt, test.txt, length_model.csv and vocab.json under outDir.
// Train and test are a deterministic split of one generated corpus, so
// they share the token bijection.
void cmd_gen(const ExperimentConfig& config, const std::string& outDir);

// Trains per config on corpusPath; writes the checkpoint and a loss curve
// CSV next to it. resumeFrom continues an earlier checkpoint.
void cmd_train(const ExperimentConfig& config, const std::string& corpusPath,
               const std::string& checkpointPath, const std::string& resumeFrom = "");

// One MetricsReport row per beam size; writes metrics.csv, per-beam decode
// JSON-lines and optional trace files under outDir.
std::vector<MetricsReport> cmd_eval(const std::string& checkpointPath,
                                    const std::string& testCorpusPath,
                                    const std::vector<int>& beams,
                                    const std::string& outDir, bool trace = false);

void cmd_filter(const std::string& corpusPath, double keepFraction,
                const std::string& outPath);

// Merges metrics CSVs into one aligned text table.
std::string cmd_report(const std::vector<std::string>& csvPaths);

}  // namespace eoslab
