// eoslab command-line driver: gen / train / eval / filter / report.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eoslab/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"eoslab: a desk-scale lab for sequence-to-sequence length bias"};
  app.require_subcommand(1);

  std::string configPath, outPath, corpusPath, checkpointPath, testPath, resumeFrom;
  std::vector<int> beams;
  double keepFraction = 0.75;
  bool trace = false;
  std::vector<std::string> reportInputs;

  auto* gen = app.add_subcommand("gen", "generate train/test corpora and the length model");
  gen->add_option("--config", configPath, "experiment config JSON")->required();
  gen->add_option("--out", outPath, "output directory (default: config out_dir)");

  auto* train = app.add_subcommand("train", "train a model on a corpus file");
  train->add_option("--config", configPath)->required();
  train->add_option("--corpus", corpusPath, "training corpus file")->required();
  train->add_option("--out", outPath, "checkpoint output path")->required();
  train->add_option("--resume", resumeFrom, "checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "decode a test set and emit metrics");
  eval->add_option("--checkpoint", checkpointPath)->required();
  eval->add_option("--corpus", testPath, "test corpus file")->required();
  eval->add_option("--beam", beams, "beam size (repeatable)")->required();
  eval->add_option("--out", outPath, "output directory")->required();
  eval->add_flag("--trace", trace, "write per-step decode traces");

  auto* filter = app.add_subcommand("filter", "drop infrequent target lengths per source length");
  filter->add_option("--corpus", corpusPath)->required();
  filter->add_option("--keep-fraction", keepFraction)->required();
  filter->add_option("--out", outPath)->required();

  auto* report = app.add_subcommand("report", "merge metrics CSVs into one table");
  report->add_option("csvs", reportInputs, "metrics.csv files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto config = eoslab::ExperimentConfig::load(configPath);
      eoslab::cmd_gen(config, outPath.empty() ? config.outDir : outPath);
    } else if (train->parsed()) {
      auto config = eoslab::ExperimentConfig::load(configPath);
      eoslab::cmd_train(config, corpusPath, outPath, resumeFrom);
    } else if (eval->parsed()) {
      eoslab::cmd_eval(checkpointPath, testPath, beams, outPath, trace);
    } else if (filter->parsed()) {
      eoslab::cmd_filter(corpusPath, keepFraction, outPath);
    } else if (report->parsed()) {
      std::cout << eoslab::cmd_report(reportInputs);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
