#include "eoslab/harness.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eoslab/io.hpp"
#include "eoslab/rng.hpp"

namespace eoslab {

using nlohmann::json;
namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  gen.validate();
  model.validate();
  if (testPairCount < 1) throw EoslabError("config: test_pair_count < 1");
  if (trainSteps < 0) throw EoslabError("config: train_steps < 0");
  if (beams.empty()) throw EoslabError("config: beams empty");
  for (int k : beams)
    if (k < 1) throw EoslabError("config: beam size < 1");
  for (double f : keepFractions)
    if (!(f > 0.0 && f <= 1.0)) throw EoslabError("config: keep fraction outside (0,1]");
  if (eosMode == EosMode::Multi && lMax < gen.mMax + gen.maxDelta)
    throw EoslabError("config: l_max below the maximum generated target length");
}

std::string ExperimentConfig::canonical_json() const {
  json j;
  j["seed"] = seed;
  j["out_dir"] = outDir;
  j["gen"] = {{"source_alphabet", gen.sourceAlphabetSize},
              {"target_alphabet", gen.targetAlphabetSize},
              {"m_min", gen.mMin},
              {"m_max", gen.mMax},
              {"sigma", gen.lengthNoise},
              {"max_delta", gen.maxDelta},
              {"pair_count", gen.pairCount},
              {"seed", gen.seed}};
  j["test_pair_count"] = testPairCount;
  j["eos_mode"] = eosMode == EosMode::Single ? "single" : "multi";
  j["l_max"] = lMax;
  j["model"] = json::parse(model_config_to_json(model));
  j["train_steps"] = trainSteps;
  j["optimizer"] = {{"lr", opt.lr},       {"beta1", opt.beta1},
                    {"beta2", opt.beta2}, {"eps", opt.eps},
                    {"warmup_steps", opt.warmupSteps}, {"batch_size", opt.batchSize}};
  j["beams"] = beams;
  j["keep_fractions"] = keepFractions;
  return j.dump();  // nlohmann sorts object keys: canonical
}

std::string ExperimentConfig::run_id() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(canonical_json());
  return os.str();
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw EoslabError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig c;
  c.seed = j.value("seed", std::uint64_t{0});
  c.outDir = j.value("out_dir", std::string("."));
  if (j.contains("gen")) {
    const auto& g = j["gen"];
    c.gen.sourceAlphabetSize = g.value("source_alphabet", c.gen.sourceAlphabetSize);
    c.gen.targetAlphabetSize = g.value("target_alphabet", c.gen.targetAlphabetSize);
    c.gen.mMin = g.value("m_min", c.gen.mMin);
    c.gen.mMax = g.value("m_max", c.gen.mMax);
    c.gen.lengthNoise = g.value("sigma", c.gen.lengthNoise);
    c.gen.maxDelta = g.value("max_delta", c.gen.maxDelta);
    c.gen.pairCount = g.value("pair_count", c.gen.pairCount);
    c.gen.seed = g.value("seed", std::uint64_t{0});
  }
  c.testPairCount = j.value("test_pair_count", c.testPairCount);
  const std::string mode = j.value("eos_mode", std::string("single"));
  if (mode == "single")
    c.eosMode = EosMode::Single;
  else if (mode == "multi")
    c.eosMode = EosMode::Multi;
  else
    throw EoslabError("config: unknown eos_mode '" + mode + "'");
  c.lMax = j.value("l_max", c.lMax);
  if (j.contains("model")) {
    const auto& m = j["model"];
    c.model.dModel = m.value("d_model", c.model.dModel);
    c.model.nHeads = m.value("n_heads", c.model.nHeads);
    c.model.nLayers = m.value("n_layers", c.model.nLayers);
    c.model.dFFN = m.value("d_ffn", c.model.dFFN);
    c.model.maxLen = m.value("max_len", c.model.maxLen);
    c.model.labelSmoothing = m.value("label_smoothing", c.model.labelSmoothing);
    c.model.dropout = m.value("dropout", c.model.dropout);
    c.model.seed = m.value("seed", std::uint64_t{0});
    const std::string policy = m.value("eos_smoothing_policy", std::string("auto"));
    if (policy == "standard")
      c.model.eosSmoothingPolicy = SmoothingPolicy::Standard;
    else if (policy == "exclude_eos_gold")
      c.model.eosSmoothingPolicy = SmoothingPolicy::ExcludeEosGold;
    else if (policy == "auto")
      c.model.eosSmoothingPolicy = c.eosMode == EosMode::Multi
                                       ? SmoothingPolicy::ExcludeEosGold
                                       : SmoothingPolicy::Standard;
    else
      throw EoslabError("config: unknown eos_smoothing_policy '" + policy + "'");
  } else {
    c.model.eosSmoothingPolicy = c.eosMode == EosMode::Multi
                                     ? SmoothingPolicy::ExcludeEosGold
                                     : SmoothingPolicy::Standard;
  }
  c.trainSteps = j.value("train_steps", c.trainSteps);
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    c.opt.lr = o.value("lr", c.opt.lr);
    c.opt.beta1 = o.value("beta1", c.opt.beta1);
    c.opt.beta2 = o.value("beta2", c.opt.beta2);
    c.opt.eps = o.value("eps", c.opt.eps);
    c.opt.warmupSteps = o.value("warmup_steps", c.opt.warmupSteps);
    c.opt.batchSize = o.value("batch_size", c.opt.batchSize);
  }
  if (j.contains("beams")) c.beams = j["beams"].get<std::vector<int>>();
  if (j.contains("keep_fractions"))
    c.keepFractions = j["keep_fractions"].get<std::vector<double>>();

  // Named sub-seeds flow from the global seed unless pinned explicitly.
  if (c.gen.seed == 0) c.gen.seed = splitmix64(c.seed ^ fnv1a("data"));
  if (c.model.seed == 0) c.model.seed = splitmix64(c.seed ^ fnv1a("init"));
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_json(read_file(path));
}

void cmd_gen(const ExperimentConfig& config, const std::string& outDir) {
  fs::create_directories(outDir);
  GenSpec full = config.gen;
  full.pairCount = config.gen.pairCount + config.testPairCount;
  Corpus all = generate_corpus(full);

  Corpus train, test;
  train.seed = test.seed = full.seed;
  train.split = "train";
  test.split = "test";
  train.pairs.assign(all.pairs.begin(), all.pairs.begin() + config.gen.pairCount);
  test.pairs.assign(all.pairs.begin() + config.gen.pairCount, all.pairs.end());

  save_corpus(train, outDir + "/train.txt", config.gen.canonical_string());
  save_corpus(test, outDir + "/test.txt", config.gen.canonical_string() + ",split=test");
  estimate_length_model(train).save_csv(outDir + "/length_model.csv");
  atomic_write_file(outDir + "/vocab.json", config.vocab().to_json() + "\n");
}

void cmd_train(const ExperimentConfig& config, const std::string& corpusPath,
               const std::string& checkpointPath, const std::string& resumeFrom) {
  const Corpus corpus = load_corpus(corpusPath);
  const Vocab vocab = Vocab::build(corpus, config.gen.sourceAlphabetSize,
                                   config.eosMode, config.lMax);

  Checkpoint ckpt;
  if (resumeFrom.empty()) {
    ckpt.config = config.model;
    ckpt.eosMode = config.eosMode;
    ckpt.lMax = config.lMax;
    ckpt.contentTokens = config.gen.sourceAlphabetSize;
    ckpt.state = init_train_state(config.model, vocab);
  } else {
    ckpt = load_checkpoint(resumeFrom);
    if (ckpt.eosMode != config.eosMode || ckpt.contentTokens != config.gen.sourceAlphabetSize)
      throw EoslabError("resume checkpoint is incompatible with the config");
  }

  std::ostringstream lossLog;
  lossLog << "step,loss\n";
  lossLog.precision(17);
  train_steps(ckpt.state, ckpt.config, corpus, vocab, config.trainSteps, config.opt,
              [&](long step, double loss) { lossLog << step << "," << loss << "\n"; });

  const double qppl =
      length_model_perplexity(estimate_length_model(corpus), corpus);
  std::ostringstream qs;
  qs.precision(17);
  qs << qppl;
  ckpt.meta["q_perplexity"] = qs.str();
  std::ostringstream ss;
  ss << config.gen.lengthNoise;
  ckpt.meta["sigma"] = ss.str();
  ckpt.meta["run_id"] = config.run_id();

  save_checkpoint(checkpointPath, ckpt);
  atomic_write_file(checkpointPath + ".loss.csv", lossLog.str());
}

std::vector<MetricsReport> cmd_eval(const std::string& checkpointPath,
                                    const std::string& testCorpusPath,
                                    const std::vector<int>& beams,
                                    const std::string& outDir, bool trace) {
  Checkpoint ckpt = load_checkpoint(checkpointPath);
  const Vocab vocab = ckpt.vocab();
  const ModelConfig& mc = ckpt.config;
  const Parameters& params = ckpt.state.params;
  const Corpus test = load_corpus(testCorpusPath);
  fs::create_directories(outDir);

  std::vector<TokenSeq> sources, references;
  for (const auto& pair : test.pairs) {
    sources.push_back(vocab.map_from_corpus(pair.source));
    references.push_back(vocab.map_from_corpus(pair.target));
  }

  MetricsReport base;
  base.runId = ckpt.meta.count("run_id") ? ckpt.meta.at("run_id") : "unknown";
  base.eosMode = ckpt.eosMode == EosMode::Single ? "single" : "multi";
  base.epsilon = mc.labelSmoothing;
  base.sigma = ckpt.meta.count("sigma") ? std::stod(ckpt.meta.at("sigma")) : 0.0;
  base.qPerplexity =
      ckpt.meta.count("q_perplexity")
          ? std::stod(ckpt.meta.at("q_perplexity"))
          : length_model_perplexity(estimate_length_model(test), test);

  const FirstPositionStats fp = first_position_stats(params, mc, sources, vocab);
  base.minFirstTokenLogP = fp.minFirstTokenLogP;
  base.eosFirstLogP = fp.eosFirstLogP;
  base.refAvgTokenLogP = reference_avg_logprob(params, mc, test, vocab);
  base.taskAccuracy = task_accuracy(params, mc, test, vocab);

  std::vector<MetricsReport> rows;
  std::ostringstream csv;
  csv << MetricsReport::csv_header() << "\n";
  for (int k : beams) {
    MetricsReport row = base;
    row.beamK = k;

    std::ostringstream decodesOut, traceOut;
    std::vector<Hypothesis> outputs;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const int maxSteps = default_max_steps(static_cast<int>(sources[i].size()));
      TraceFn traceFn;
      if (trace) {
        traceFn = [&](int step, const TokenSeq& prefix, TokenId chosen, double logpStep,
                      double logpCum) {
          json rec{{"step", step},         {"prefix_ids", prefix},
                   {"chosen_id", chosen},  {"logp_step", logpStep},
                   {"logp_cum", logpCum},  {"source_index", i}};
          traceOut << rec.dump() << "\n";
        };
      }
      DecodeResult result =
          beam_decode(params, mc, vocab, sources[i], k, maxSteps, traceFn);
      decodesOut << decode_result_to_json(result, sources[i]) << "\n";
      if (!result.hypotheses.empty())
        outputs.push_back(result.hypotheses.front());
      else  // nothing finished within maxSteps; fall back to the greedy prefix
        outputs.push_back(greedy_decode(params, mc, vocab, sources[i], maxSteps));
    }

    row.lengthRatio = length_ratio(outputs, references);
    row.emptyRatio = empty_ratio(outputs);
    rows.push_back(row);
    csv << row.csv_row() << "\n";

    atomic_write_file(outDir + "/decodes_beam" + std::to_string(k) + ".jsonl",
                      decodesOut.str());
    if (trace)
      atomic_write_file(outDir + "/trace_beam" + std::to_string(k) + ".jsonl",
                        traceOut.str());
  }
  atomic_write_file(outDir + "/metrics.csv", csv.str());
  return rows;
}

void cmd_filter(const std::string& corpusPath, double keepFraction,
                const std::string& outPath) {
  const Corpus corpus = load_corpus(corpusPath);
  const Corpus filtered = filter_by_length_percentile(corpus, keepFraction);
  std::ostringstream spec;
  spec << "filtered:keep=" << keepFraction;
  save_corpus(filtered, outPath, spec.str());
}

std::string cmd_report(const std::vector<std::string>& csvPaths) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& path : csvPaths) {
    std::istringstream in(read_file(path));
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (first) {
        first = false;
        if (line != MetricsReport::csv_header())
          throw EoslabError("unexpected metrics header in " + path);
        continue;
      }
      std::vector<std::string> cells;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      rows.push_back(std::move(cells));
    }
  }

  std::vector<std::string> header;
  {
    std::istringstream hs(MetricsReport::csv_header());
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  std::vector<std::size_t> widths(header.size());
  auto fmtCell = [](const std::string& s) {
    // Trim long float reprs for display.
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos == s.size() && s.find('.') != std::string::npos) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(4) << v;
        return os.str();
      }
    } catch (...) {
    }
    return s;
  };
  std::vector<std::vector<std::string>> display;
  for (const auto& row : rows) {
    std::vector<std::string> d;
    for (const auto& cell : row) d.push_back(fmtCell(cell));
    display.push_back(std::move(d));
  }
  for (std::size_t c = 0; c < header.size(); ++c) {
    widths[c] = header[c].size();
    for (const auto& row : display)
      if (c < row.size()) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream os;
  for (std::size_t c = 0; c < header.size(); ++c)
    os << std::left << std::setw(static_cast<int>(widths[c]) + 2) << header[c];
  os << "\n";
  for (const auto& row : display) {
    for (std::size_t c = 0; c < row.size(); ++c)
      os << std::left << std::setw(static_cast<int>(widths[c]) + 2) << row[c];
    os << "\n";
  }
  return os.str();
}

}  // namespace eoslab
