#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "eoslab/harness.hpp"
#include "eoslab/io.hpp"

using namespace eoslab;
namespace fs = std::filesystem;

namespace {

// Small end-to-end configuration that trains in a couple of seconds.
std::string small_config_json(double sigma = 1.0, const std::string& mode = "single") {
  std::ostringstream os;
  os << R"({
    "seed": 7,
    "gen": {"source_alphabet": 8, "target_alphabet": 8,
            "m_min": 2, "m_max": 5, "sigma": )"
     << sigma << R"(, "max_delta": 2, "pair_count": 64},
    "test_pair_count": 16,
    "eos_mode": ")"
     << mode << R"(",
    "l_max": 8,
    "model": {"d_model": 8, "n_heads": 2, "n_layers": 1, "d_ffn": 16,
              "max_len": 32, "label_smoothing": 0.1},
    "train_steps": 30,
    "optimizer": {"batch_size": 16, "warmup_steps": 10, "lr": 0.001},
    "beams": [1, 2]
  })";
  return os.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

}  // namespace

TEST_CASE("config parsing applies defaults and derives sub-seeds") {
  const ExperimentConfig c = ExperimentConfig::from_json(small_config_json());
  CHECK(c.seed == 7);
  CHECK(c.gen.pairCount == 64);
  CHECK(c.gen.seed != 0);    // derived from the global seed
  CHECK(c.model.seed != 0);  // derived independently
  CHECK(c.gen.seed != c.model.seed);
  CHECK(c.model.labelSmoothing == doctest::Approx(0.1));
  CHECK(c.model.eosSmoothingPolicy == SmoothingPolicy::Standard);  // single-mode auto
  CHECK(c.beams == std::vector<int>({1, 2}));
  CHECK(c.trainSteps == 30);
  CHECK(c.opt.batchSize == 16);

  const ExperimentConfig m = ExperimentConfig::from_json(small_config_json(1.0, "multi"));
  CHECK(m.model.eosSmoothingPolicy == SmoothingPolicy::ExcludeEosGold);  // multi auto
}

TEST_CASE("config errors are explicit") {
  CHECK_THROWS_AS(ExperimentConfig::from_json("{nonsense"), EoslabError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"eos_mode": "triple"})"), EoslabError);
  // Multi mode must fit the longest generated target in the EoS family.
  std::string bad = small_config_json(1.0, "multi");
  bad.replace(bad.find("\"l_max\": 8"), 10, "\"l_max\": 3");
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), EoslabError);
}

TEST_CASE("run_id is stable and sensitive to every field") {
  const ExperimentConfig a = ExperimentConfig::from_json(small_config_json());
  const ExperimentConfig b = ExperimentConfig::from_json(small_config_json());
  CHECK(a.run_id() == b.run_id());
  CHECK(a.run_id().size() == 16);
  const ExperimentConfig c = ExperimentConfig::from_json(small_config_json(2.0));
  CHECK(a.run_id() != c.run_id());
  const ExperimentConfig d = ExperimentConfig::from_json(small_config_json(1.0, "multi"));
  CHECK(a.run_id() != d.run_id());
}

TEST_CASE("cmd_gen output is byte-identical across reruns and splits share the bijection") {
  const ExperimentConfig config = ExperimentConfig::from_json(small_config_json(0.0));
  TempDir dirA("eoslab_gen_a"), dirB("eoslab_gen_b");
  cmd_gen(config, dirA.path.string());
  cmd_gen(config, dirB.path.string());

  for (const char* name : {"train.txt", "test.txt", "length_model.csv", "vocab.json"}) {
    const std::string a = read_file(dirA / name);
    CHECK(a == read_file(dirB / name));
    CHECK(!a.empty());
  }

  // sigma=0: the per-token mapping recovered from train must agree with test.
  const Corpus train = load_corpus(dirA / "train.txt");
  const Corpus test = load_corpus(dirA / "test.txt");
  CHECK(train.pairs.size() == 64);
  CHECK(test.pairs.size() == 16);
  std::vector<int> mapping(8, -1);
  auto absorb = [&](const Corpus& c) {
    for (const auto& p : c.pairs)
      for (std::size_t i = 0; i < p.source.size(); ++i) {
        int& slot = mapping[p.source[i]];
        if (slot == -1)
          slot = p.target[i];
        else
          CHECK(slot == p.target[i]);
      }
  };
  absorb(train);
  absorb(test);
}

TEST_CASE("corpus header carries seed and spec") {
  const ExperimentConfig config = ExperimentConfig::from_json(small_config_json());
  TempDir dir("eoslab_gen_hdr");
  cmd_gen(config, dir.path.string());
  std::ifstream in(dir / "train.txt");
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("# seed=", 0) == 0);
  CHECK(header.find(" spec=") != std::string::npos);
}

TEST_CASE("train then eval produces pinned artifacts and coherent metrics") {
  const ExperimentConfig config = ExperimentConfig::from_json(small_config_json());
  TempDir dir("eoslab_train_eval");
  cmd_gen(config, dir.path.string());
  cmd_train(config, dir / "train.txt", dir / "model.ckpt");

  CHECK(fs::exists(dir / "model.ckpt"));
  const std::string loss = read_file(dir / "model.ckpt.loss.csv");
  CHECK(loss.rfind("step,loss\n", 0) == 0);
  // One line per step plus the header.
  CHECK(std::count(loss.begin(), loss.end(), '\n') == config.trainSteps + 1);

  const auto rows = cmd_eval(dir / "model.ckpt", dir / "test.txt", config.beams,
                             dir.path.string(), true);
  REQUIRE(rows.size() == 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].beamK == config.beams[i]);
    CHECK(rows[i].runId == config.run_id());
    CHECK(rows[i].eosMode == "single");
    CHECK(rows[i].epsilon == doctest::Approx(0.1));
    CHECK(rows[i].sigma == doctest::Approx(1.0));
    CHECK(rows[i].emptyRatio >= 0.0);
    CHECK(rows[i].emptyRatio <= 1.0);
    CHECK(rows[i].qPerplexity >= 1.0);
    CHECK(rows[i].minFirstTokenLogP <= rows[i].eosFirstLogP + 1e-12);
  }
  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(fs::exists(dir / "decodes_beam1.jsonl"));
  CHECK(fs::exists(dir / "decodes_beam2.jsonl"));
  CHECK(fs::exists(dir / "trace_beam1.jsonl"));

  const std::string metrics = read_file(dir / "metrics.csv");
  CHECK(metrics.rfind(MetricsReport::csv_header(), 0) == 0);
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 3);

  // The report renders every row under the pinned header.
  const std::string report = cmd_report({dir / "metrics.csv"});
  CHECK(report.find("run_id") != std::string::npos);
  CHECK(report.find(config.run_id()) != std::string::npos);
}

TEST_CASE("a resumed run is bit-equal to an uninterrupted one") {
  ExperimentConfig config = ExperimentConfig::from_json(small_config_json());
  TempDir dir("eoslab_resume");
  cmd_gen(config, dir.path.string());

  cmd_train(config, dir / "train.txt", dir / "full.ckpt");

  ExperimentConfig half = config;
  half.trainSteps = 13;
  cmd_train(half, dir / "train.txt", dir / "half.ckpt");
  ExperimentConfig rest = config;
  rest.trainSteps = config.trainSteps - 13;
  cmd_train(rest, dir / "train.txt", dir / "resumed.ckpt", dir / "half.ckpt");

  Checkpoint full = load_checkpoint(dir / "full.ckpt");
  Checkpoint resumed = load_checkpoint(dir / "resumed.ckpt");
  CHECK(full.state.step == resumed.state.step);

  std::vector<const nn::Tensor*> a, b;
  for_each_tensor(full.state.params,
                  [&](const std::string&, nn::Tensor& t) { a.push_back(&t); });
  for_each_tensor(resumed.state.params,
                  [&](const std::string&, nn::Tensor& t) { b.push_back(&t); });
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK((a[i]->v - b[i]->v).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(full.state.adamM.size() == resumed.state.adamM.size());
  for (std::size_t i = 0; i < full.state.adamM.size(); ++i) {
    CHECK((full.state.adamM[i] - resumed.state.adamM[i]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((full.state.adamV[i] - resumed.state.adamV[i]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("checkpoint round trip preserves config, meta and tensors") {
  const ExperimentConfig config = ExperimentConfig::from_json(small_config_json());
  const Vocab vocab = config.vocab();
  Checkpoint ckpt;
  ckpt.config = config.model;
  ckpt.eosMode = config.eosMode;
  ckpt.lMax = config.lMax;
  ckpt.contentTokens = config.gen.sourceAlphabetSize;
  ckpt.state = init_train_state(config.model, vocab);
  ckpt.state.step = 42;
  ckpt.meta["run_id"] = "deadbeefdeadbeef";

  TempDir dir("eoslab_ckpt");
  save_checkpoint(dir / "x.ckpt", ckpt);
  const Checkpoint loaded = load_checkpoint(dir / "x.ckpt");

  CHECK(loaded.config.dModel == config.model.dModel);
  CHECK(loaded.config.labelSmoothing == config.model.labelSmoothing);
  CHECK(loaded.eosMode == config.eosMode);
  CHECK(loaded.lMax == config.lMax);
  CHECK(loaded.contentTokens == config.gen.sourceAlphabetSize);
  CHECK(loaded.state.step == 42);
  CHECK(loaded.meta.at("run_id") == "deadbeefdeadbeef");
  CHECK((loaded.state.params.tgtEmb.v - ckpt.state.params.tgtEmb.v).cwiseAbs().maxCoeff() ==
        0.0);

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), EoslabError);
}

TEST_CASE("cmd_filter writes a loadable subset") {
  const ExperimentConfig config = ExperimentConfig::from_json(small_config_json(2.0));
  TempDir dir("eoslab_filter");
  cmd_gen(config, dir.path.string());
  cmd_filter(dir / "train.txt", 0.5, dir / "filtered.txt");

  const Corpus before = load_corpus(dir / "train.txt");
  const Corpus after = load_corpus(dir / "filtered.txt");
  CHECK(after.pairs.size() <= before.pairs.size());
  CHECK(!after.pairs.empty());
  const double pplBefore = length_model_perplexity(estimate_length_model(before), before);
  const double pplAfter = length_model_perplexity(estimate_length_model(after), after);
  CHECK(pplAfter <= pplBefore);
}
