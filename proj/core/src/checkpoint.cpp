#include "eoslab/checkpoint.hpp"

#include <cstring>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eoslab/io.hpp"

namespace eoslab {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'E', 'O', 'S', 'L', 'A', 'B', '1', '\n'};

json config_json(const ModelConfig& c) {
  return json{{"d_model", c.dModel},
              {"n_heads", c.nHeads},
              {"n_layers", c.nLayers},
              {"d_ffn", c.dFFN},
              {"max_len", c.maxLen},
              {"label_smoothing", c.labelSmoothing},
              {"eos_smoothing_policy",
               c.eosSmoothingPolicy == SmoothingPolicy::Standard ? "standard" : "exclude_eos_gold"},
              {"dropout", c.dropout},
              {"seed", c.seed}};
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.dModel = j.at("d_model").get<int>();
  c.nHeads = j.at("n_heads").get<int>();
  c.nLayers = j.at("n_layers").get<int>();
  c.dFFN = j.at("d_ffn").get<int>();
  c.maxLen = j.at("max_len").get<int>();
  c.labelSmoothing = j.at("label_smoothing").get<double>();
  const std::string policy = j.at("eos_smoothing_policy").get<std::string>();
  if (policy == "standard")
    c.eosSmoothingPolicy = SmoothingPolicy::Standard;
  else if (policy == "exclude_eos_gold")
    c.eosSmoothingPolicy = SmoothingPolicy::ExcludeEosGold;
  else
    throw EoslabError("unknown eos_smoothing_policy: " + policy);
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void append_mat(std::string& out, const nn::Mat& m) {
  // Eigen default storage is column-major; serialize row-major explicitly.
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      char buf[sizeof(double)];
      std::memcpy(buf, &v, sizeof(double));
      out.append(buf, sizeof(double));
    }
}

void read_mat(const std::string& data, std::size_t& off, nn::Mat& m, Eigen::Index rows,
              Eigen::Index cols) {
  m.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (off + sizeof(double) > data.size()) throw EoslabError("checkpoint truncated");
      double v;
      std::memcpy(&v, data.data() + off, sizeof(double));
      off += sizeof(double);
      m(i, j) = v;
    }
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(2); }

ModelConfig model_config_from_json(const std::string& text) {
  return config_from(json::parse(text));
}

void save_checkpoint(const std::string& path, Checkpoint& ckpt) {
  json manifest;
  manifest["config"] = config_json(ckpt.config);
  manifest["vocab"] = {{"eos_mode", ckpt.eosMode == EosMode::Single ? "single" : "multi"},
                       {"l_max", ckpt.lMax},
                       {"content_tokens", ckpt.contentTokens}};
  manifest["step"] = ckpt.state.step;
  manifest["meta"] = ckpt.meta;

  json dir = json::array();
  std::string data;
  std::size_t idx = 0;
  for_each_tensor(ckpt.state.params, [&](const std::string& name, nn::Tensor& t) {
    dir.push_back({{"name", name}, {"rows", t.v.rows()}, {"cols", t.v.cols()}});
    append_mat(data, t.v);
    append_mat(data, ckpt.state.adamM[idx]);
    append_mat(data, ckpt.state.adamV[idx]);
    ++idx;
  });
  manifest["tensors"] = dir;

  const std::string m = manifest.dump();
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  const std::uint64_t mlen = m.size();
  char lenbuf[sizeof(std::uint64_t)];
  std::memcpy(lenbuf, &mlen, sizeof(mlen));
  out.append(lenbuf, sizeof(mlen));
  out += m;
  out += data;
  atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string raw = read_file(path);
  if (raw.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
      std::memcmp(raw.data(), kMagic, sizeof(kMagic)) != 0)
    throw EoslabError("not an eoslab checkpoint: " + path);
  std::uint64_t mlen;
  std::memcpy(&mlen, raw.data() + sizeof(kMagic), sizeof(mlen));
  const std::size_t mStart = sizeof(kMagic) + sizeof(std::uint64_t);
  if (mStart + mlen > raw.size()) throw EoslabError("checkpoint manifest truncated");
  const json manifest = json::parse(raw.substr(mStart, mlen));

  Checkpoint ckpt;
  ckpt.config = config_from(manifest.at("config"));
  const auto& vj = manifest.at("vocab");
  const std::string mode = vj.at("eos_mode").get<std::string>();
  ckpt.eosMode = mode == "single" ? EosMode::Single : EosMode::Multi;
  ckpt.lMax = vj.at("l_max").get<int>();
  ckpt.contentTokens = vj.at("content_tokens").get<int>();
  ckpt.state.step = manifest.at("step").get<long>();
  if (manifest.contains("meta"))
    ckpt.meta = manifest.at("meta").get<std::map<std::string, std::string>>();

  Vocab vocab = ckpt.vocab();
  ckpt.state = [&] {
    TrainState s = init_train_state(ckpt.config, vocab);
    s.step = manifest.at("step").get<long>();
    return s;
  }();

  std::size_t off = mStart + mlen;
  std::size_t idx = 0;
  const auto& dir = manifest.at("tensors");
  for_each_tensor(ckpt.state.params, [&](const std::string& name, nn::Tensor& t) {
    if (idx >= dir.size()) throw EoslabError("checkpoint tensor directory too short");
    const auto& entry = dir[idx];
    if (entry.at("name").get<std::string>() != name)
      throw EoslabError("checkpoint tensor order mismatch at " + name);
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    if (rows != t.v.rows() || cols != t.v.cols())
      throw EoslabError("checkpoint tensor shape mismatch at " + name);
    read_mat(raw, off, t.v, rows, cols);
    read_mat(raw, off, ckpt.state.adamM[idx], rows, cols);
    read_mat(raw, off, ckpt.state.adamV[idx], rows, cols);
    ++idx;
  });
  if (off != raw.size()) throw EoslabError("checkpoint has trailing bytes");
  return ckpt;
}

}  // namespace eoslab
