#include "eoslab/model.hpp"

#include <algorithm>
#include <cmath>

#include "eoslab/rng.hpp"

namespace eoslab {

using nn::Mat;
using nn::Tensor;

void ModelConfig::validate() const {
  if (dModel < 1 || nHeads < 1 || nLayers < 1 || dFFN < 1 || maxLen < 2)
    throw EoslabError("ModelConfig: non-positive dimension");
  if (dModel % nHeads != 0) throw EoslabError("ModelConfig: dModel not divisible by nHeads");
  if (labelSmoothing < 0.0 || labelSmoothing >= 1.0)
    throw EoslabError("ModelConfig: labelSmoothing outside [0,1)");
  if (dropout < 0.0 || dropout >= 1.0) throw EoslabError("ModelConfig: dropout outside [0,1)");
}

void Parameters::zero_grads() {
  for_each_tensor(*this, [](const std::string&, Tensor& t) { t.zero_grad(); });
}

namespace {

void init_tensor(Tensor& t, int rows, int cols, std::mt19937_64& rng, double std) {
  t.setup(rows, cols);
  if (std > 0.0)
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) t.v(i, j) = std * normal(rng);
}

void init_norm(nn::NormParam& p, int d) {
  p.gain.setup(1, d);
  p.gain.v.setOnes();
  p.bias.setup(1, d);
}

void init_attn(nn::AttnParam& p, int d, std::mt19937_64& rng, double std) {
  init_tensor(p.wq, d, d, rng, std);
  init_tensor(p.wk, d, d, rng, std);
  init_tensor(p.wv, d, d, rng, std);
  init_tensor(p.wo, d, d, rng, std);
  p.bq.setup(1, d);
  p.bv.setup(1, d);
  p.bo.setup(1, d);
}

constexpr double kInitStd = 0.02;

}  // namespace

Parameters init_parameters(const ModelConfig& config, const Vocab& vocab) {
  config.validate();
  auto rng = substream(config.seed, "init");
  const int d = config.dModel;
  Parameters p;
  p.vocabSize = vocab.size();
  p.dModel = d;
  init_tensor(p.srcEmb, vocab.size(), d, rng, kInitStd);
  init_tensor(p.tgtEmb, vocab.size(), d, rng, kInitStd);
  p.enc.resize(config.nLayers);
  for (auto& blk : p.enc) {
    init_norm(blk.ln1, d);
    init_attn(blk.att, d, rng, kInitStd);
    init_norm(blk.ln2, d);
    init_tensor(blk.w1, d, config.dFFN, rng, kInitStd);
    blk.b1.setup(1, config.dFFN);
    init_tensor(blk.w2, config.dFFN, d, rng, kInitStd);
    blk.b2.setup(1, d);
  }
  p.dec.resize(config.nLayers);
  for (auto& blk : p.dec) {
    init_norm(blk.ln1, d);
    init_attn(blk.self, d, rng, kInitStd);
    init_norm(blk.ln2, d);
    init_attn(blk.cross, d, rng, kInitStd);
    init_norm(blk.ln3, d);
    init_tensor(blk.w1, d, config.dFFN, rng, kInitStd);
    blk.b1.setup(1, config.dFFN);
    init_tensor(blk.w2, config.dFFN, d, rng, kInitStd);
    blk.b2.setup(1, d);
  }
  init_norm(p.encNorm, d);
  init_norm(p.decNorm, d);
  return p;
}

namespace {

void visit_norm(const std::string& base, nn::NormParam& p,
                const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(base + ".gain", p.gain);
  fn(base + ".bias", p.bias);
}

void visit_attn(const std::string& base, nn::AttnParam& p,
                const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(base + ".wq", p.wq);
  fn(base + ".bq", p.bq);
  fn(base + ".wk", p.wk);
  fn(base + ".wv", p.wv);
  fn(base + ".bv", p.bv);
  fn(base + ".wo", p.wo);
  fn(base + ".bo", p.bo);
}

}  // namespace

void for_each_tensor(Parameters& params,
                     const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("src_emb", params.srcEmb);
  fn("tgt_emb", params.tgtEmb);
  for (std::size_t i = 0; i < params.enc.size(); ++i) {
    const std::string base = "enc." + std::to_string(i);
    auto& blk = params.enc[i];
    visit_norm(base + ".ln1", blk.ln1, fn);
    visit_attn(base + ".att", blk.att, fn);
    visit_norm(base + ".ln2", blk.ln2, fn);
    fn(base + ".w1", blk.w1);
    fn(base + ".b1", blk.b1);
    fn(base + ".w2", blk.w2);
    fn(base + ".b2", blk.b2);
  }
  for (std::size_t i = 0; i < params.dec.size(); ++i) {
    const std::string base = "dec." + std::to_string(i);
    auto& blk = params.dec[i];
    visit_norm(base + ".ln1", blk.ln1, fn);
    visit_attn(base + ".self", blk.self, fn);
    visit_norm(base + ".ln2", blk.ln2, fn);
    visit_attn(base + ".cross", blk.cross, fn);
    visit_norm(base + ".ln3", blk.ln3, fn);
    fn(base + ".w1", blk.w1);
    fn(base + ".b1", blk.b1);
    fn(base + ".w2", blk.w2);
    fn(base + ".b2", blk.b2);
  }
  visit_norm("enc_norm", params.encNorm, fn);
  visit_norm("dec_norm", params.decNorm, fn);
}

// ---------------------------------------------------------------------------
// Forward / backward internals
// ---------------------------------------------------------------------------

namespace {

struct EncBlockCache {
  nn::NormCache ln1;
  nn::AttnCache att;
  Mat drop1;
  nn::NormCache ln2;
  nn::LinearCache ff1;
  Mat z1;  // pre-ReLU
  nn::LinearCache ff2;
  Mat drop2;
};

struct DecBlockCache {
  nn::NormCache ln1;
  nn::AttnCache self;
  Mat drop1;
  nn::NormCache ln2;
  nn::AttnCache cross;
  Mat drop2;
  nn::NormCache ln3;
  nn::LinearCache ff1;
  Mat z1;
  nn::LinearCache ff2;
  Mat drop3;
};

struct FwdCache {
  TokenSeq src, decIn;
  Mat dropSrc, dropTgt;
  std::vector<EncBlockCache> enc;
  nn::NormCache encNorm;
  Mat encOut;
  std::vector<DecBlockCache> dec;
  nn::NormCache decNorm;
  Mat decOut;
};

Mat dropout_apply(Mat x, double rate, std::mt19937_64* rng, Mat& maskOut) {
  if (rate <= 0.0 || rng == nullptr) return x;
  maskOut.resize(x.rows(), x.cols());
  const double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      maskOut(i, j) = uniform_real(*rng) < rate ? 0.0 : 1.0 / keep;
  return x.cwiseProduct(maskOut);
}

Mat dropout_backward(const Mat& d, const Mat& mask) {
  if (mask.size() == 0) return d;
  return d.cwiseProduct(mask);
}

Mat embed(const Tensor& emb, const TokenSeq& ids, const Mat& pe, int d, int maxLen) {
  if (static_cast<int>(ids.size()) > maxLen)
    throw EoslabError("sequence length " + std::to_string(ids.size()) +
                      " exceeds maxLen=" + std::to_string(maxLen));
  Mat x(ids.size(), d);
  const double scale = std::sqrt(static_cast<double>(d));
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const TokenId id = ids[t];
    if (id < 0 || id >= emb.v.rows())
      throw EoslabError("token id out of range: " + std::to_string(id));
    x.row(t) = emb.v.row(id) * scale + pe.row(static_cast<Eigen::Index>(t));
  }
  return x;
}

void embed_backward(Tensor& emb, const TokenSeq& ids, const Mat& dx, int d) {
  const double scale = std::sqrt(static_cast<double>(d));
  for (std::size_t t = 0; t < ids.size(); ++t)
    emb.g.row(ids[t]) += dx.row(static_cast<Eigen::Index>(t)) * scale;
}

const Mat& positions(const ModelConfig& config) {
  static thread_local Mat pe;
  if (pe.rows() < config.maxLen || pe.cols() != config.dModel)
    pe = nn::sinusoidal_positions(config.maxLen, config.dModel);
  return pe;
}

Mat run_encoder(const Parameters& p, const ModelConfig& config, const TokenSeq& src,
                FwdCache& cache, std::mt19937_64* dropRng) {
  const int d = config.dModel;
  const Mat& pe = positions(config);
  if (src.empty()) throw EoslabError("run_encoder: empty source");
  cache.src = src;

  Mat x = embed(p.srcEmb, src, pe, d, config.maxLen);
  x = dropout_apply(std::move(x), config.dropout, dropRng, cache.dropSrc);
  cache.enc.resize(p.enc.size());
  for (std::size_t i = 0; i < p.enc.size(); ++i) {
    auto& blk = p.enc[i];
    auto& c = cache.enc[i];
    Mat t = nn::layernorm_forward(blk.ln1, x, &c.ln1);
    Mat a = nn::attention_forward(blk.att, t, t, config.nHeads, false, &c.att);
    x += dropout_apply(std::move(a), config.dropout, dropRng, c.drop1);
    t = nn::layernorm_forward(blk.ln2, x, &c.ln2);
    c.z1 = nn::linear_forward(blk.w1, blk.b1, t, &c.ff1);
    Mat h = c.z1.cwiseMax(0.0);
    Mat f = nn::linear_forward(blk.w2, blk.b2, h, &c.ff2);
    x += dropout_apply(std::move(f), config.dropout, dropRng, c.drop2);
  }
  cache.encOut = nn::layernorm_forward(p.encNorm, x, &cache.encNorm);
  return cache.encOut;
}

Mat run_decoder(const Parameters& p, const ModelConfig& config, const Mat& encOut,
                const TokenSeq& decIn, FwdCache& cache, std::mt19937_64* dropRng) {
  const int d = config.dModel;
  const Mat& pe = positions(config);
  cache.decIn = decIn;
  if (cache.encOut.size() == 0) cache.encOut = encOut;

  Mat y = embed(p.tgtEmb, decIn, pe, d, config.maxLen);
  y = dropout_apply(std::move(y), config.dropout, dropRng, cache.dropTgt);
  cache.dec.resize(p.dec.size());
  for (std::size_t i = 0; i < p.dec.size(); ++i) {
    auto& blk = p.dec[i];
    auto& c = cache.dec[i];
    Mat t = nn::layernorm_forward(blk.ln1, y, &c.ln1);
    Mat a = nn::attention_forward(blk.self, t, t, config.nHeads, true, &c.self);
    y += dropout_apply(std::move(a), config.dropout, dropRng, c.drop1);
    t = nn::layernorm_forward(blk.ln2, y, &c.ln2);
    a = nn::attention_forward(blk.cross, t, cache.encOut, config.nHeads, false, &c.cross);
    y += dropout_apply(std::move(a), config.dropout, dropRng, c.drop2);
    t = nn::layernorm_forward(blk.ln3, y, &c.ln3);
    c.z1 = nn::linear_forward(blk.w1, blk.b1, t, &c.ff1);
    Mat h = c.z1.cwiseMax(0.0);
    Mat f = nn::linear_forward(blk.w2, blk.b2, h, &c.ff2);
    y += dropout_apply(std::move(f), config.dropout, dropRng, c.drop3);
  }
  cache.decOut = nn::layernorm_forward(p.decNorm, y, &cache.decNorm);
  return cache.decOut;
}

Mat run_forward(const Parameters& params, const ModelConfig& config, const TokenSeq& src,
                const TokenSeq& decIn, FwdCache& cache, std::mt19937_64* dropRng) {
  Mat enc = run_encoder(params, config, src, cache, dropRng);
  return run_decoder(params, config, enc, decIn, cache, dropRng);
}

void run_backward(Parameters& params, const ModelConfig& config, FwdCache& cache,
                  const Mat& dDecOut) {
  const int d = config.dModel;

  Mat dy = nn::layernorm_backward(params.decNorm, cache.decNorm, dDecOut);
  Mat dEnc = Mat::Zero(cache.encOut.rows(), d);
  for (std::size_t ri = params.dec.size(); ri-- > 0;) {
    auto& blk = params.dec[ri];
    auto& c = cache.dec[ri];
    {
      Mat df = dropout_backward(dy, c.drop3);
      Mat dh = nn::linear_backward(blk.w2, blk.b2, c.ff2, df);
      dh.array() *= (c.z1.array() > 0.0).cast<double>();
      Mat dt = nn::linear_backward(blk.w1, blk.b1, c.ff1, dh);
      dy += nn::layernorm_backward(blk.ln3, c.ln3, dt);
    }
    {
      Mat da = dropout_backward(dy, c.drop2);
      Mat dkv = Mat::Zero(cache.encOut.rows(), d);
      Mat dt = nn::attention_backward(blk.cross, c.cross, config.nHeads, da, dkv);
      dEnc += dkv;
      dy += nn::layernorm_backward(blk.ln2, c.ln2, dt);
    }
    {
      Mat da = dropout_backward(dy, c.drop1);
      Mat dkv = Mat::Zero(dy.rows(), d);
      Mat dt = nn::attention_backward(blk.self, c.self, config.nHeads, da, dkv);
      dt += dkv;
      dy += nn::layernorm_backward(blk.ln1, c.ln1, dt);
    }
  }
  embed_backward(params.tgtEmb, cache.decIn, dropout_backward(dy, cache.dropTgt), d);

  Mat dx = nn::layernorm_backward(params.encNorm, cache.encNorm, dEnc);
  for (std::size_t ri = params.enc.size(); ri-- > 0;) {
    auto& blk = params.enc[ri];
    auto& c = cache.enc[ri];
    {
      Mat df = dropout_backward(dx, c.drop2);
      Mat dh = nn::linear_backward(blk.w2, blk.b2, c.ff2, df);
      dh.array() *= (c.z1.array() > 0.0).cast<double>();
      Mat dt = nn::linear_backward(blk.w1, blk.b1, c.ff1, dh);
      dx += nn::layernorm_backward(blk.ln2, c.ln2, dt);
    }
    {
      Mat da = dropout_backward(dx, c.drop1);
      Mat dkv = Mat::Zero(dx.rows(), d);
      Mat dt = nn::attention_backward(blk.att, c.att, config.nHeads, da, dkv);
      dt += dkv;
      dx += nn::layernorm_backward(blk.ln1, c.ln1, dt);
    }
  }
  embed_backward(params.srcEmb, cache.src, dropout_backward(dx, cache.dropSrc), d);
}

// Smoothed target distribution for one gold label; rows sum to 1.
Eigen::VectorXd smoothing_targets(TokenId gold, double eps, SmoothingPolicy policy,
                                  const Vocab& vocab) {
  const int V = vocab.size();
  Eigen::VectorXd t = Eigen::VectorXd::Zero(V);
  if (eps == 0.0 || (policy == SmoothingPolicy::ExcludeEosGold && vocab.is_eos(gold))) {
    t(gold) = 1.0;
    return t;
  }
  if (policy == SmoothingPolicy::Standard) {
    t.setConstant(eps / (V - 1));
    t(gold) = 1.0 - eps;
    return t;
  }
  // ExcludeEosGold, content gold: the EoS family receives no smoothing mass.
  const int denom = V - 1 - vocab.eos_family_size();
  for (TokenId j = 0; j < V; ++j)
    if (j != gold && !vocab.is_eos(j)) t(j) = eps / denom;
  t(gold) = 1.0 - eps;
  return t;
}

struct SentenceView {
  TokenSeq src;
  TokenSeq decIn;
  TokenSeq gold;
};

SentenceView slice_sentence(const Batch& batch, int s) {
  SentenceView view;
  const int m = batch.sourceLen[s];
  const int l = batch.targetLen[s];
  view.src.assign(batch.source[s].begin(), batch.source[s].begin() + m);
  view.decIn.assign(batch.targetInput[s].begin(), batch.targetInput[s].begin() + l + 1);
  view.gold.assign(batch.targetGold[s].begin(), batch.targetGold[s].begin() + l + 1);
  for (int p = 0; p <= l; ++p)
    if (!batch.lossMask[s][p])
      throw EoslabError("batch sentence " + std::to_string(s) + ": masked gold position");
  return view;
}

int total_loss_positions(const Batch& batch) {
  int n = 0;
  for (const auto& mask : batch.lossMask)
    for (bool b : mask) n += b ? 1 : 0;
  return n;
}

}  // namespace

std::vector<StepDistribution> forward(const Parameters& params, const ModelConfig& config,
                                      const TokenSeq& source, const TokenSeq& targetPrefix) {
  config.validate();
  TokenSeq decIn;
  decIn.reserve(targetPrefix.size() + 1);
  decIn.push_back(Vocab::kBos);
  decIn.insert(decIn.end(), targetPrefix.begin(), targetPrefix.end());

  FwdCache cache;
  Mat states = run_forward(params, config, source, decIn, cache, nullptr);
  Mat logits = states * params.tgtEmb.v.transpose();
  Mat logp = nn::log_softmax_rows(logits);

  std::vector<StepDistribution> dists(logp.rows());
  for (Eigen::Index i = 0; i < logp.rows(); ++i) dists[i].logProbs = logp.row(i);
  return dists;
}

SourceEncoding encode_source(const Parameters& params, const ModelConfig& config,
                             const TokenSeq& source) {
  FwdCache cache;
  SourceEncoding enc;
  enc.source = source;
  enc.encOut = run_encoder(params, config, source, cache, nullptr);
  return enc;
}

nn::Mat decoder_logprobs(const Parameters& params, const ModelConfig& config,
                         const SourceEncoding& enc, const TokenSeq& targetPrefix) {
  TokenSeq decIn;
  decIn.reserve(targetPrefix.size() + 1);
  decIn.push_back(Vocab::kBos);
  decIn.insert(decIn.end(), targetPrefix.begin(), targetPrefix.end());
  FwdCache cache;
  Mat states = run_decoder(params, config, enc.encOut, decIn, cache, nullptr);
  return nn::log_softmax_rows(states * params.tgtEmb.v.transpose());
}

double label_smoothed_loss(const StepDistribution& dist, TokenId gold, double epsilon,
                           SmoothingPolicy policy, const Vocab& vocab) {
  if (epsilon < 0.0 || epsilon >= 1.0) throw EoslabError("epsilon outside [0,1)");
  if (gold < 0 || gold >= vocab.size()) throw EoslabError("gold id out of range");
  const Eigen::VectorXd t = smoothing_targets(gold, epsilon, policy, vocab);
  return -t.dot(dist.logProbs);
}

double batch_loss(const Parameters& params, const Batch& batch, const ModelConfig& config,
                  const Vocab& vocab) {
  const int n = total_loss_positions(batch);
  if (n == 0) throw EoslabError("batch has an all-zero loss mask");
  double total = 0.0;
  for (int s = 0; s < batch.size(); ++s) {
    SentenceView view = slice_sentence(batch, s);
    FwdCache cache;
    Mat states = run_forward(params, config, view.src, view.decIn, cache, nullptr);
    Mat logp = nn::log_softmax_rows(states * params.tgtEmb.v.transpose());
    for (std::size_t pos = 0; pos < view.gold.size(); ++pos) {
      const Eigen::VectorXd t = smoothing_targets(
          view.gold[pos], config.labelSmoothing, config.eosSmoothingPolicy, vocab);
      total -= t.dot(logp.row(static_cast<Eigen::Index>(pos)).transpose());
    }
  }
  return total / n;
}

double loss_and_gradients(Parameters& params, const Batch& batch, const ModelConfig& config,
                          const Vocab& vocab, std::mt19937_64* dropRng) {
  config.validate();
  const int n = total_loss_positions(batch);
  if (n == 0) throw EoslabError("batch has an all-zero loss mask");
  params.zero_grads();

  double total = 0.0;
  for (int s = 0; s < batch.size(); ++s) {
    SentenceView view = slice_sentence(batch, s);
    FwdCache cache;
    Mat states = run_forward(params, config, view.src, view.decIn, cache, dropRng);
    Mat logits = states * params.tgtEmb.v.transpose();
    Mat logp = nn::log_softmax_rows(logits);

    Mat dLogits(logits.rows(), logits.cols());
    for (std::size_t pos = 0; pos < view.gold.size(); ++pos) {
      const auto row = static_cast<Eigen::Index>(pos);
      const Eigen::VectorXd t = smoothing_targets(
          view.gold[pos], config.labelSmoothing, config.eosSmoothingPolicy, vocab);
      total -= t.dot(logp.row(row).transpose());
      dLogits.row(row) = (logp.row(row).array().exp() - t.transpose().array()) / n;
    }
    if (!std::isfinite(total))
      throw EoslabError("non-finite loss at batch sentence " + std::to_string(s));

    params.tgtEmb.g.noalias() += dLogits.transpose() * states;
    Mat dStates = dLogits * params.tgtEmb.v;
    run_backward(params, config, cache, dStates);
  }
  return total / n;
}

double loss_and_gradients(Parameters& params, const Batch& batch, const ModelConfig& config,
                          const Vocab& vocab) {
  return loss_and_gradients(params, batch, config, vocab, nullptr);
}

double gradient_check(Parameters& params, const Batch& batch, const ModelConfig& config,
                      const Vocab& vocab, double h, int minCoords, std::uint64_t sampleSeed) {
  if (config.dropout != 0.0)
    throw EoslabError("gradient_check requires dropout == 0");
  loss_and_gradients(params, batch, config, vocab);

  std::vector<std::pair<std::string, Tensor*>> tensors;
  for_each_tensor(params, [&](const std::string& name, Tensor& t) {
    tensors.emplace_back(name, &t);
  });
  const int perTensor = std::max(
      1, (minCoords + static_cast<int>(tensors.size()) - 1) / static_cast<int>(tensors.size()));

  auto rng = substream(sampleSeed, "gradcheck");
  double maxRelErr = 0.0;
  for (auto& [name, tensor] : tensors) {
    for (int rep = 0; rep < perTensor; ++rep) {
      const auto i = uniform_int(rng, 0, tensor->v.rows() - 1);
      const auto j = uniform_int(rng, 0, tensor->v.cols() - 1);
      const double saved = tensor->v(i, j);
      tensor->v(i, j) = saved + h;
      const double up = batch_loss(params, batch, config, vocab);
      tensor->v(i, j) = saved - h;
      const double down = batch_loss(params, batch, config, vocab);
      tensor->v(i, j) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = tensor->g(i, j);
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      maxRelErr = std::max(maxRelErr, rel);
    }
  }
  return maxRelErr;
}

}  // namespace eoslab
