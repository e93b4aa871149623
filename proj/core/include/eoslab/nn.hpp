#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

namespace eoslab::nn {

using Mat = Eigen::MatrixXd;

// Value plus accumulated gradient. Biases and layer-norm vectors are 1xN.
struct Tensor {
  Mat v;
  Mat g;

  void setup(int rows, int cols) {
    v.setZero(rows, cols);
    g.setZero(rows, cols);
  }
  void zero_grad() { g.setZero(v.rows(), v.cols()); }
};

struct NormParam {
  Tensor gain, bias;  // 1 x d
};

// No key bias: a shared offset on every key shifts each query's logits
// uniformly, so softmax is invariant and its gradient is identically zero.
struct AttnParam {
  Tensor wq, wk, wv, wo;  // d x d
  Tensor bq, bv, bo;      // 1 x d
};

struct LinearCache {
  Mat x;
};

struct NormCache {
  Mat xhat;
  Eigen::VectorXd invstd;
};

struct AttnCache {
  Mat x, kv;          // inputs
  Mat q, k, v, h;     // full projections and concatenated head output
  std::vector<Mat> attn;  // per-head softmax weights
};

// y = x w + b; backward accumulates into w.g/b.g and returns dx.
Mat linear_forward(const Tensor& w, const Tensor& b, const Mat& x, LinearCache* cache);
Mat linear_backward(Tensor& w, Tensor& b, const LinearCache& cache, const Mat& dy);

// Row-wise layer norm with learned gain/bias.
Mat layernorm_forward(const NormParam& p, const Mat& x, NormCache* cache);
Mat layernorm_backward(NormParam& p, const NormCache& cache, const Mat& dy);

// Multi-head scaled dot-product attention. kv is the key/value input
// (equal to x for self-attention). causal masks position j > i.
Mat attention_forward(const AttnParam& p, const Mat& x, const Mat& kv, int nHeads,
                      bool causal, AttnCache* cache);
// Returns dx; adds the key/value path gradient into dkv.
Mat attention_backward(AttnParam& p, const AttnCache& cache, int nHeads,
                       const Mat& dout, Mat& dkv);

// Row-wise log-softmax, numerically shifted.
Mat log_softmax_rows(const Mat& logits);

// Fixed sinusoidal positional encodings, maxLen x d.
Mat sinusoidal_positions(int maxLen, int d);

}  // namespace eoslab::nn
