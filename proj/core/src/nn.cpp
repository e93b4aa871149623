#include "eoslab/nn.hpp"

#include <cmath>

namespace eoslab::nn {

Mat linear_forward(const Tensor& w, const Tensor& b, const Mat& x, LinearCache* cache) {
  if (cache) cache->x = x;
  Mat y = x * w.v;
  y.rowwise() += b.v.row(0);
  return y;
}

Mat linear_backward(Tensor& w, Tensor& b, const LinearCache& cache, const Mat& dy) {
  w.g.noalias() += cache.x.transpose() * dy;
  b.g.row(0) += dy.colwise().sum();
  return dy * w.v.transpose();
}

namespace {
constexpr double kNormEps = 1e-5;
}

Mat layernorm_forward(const NormParam& p, const Mat& x, NormCache* cache) {
  const auto rows = x.rows();
  const auto d = x.cols();
  Mat xhat(rows, d);
  Eigen::VectorXd invstd(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + kNormEps);
    xhat.row(i) = (x.row(i).array() - mu) * is;
    invstd(i) = is;
  }
  Mat y = xhat.array().rowwise() * p.gain.v.row(0).array();
  y.array().rowwise() += p.bias.v.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->invstd = std::move(invstd);
  }
  return y;
}

Mat layernorm_backward(NormParam& p, const NormCache& cache, const Mat& dy) {
  const Mat& xhat = cache.xhat;
  p.gain.g.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  p.bias.g.row(0) += dy.colwise().sum();

  Mat dxhat = dy.array().rowwise() * p.gain.v.row(0).array();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).mean();
    const double m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
    dx.row(i) = (cache.invstd(i) *
                 (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2))
                    .matrix();
  }
  return dx;
}

Mat attention_forward(const AttnParam& p, const Mat& x, const Mat& kv, int nHeads,
                      bool causal, AttnCache* cache) {
  const int d = static_cast<int>(x.cols());
  const int dh = d / nHeads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat q = x * p.wq.v;
  q.rowwise() += p.bq.v.row(0);
  Mat k = kv * p.wk.v;
  Mat v = kv * p.wv.v;
  v.rowwise() += p.bv.v.row(0);

  Mat h(x.rows(), d);
  std::vector<Mat> attn(nHeads);
  for (int hd = 0; hd < nHeads; ++hd) {
    Mat scores = q.middleCols(hd * dh, dh) * k.middleCols(hd * dh, dh).transpose() * scale;
    if (causal) {
      for (Eigen::Index i = 0; i < scores.rows(); ++i)
        for (Eigen::Index j = i + 1; j < scores.cols(); ++j) scores(i, j) = -1e30;
    }
    Mat a(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      const double mx = scores.row(i).maxCoeff();
      a.row(i) = (scores.row(i).array() - mx).exp();
      a.row(i) /= a.row(i).sum();
    }
    h.middleCols(hd * dh, dh).noalias() = a * v.middleCols(hd * dh, dh);
    attn[hd] = std::move(a);
  }

  Mat out = h * p.wo.v;
  out.rowwise() += p.bo.v.row(0);
  if (cache) {
    cache->x = x;
    cache->kv = kv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->h = std::move(h);
    cache->attn = std::move(attn);
  }
  return out;
}

Mat attention_backward(AttnParam& p, const AttnCache& cache, int nHeads,
                       const Mat& dout, Mat& dkv) {
  const int d = static_cast<int>(cache.x.cols());
  const int dh = d / nHeads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  p.wo.g.noalias() += cache.h.transpose() * dout;
  p.bo.g.row(0) += dout.colwise().sum();
  Mat dhenc = dout * p.wo.v.transpose();

  Mat dq = Mat::Zero(cache.q.rows(), d);
  Mat dk = Mat::Zero(cache.k.rows(), d);
  Mat dv = Mat::Zero(cache.v.rows(), d);
  for (int hd = 0; hd < nHeads; ++hd) {
    const Mat& a = cache.attn[hd];
    const auto vh = cache.v.middleCols(hd * dh, dh);
    const Mat dh_out = dhenc.middleCols(hd * dh, dh);
    Mat da = dh_out * vh.transpose();
    dv.middleCols(hd * dh, dh).noalias() += a.transpose() * dh_out;
    // softmax rows: ds = a .* (da - rowsum(da .* a))
    Mat ds(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double dot = (da.row(i).array() * a.row(i).array()).sum();
      ds.row(i) = (a.row(i).array() * (da.row(i).array() - dot)).matrix();
    }
    ds *= scale;
    dq.middleCols(hd * dh, dh).noalias() += ds * cache.k.middleCols(hd * dh, dh);
    dk.middleCols(hd * dh, dh).noalias() += ds.transpose() * cache.q.middleCols(hd * dh, dh);
  }

  p.wq.g.noalias() += cache.x.transpose() * dq;
  p.bq.g.row(0) += dq.colwise().sum();
  p.wk.g.noalias() += cache.kv.transpose() * dk;
  p.wv.g.noalias() += cache.kv.transpose() * dv;
  p.bv.g.row(0) += dv.colwise().sum();

  dkv.noalias() += dk * p.wk.v.transpose();
  dkv.noalias() += dv * p.wv.v.transpose();
  return dq * p.wq.v.transpose();
}

Mat log_softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = std::log((logits.row(i).array() - mx).exp().sum()) + mx;
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

Mat sinusoidal_positions(int maxLen, int d) {
  Mat pe(maxLen, d);
  for (int pos = 0; pos < maxLen; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / d);
      pe(pos, i) = std::sin(angle);
      if (i + 1 < d) pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

}  // namespace eoslab::nn
