#pragma once

// Minimal 1D neural-network kernel. Feature maps are dense matrices of shape
// (channels x length) so convolutions reduce to one GEMM per filter tap.
// Everything is templated on the scalar: float for training speed, double
// when verifying gradients against finite differences.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "specsense/rng.hpp"
#include "specsense/types.hpp"

namespace specsense::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = Mat<float>;

// Centered uniform scaled by fan-in.
template <typename S>
void he_uniform(Mat<S>& w, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in));
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      w(i, j) = S(rng.uniform(-limit, limit));
}

// ---------------------------------------------------------------------------
// Layers. Each owns its parameters and gradient buffers; backward() consumes
// the upstream gradient, overwrites the parameter gradients and returns the
// input gradient. forward() caches what backward() needs.

// Same-padded cross-correlation. Weights are (out_ch x kernel*in_ch) with
// tap-major column blocks: columns [t*in_ch, (t+1)*in_ch) hold tap t.
template <typename S>
struct Conv1d {
  int in_ch = 0, out_ch = 0, kernel = 0;
  Mat<S> W, gW;
  Mat<S> b, gb;  // (out_ch x 1)
  Mat<S> x_cache;

  Conv1d(int in_channels, int out_channels, int kernel_width)
      : in_ch(in_channels), out_ch(out_channels), kernel(kernel_width) {
    if (kernel <= 0 || kernel % 2 == 0)
      throw ConfigError("Conv1d: kernel width must be odd and positive");
    W = Mat<S>::Zero(out_ch, kernel * in_ch);
    gW = W;
    b = Mat<S>::Zero(out_ch, 1);
    gb = b;
  }

  void init(Rng& rng) { he_uniform(W, in_ch * kernel, rng); }

  Mat<S> forward(const Mat<S>& x) {
    if (x.rows() != in_ch) throw ConfigError("Conv1d: channel mismatch");
    x_cache = x;
    const Eigen::Index len = x.cols();
    Mat<S> y = b.replicate(1, len);
    const int half = kernel / 2;
    for (int t = 0; t < kernel; ++t) {
      const int off = t - half;
      const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
      const Eigen::Index hi = std::min<Eigen::Index>(len, len - off);
      if (hi <= lo) continue;
      y.middleCols(lo, hi - lo).noalias() +=
          W.middleCols(t * in_ch, in_ch) * x.middleCols(lo + off, hi - lo);
    }
    return y;
  }

  Mat<S> backward(const Mat<S>& gy) {
    if (x_cache.size() == 0) throw StateError("Conv1d: no cached forward");
    const Eigen::Index len = x_cache.cols();
    gW.setZero();
    gb = gy.rowwise().sum();
    Mat<S> gx = Mat<S>::Zero(in_ch, len);
    const int half = kernel / 2;
    for (int t = 0; t < kernel; ++t) {
      const int off = t - half;
      const Eigen::Index lo = std::max<Eigen::Index>(0, -off);
      const Eigen::Index hi = std::min<Eigen::Index>(len, len - off);
      if (hi <= lo) continue;
      gW.middleCols(t * in_ch, in_ch).noalias() +=
          gy.middleCols(lo, hi - lo) *
          x_cache.middleCols(lo + off, hi - lo).transpose();
      gx.middleCols(lo + off, hi - lo).noalias() +=
          W.middleCols(t * in_ch, in_ch).transpose() *
          gy.middleCols(lo, hi - lo);
    }
    return gx;
  }
};

// Fully connected layer on (in x batch) column samples.
template <typename S>
struct Dense {
  int in_dim = 0, out_dim = 0;
  Mat<S> W, gW;
  Mat<S> b, gb;
  Mat<S> x_cache;

  Dense(int in, int out) : in_dim(in), out_dim(out) {
    W = Mat<S>::Zero(out, in);
    gW = W;
    b = Mat<S>::Zero(out, 1);
    gb = b;
  }

  void init(Rng& rng) { he_uniform(W, in_dim, rng); }

  Mat<S> forward(const Mat<S>& x) {
    if (x.rows() != in_dim) throw ConfigError("Dense: input dim mismatch");
    x_cache = x;
    Mat<S> y = W * x;
    y.colwise() += b.col(0);
    return y;
  }

  Mat<S> backward(const Mat<S>& gy) {
    if (x_cache.size() == 0) throw StateError("Dense: no cached forward");
    gW.noalias() = gy * x_cache.transpose();
    gb = gy.rowwise().sum();
    return W.transpose() * gy;
  }
};

template <typename S>
struct ReLU {
  Mat<S> x_cache;

  Mat<S> forward(const Mat<S>& x) {
    x_cache = x;
    return x.cwiseMax(S(0));
  }

  Mat<S> backward(const Mat<S>& gy) {
    if (x_cache.size() == 0) throw StateError("ReLU: no cached forward");
    return ((x_cache.array() > S(0)).template cast<S>() * gy.array()).matrix();
  }
};

// Width-2 stride-2 max pooling along the length axis.
template <typename S>
struct MaxPool2 {
  Eigen::MatrixX<int> sel;  // source column per (channel, output position)

  Mat<S> forward(const Mat<S>& x) {
    if (x.cols() % 2 != 0) throw InputError("MaxPool2: odd input length");
    const Eigen::Index ch = x.rows(), out_len = x.cols() / 2;
    Mat<S> y(ch, out_len);
    sel.resize(ch, out_len);
    for (Eigen::Index j = 0; j < out_len; ++j)
      for (Eigen::Index c = 0; c < ch; ++c) {
        const S a = x(c, 2 * j), b2 = x(c, 2 * j + 1);
        if (a >= b2) {
          y(c, j) = a;
          sel(c, j) = int(2 * j);
        } else {
          y(c, j) = b2;
          sel(c, j) = int(2 * j + 1);
        }
      }
    return y;
  }

  Mat<S> backward(const Mat<S>& gy) {
    if (sel.size() == 0) throw StateError("MaxPool2: no cached forward");
    Mat<S> gx = Mat<S>::Zero(gy.rows(), gy.cols() * 2);
    for (Eigen::Index j = 0; j < gy.cols(); ++j)
      for (Eigen::Index c = 0; c < gy.rows(); ++c)
        gx(c, sel(c, j)) += gy(c, j);
    return gx;
  }
};

// Per-channel normalization over the length axis with learnable scale/shift.
// The trainer streams one sample at a time, so batch statistics reduce to the
// statistics of the current sample; eval applies the same rule so that the
// train-time and inference-time transforms are identical.
template <typename S>
struct BatchNorm1d {
  int channels = 0;
  S eps = S(1e-5);
  Mat<S> gamma, ggamma;
  Mat<S> beta, gbeta;
  // caches
  Mat<S> xhat;
  Vec<S> invstd;
  bool train_cached = false;

  explicit BatchNorm1d(int ch) : channels(ch) {
    gamma = Mat<S>::Ones(ch, 1);
    ggamma = Mat<S>::Zero(ch, 1);
    beta = Mat<S>::Zero(ch, 1);
    gbeta = beta;
  }

  Mat<S> forward(const Mat<S>& x, bool train) {
    if (x.rows() != channels) throw ConfigError("BatchNorm1d: channel mismatch");
    const Vec<S> mu = x.rowwise().mean();
    Mat<S> centered = x.colwise() - mu;
    const Vec<S> var = centered.array().square().matrix().rowwise().mean();
    const Vec<S> istd = (var.array() + eps).rsqrt();
    Mat<S> xh = (centered.array().colwise() * istd.array()).matrix();
    if (train) {
      xhat = xh;
      invstd = istd;
      train_cached = true;
    }
    return ((xh.array().colwise() * gamma.col(0).array()).colwise() +
            beta.col(0).array())
        .matrix();
  }

  // Backward through the train-mode pass.
  Mat<S> backward(const Mat<S>& gy) {
    if (!train_cached) throw StateError("BatchNorm1d: no cached train forward");
    const Eigen::Index n = gy.cols();
    ggamma.col(0) = (gy.array() * xhat.array()).rowwise().sum();
    gbeta.col(0) = gy.rowwise().sum();
    const Mat<S> dxhat =
        (gy.array().colwise() * gamma.col(0).array()).matrix();
    const Vec<S> sum_dxhat = dxhat.rowwise().sum();
    const Vec<S> sum_dxhat_xhat =
        (dxhat.array() * xhat.array()).rowwise().sum();
    Mat<S> gx = S(n) * dxhat;
    gx -= (xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
    gx.colwise() -= sum_dxhat;
    gx = (gx.array().colwise() * (invstd.array() / S(n))).matrix();
    return gx;
  }
};

// ---------------------------------------------------------------------------
// ROI max pooling: map a bin-domain region onto the feature grid, carve it
// into out_len sub-bins with outward-rounded edges, take per-channel maxima.
template <typename S>
struct RoiPool1d {
  int out_len = 7;
  Eigen::MatrixX<int> sel;  // source feature column per (channel, sub-bin)
  Eigen::Index in_len = 0;

  explicit RoiPool1d(int bins = 7) : out_len(bins) {}

  Mat<S> forward(const Mat<S>& features, const Interval& region,
                 double stride) {
    const Eigen::Index lf = features.cols();
    double fs = region.start / stride;
    double fe = region.end / stride;
    fs = std::max(0.0, std::min(fs, double(lf)));
    fe = std::max(0.0, std::min(fe, double(lf)));
    if (fe - fs <= 0.0)
      throw InputError("RoiPool1d: region degenerate after stride mapping");

    const Eigen::Index ch = features.rows();
    Mat<S> y(ch, out_len);
    sel.resize(ch, out_len);
    in_len = lf;
    const double step = (fe - fs) / double(out_len);
    for (int i = 0; i < out_len; ++i) {
      Eigen::Index lo = Eigen::Index(std::floor(fs + step * i));
      Eigen::Index hi = Eigen::Index(std::ceil(fs + step * (i + 1)));
      lo = std::max<Eigen::Index>(0, std::min(lo, lf - 1));
      hi = std::max<Eigen::Index>(lo + 1, std::min(hi, lf));
      for (Eigen::Index c = 0; c < ch; ++c) {
        Eigen::Index best = lo;
        for (Eigen::Index j = lo + 1; j < hi; ++j)
          if (features(c, j) > features(c, best)) best = j;
        y(c, i) = features(c, best);
        sel(c, i) = int(best);
      }
    }
    return y;
  }

  Mat<S> backward(const Mat<S>& gy) {
    if (sel.size() == 0) throw StateError("RoiPool1d: no cached forward");
    Mat<S> gx = Mat<S>::Zero(gy.rows(), in_len);
    for (int i = 0; i < out_len; ++i)
      for (Eigen::Index c = 0; c < gy.rows(); ++c)
        gx(c, sel(c, i)) += gy(c, i);
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Losses. Log arguments are clamped to [kLossEps, 1 - kLossEps].

inline constexpr double kLossEps = 1e-7;

template <typename S>
S binary_crossentropy(const Mat<S>& p, const Mat<S>& target,
                      Mat<S>* grad = nullptr) {
  if (p.rows() != target.rows() || p.cols() != target.cols())
    throw ConfigError("binary_crossentropy: shape mismatch");
  const S eps = S(kLossEps);
  const auto pc = p.array().max(eps).min(S(1) - eps);
  const S n = S(p.size());
  const S loss =
      -((target.array() * pc.log()) + (S(1) - target.array()) * (S(1) - pc).log())
           .sum() /
      n;
  if (grad)
    *grad = ((pc - target.array()) / (pc * (S(1) - pc)) / n).matrix();
  return loss;
}

// Cross entropy on probability columns (each column sums to 1).
template <typename S>
S categorical_crossentropy(const Mat<S>& p, const Mat<S>& onehot,
                           Mat<S>* grad = nullptr) {
  if (p.rows() != onehot.rows() || p.cols() != onehot.cols())
    throw ConfigError("categorical_crossentropy: shape mismatch");
  const S eps = S(kLossEps);
  const auto pc = p.array().max(eps).min(S(1) - eps);
  const S n = S(p.cols());
  const S loss = -(onehot.array() * pc.log()).sum() / n;
  if (grad) *grad = (-(onehot.array() / pc) / n).matrix();
  return loss;
}

template <typename S>
Mat<S> sigmoid(const Mat<S>& z) {
  return (S(1) / (S(1) + (-z.array()).exp())).matrix();
}

// Numerically stable column-wise softmax.
template <typename S>
Mat<S> softmax(const Mat<S>& logits) {
  Mat<S> z = logits;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    z.col(j).array() -= z.col(j).maxCoeff();
    z.col(j) = z.col(j).array().exp();
    z.col(j) /= z.col(j).sum();
  }
  return z;
}

// Softmax followed by categorical cross entropy; the gradient with respect
// to the logits collapses to (p - p*)/N.
template <typename S>
S softmax_crossentropy(const Mat<S>& logits, const Mat<S>& onehot,
                       Mat<S>* dlogits = nullptr) {
  const Mat<S> p = softmax(logits);
  const S loss = categorical_crossentropy(p, onehot, (Mat<S>*)nullptr);
  if (dlogits) *dlogits = (p - onehot) / S(p.cols());
  return loss;
}

// Per-element 0.5 d^2 inside |d| < 1, |d| - 0.5 outside; summed.
template <typename S>
S smooth_l1(const Mat<S>& t, const Mat<S>& t_star, Mat<S>* grad = nullptr) {
  if (t.rows() != t_star.rows() || t.cols() != t_star.cols())
    throw ConfigError("smooth_l1: shape mismatch");
  const Mat<S> d = t - t_star;
  S loss = S(0);
  if (grad) grad->resize(t.rows(), t.cols());
  for (Eigen::Index j = 0; j < d.cols(); ++j)
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      const S v = d(i, j);
      if (std::abs(v) < S(1)) {
        loss += S(0.5) * v * v;
        if (grad) (*grad)(i, j) = v;
      } else {
        loss += std::abs(v) - S(0.5);
        if (grad) (*grad)(i, j) = (v > S(0)) ? S(1) : S(-1);
      }
    }
  return loss;
}

// ---------------------------------------------------------------------------
// Adam with per-parameter step counters so disjoint parameter groups can be
// updated on their own cadence while sharing one optimizer.

template <typename S>
class Adam {
 public:
  struct Config {
    S lr = S(1e-5);
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S eps = S(1e-8);
  };

  explicit Adam(Config cfg = {}) : cfg_(cfg) {}

  int attach(Mat<S>* w, Mat<S>* g) {
    if (w->rows() != g->rows() || w->cols() != g->cols())
      throw ConfigError("Adam: parameter and gradient shapes differ");
    Slot s;
    s.w = w;
    s.g = g;
    s.m = Mat<S>::Zero(w->rows(), w->cols());
    s.v = s.m;
    slots_.push_back(std::move(s));
    return int(slots_.size()) - 1;
  }

  void step(const std::vector<int>& handles) {
    for (int h : handles) step_one(h);
  }

  void step_all() {
    for (int h = 0; h < int(slots_.size()); ++h) step_one(h);
  }

  const Config& config() const { return cfg_; }
  void set_lr(S lr) { cfg_.lr = lr; }

 private:
  struct Slot {
    Mat<S>* w = nullptr;
    Mat<S>* g = nullptr;
    Mat<S> m, v;
    int64_t t = 0;
  };

  // Single fused pass per slot; the bias corrections fold into the step
  // size (lr*sqrt(c2)/c1) and a rescaled epsilon, which is algebraically
  // identical to the usual m-hat / (sqrt(v-hat) + eps) form.
  void step_one(int h) {
    Slot& s = slots_.at(size_t(h));
    s.t += 1;
    const S b1 = cfg_.beta1, b2 = cfg_.beta2;
    const S c1 = S(1) - S(std::pow(double(b1), double(s.t)));
    const S c2 = S(1) - S(std::pow(double(b2), double(s.t)));
    const S scale = cfg_.lr * S(std::sqrt(double(c2))) / c1;
    const S eps2 = cfg_.eps * S(std::sqrt(double(c2)));
    S* m = s.m.data();
    S* v = s.v.data();
    S* w = s.w->data();
    const S* g = s.g->data();
    const Eigen::Index n = s.m.size();
    for (Eigen::Index i = 0; i < n; ++i) {
      const S gi = g[i];
      const S mi = b1 * m[i] + (S(1) - b1) * gi;
      const S vi = b2 * v[i] + (S(1) - b2) * gi * gi;
      m[i] = mi;
      v[i] = vi;
      w[i] -= scale * mi / (std::sqrt(vi) + eps2);
    }
  }

  Config cfg_;
  std::vector<Slot> slots_;
};

}  // namespace specsense::nn
