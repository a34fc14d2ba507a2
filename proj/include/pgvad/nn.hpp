#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgvad/types.hpp"

namespace pgvad::nn {

/// 2-D feature map stored one spatial cell per row (row-major pixels, p = y*w + x).
template <typename S>
struct FeatureMap {
  Matrix<S> data;  // (h*w) x channels
  int h = 0, w = 0;

  FeatureMap() = default;
  FeatureMap(Matrix<S> d, int height, int width) : data(std::move(d)), h(height), w(width) {
    if (data.rows() != Index(h) * Index(w))
      throw std::invalid_argument("feature map rows do not match spatial shape");
  }
  Index channels() const { return data.cols(); }
};

// Gathers k x k neighborhoods into patch rows:
// out(p, (ky*k + kx)*cin + c) = x(src(p, ky, kx), c), zero outside the border.
template <typename S>
Matrix<S> im2col(const Matrix<S>& x, int h, int w, int k, int stride, int pad, int& oh, int& ow) {
  const int cin = int(x.cols());
  oh = (h + 2 * pad - k) / stride + 1;
  ow = (w + 2 * pad - k) / stride + 1;
  Matrix<S> out = Matrix<S>::Zero(Index(oh) * ow, Index(k) * k * cin);
  for (int ky = 0; ky < k; ++ky) {
    for (int kx = 0; kx < k; ++kx) {
      const Index colbase = Index(ky * k + kx) * cin;
      for (int yo = 0; yo < oh; ++yo) {
        const int ys = yo * stride - pad + ky;
        if (ys < 0 || ys >= h) continue;
        if (stride == 1) {
          const int xo_lo = std::max(0, pad - kx);
          const int xo_hi = std::min(ow - 1, w - 1 + pad - kx);
          if (xo_lo > xo_hi) continue;
          const int len = xo_hi - xo_lo + 1;
          out.block(Index(yo) * ow + xo_lo, colbase, len, cin) =
              x.block(Index(ys) * w + (xo_lo - pad + kx), 0, len, cin);
        } else {
          for (int xo = 0; xo < ow; ++xo) {
            const int xs = xo * stride - pad + kx;
            if (xs < 0 || xs >= w) continue;
            out.block(Index(yo) * ow + xo, colbase, 1, cin) = x.block(Index(ys) * w + xs, 0, 1, cin);
          }
        }
      }
    }
  }
  return out;
}

// Scatter-add of patch gradients back onto the input grid (adjoint of im2col).
template <typename S>
Matrix<S> col2im(const Matrix<S>& dpatches, int h, int w, int cin, int k, int stride, int pad) {
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (w + 2 * pad - k) / stride + 1;
  Matrix<S> dx = Matrix<S>::Zero(Index(h) * w, cin);
  for (int ky = 0; ky < k; ++ky) {
    for (int kx = 0; kx < k; ++kx) {
      const Index colbase = Index(ky * k + kx) * cin;
      for (int yo = 0; yo < oh; ++yo) {
        const int ys = yo * stride - pad + ky;
        if (ys < 0 || ys >= h) continue;
        if (stride == 1) {
          const int xo_lo = std::max(0, pad - kx);
          const int xo_hi = std::min(ow - 1, w - 1 + pad - kx);
          if (xo_lo > xo_hi) continue;
          const int len = xo_hi - xo_lo + 1;
          dx.block(Index(ys) * w + (xo_lo - pad + kx), 0, len, cin) +=
              dpatches.block(Index(yo) * ow + xo_lo, colbase, len, cin);
        } else {
          for (int xo = 0; xo < ow; ++xo) {
            const int xs = xo * stride - pad + kx;
            if (xs < 0 || xs >= w) continue;
            dx.block(Index(ys) * w + xs, 0, 1, cin) +=
                dpatches.block(Index(yo) * ow + xo, colbase, 1, cin);
          }
        }
      }
    }
  }
  return dx;
}

template <typename S>
struct Conv2dCache {
  Matrix<S> patches;
  int xh = 0, xw = 0;
};

/// Convolution as im2col + GEMM. Weight is (k*k*in_ch) x out_ch, bias 1 x out_ch.
/// Gradients accumulate across backward calls until zero_grad().
template <typename S>
struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
  Matrix<S> weight, bias;
  Matrix<S> gweight, gbias;

  Conv2d() = default;
  Conv2d(int in, int out, int k, int s, int p) : in_ch(in), out_ch(out), ksize(k), stride(s), pad(p) {
    weight = Matrix<S>::Zero(Index(k) * k * in, out);
    bias = Matrix<S>::Zero(1, out);
    zero_grad();
  }

  // weight ~ N(0, (gain / sqrt(fan_in))^2), bias 0
  void init_gaussian(S gain, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    const double stddev = double(gain) / std::sqrt(double(weight.rows()));
    for (Index i = 0; i < weight.rows(); ++i)
      for (Index j = 0; j < weight.cols(); ++j) weight(i, j) = S(stddev * dist(rng));
    bias.setZero();
  }

  void zero_grad() {
    gweight = Matrix<S>::Zero(weight.rows(), weight.cols());
    gbias = Matrix<S>::Zero(1, out_ch);
  }

  FeatureMap<S> forward(const FeatureMap<S>& x, Conv2dCache<S>* cache = nullptr) const {
    if (x.channels() != in_ch) throw std::invalid_argument("conv input channel mismatch");
    int oh = 0, ow = 0;
    Matrix<S> patches = im2col(x.data, x.h, x.w, ksize, stride, pad, oh, ow);
    Matrix<S> y = patches * weight;
    y.rowwise() += bias.row(0);
    if (cache) {
      cache->patches = std::move(patches);
      cache->xh = x.h;
      cache->xw = x.w;
    }
    return FeatureMap<S>(std::move(y), oh, ow);
  }

  // Accumulates parameter gradients and returns the input gradient.
  Matrix<S> backward(const Matrix<S>& dy, const Conv2dCache<S>& cache) {
    gweight.noalias() += cache.patches.transpose() * dy;
    gbias.row(0) += dy.colwise().sum();
    Matrix<S> dpatches = dy * weight.transpose();
    return col2im(dpatches, cache.xh, cache.xw, in_ch, ksize, stride, pad);
  }
};

// y = x for x > 0, alpha*x otherwise; `slope` caches the elementwise factor.
template <typename S>
Matrix<S> leaky_relu(const Matrix<S>& x, S alpha, Matrix<S>* slope) {
  Matrix<S> factor = (x.array() > S(0)).select(Matrix<S>::Ones(x.rows(), x.cols()),
                                               Matrix<S>::Constant(x.rows(), x.cols(), alpha));
  if (slope) *slope = factor;
  return x.cwiseProduct(factor);
}

// y = scale * tanh(x); `out` must be the forward output.
template <typename S>
Matrix<S> scaled_tanh(const Matrix<S>& x, S scale) {
  return scale * x.array().tanh();
}

template <typename S>
Matrix<S> scaled_tanh_backward(const Matrix<S>& dy, const Matrix<S>& out, S scale) {
  // dy * scale * (1 - tanh^2) = dy * (scale - out^2/scale)
  return dy.array() * (S(1) - (out.array() / scale).square()) * scale;
}

/// Nearest-neighbor 2x upsampling.
template <typename S>
FeatureMap<S> upsample2x(const FeatureMap<S>& x) {
  const int oh = x.h * 2, ow = x.w * 2;
  Matrix<S> out(Index(oh) * ow, x.channels());
  for (int y = 0; y < oh; ++y)
    for (int xx = 0; xx < ow; ++xx)
      out.row(Index(y) * ow + xx) = x.data.row(Index(y / 2) * x.w + xx / 2);
  return FeatureMap<S>(std::move(out), oh, ow);
}

// Adjoint of upsample2x: each parent sums its four children.
template <typename S>
Matrix<S> upsample2x_backward(const Matrix<S>& dy, int parent_h, int parent_w) {
  const int ow = parent_w * 2;
  Matrix<S> dx = Matrix<S>::Zero(Index(parent_h) * parent_w, dy.cols());
  for (int y = 0; y < parent_h * 2; ++y)
    for (int xx = 0; xx < ow; ++xx)
      dx.row(Index(y / 2) * parent_w + xx / 2) += dy.row(Index(y) * ow + xx);
  return dx;
}

template <typename S>
FeatureMap<S> concat_channels(const FeatureMap<S>& a, const FeatureMap<S>& b) {
  if (a.h != b.h || a.w != b.w) throw std::invalid_argument("concat spatial mismatch");
  Matrix<S> out(a.data.rows(), a.channels() + b.channels());
  out << a.data, b.data;
  return FeatureMap<S>(std::move(out), a.h, a.w);
}

template <typename S>
struct ParamRef {
  std::string name;
  Matrix<S>* value = nullptr;
  Matrix<S>* grad = nullptr;
};

/// Adaptive-moment optimizer with bias correction.
template <typename S>
struct Adam {
  S lr = S(2e-4), beta1 = S(0.9), beta2 = S(0.999), eps = S(1e-8);
  std::vector<Matrix<S>> m, v;
  long steps = 0;

  void step(const std::vector<ParamRef<S>>& params) {
    if (m.empty()) {
      for (const auto& p : params) {
        m.push_back(Matrix<S>::Zero(p.value->rows(), p.value->cols()));
        v.push_back(Matrix<S>::Zero(p.value->rows(), p.value->cols()));
      }
    }
    if (m.size() != params.size()) throw std::logic_error("optimizer state does not match params");
    ++steps;
    const S bc1 = S(1) - std::pow(beta1, S(steps));
    const S bc2 = S(1) - std::pow(beta2, S(steps));
    for (size_t i = 0; i < params.size(); ++i) {
      const Matrix<S>& g = *params[i].grad;
      m[i] = beta1 * m[i] + (S(1) - beta1) * g;
      v[i] = beta2 * v[i] + (S(1) - beta2) * g.cwiseProduct(g);
      params[i].value->array() -=
          lr * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + eps);
    }
  }
};

}  // namespace pgvad::nn
