#pragma once
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "fatiguenet/error.hpp"
#include "fatiguenet/kernels.hpp"
#include "fatiguenet/rng.hpp"
#include "fatiguenet/tensor.hpp"

namespace fatiguenet::nn {

inline int receptive_field(int k, int d) {
  if (k < 1 || d < 1) fail(ErrorKind::InvalidSpec, "K and D must be >= 1");
  return k + (k - 1) * (d - 1);
}

enum class Mode { Train, Eval };

template <class T>
struct Param {
  std::string name;
  Tensor<T> t;

  void init_shape(std::vector<size_t> s) {
    t = Tensor<T>(std::move(s));
    t.ensure_grad();
  }
};

template <class T>
inline void fanin_uniform(Tensor<T>& t, size_t fan_in, Rng& rng) {
  double s = 1.0 / std::sqrt(double(fan_in));
  for (auto& v : t.v) v = T(rng.uniform(-s, s));
}

// ---------------------------------------------------------------------------

template <class T>
struct Conv2d {
  int in_c, out_c, k, dil, stride, pad;
  bool need_input_grad = true;
  Param<T> w, b;
  Tensor<T> x_;

  Conv2d(std::string name, int in_c_, int out_c_, int k_, int dil_ = 1,
         int stride_ = 1, int pad_ = 0)
      : in_c(in_c_), out_c(out_c_), k(k_), dil(dil_), stride(stride_), pad(pad_) {
    w.name = name + ".w";
    b.name = name + ".b";
    w.init_shape({size_t(out_c), size_t(in_c), size_t(k), size_t(k)});
    b.init_shape({size_t(out_c)});
  }

  void init(Rng& rng) {
    fanin_uniform(w.t, size_t(in_c) * k * k, rng);
    std::fill(b.t.v.begin(), b.t.v.end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.shape.size() != 4 || int(x.shape[1]) != in_c)
      fail(ErrorKind::Shape, w.name + ": input " + shape_str(x.shape) +
                                 " does not have " + std::to_string(in_c) +
                                 " channels");
    int n = int(x.shape[0]), ih = int(x.shape[2]), iw = int(x.shape[3]);
    int oh = conv_out_extent(ih, k, dil, stride, pad);
    int ow = conv_out_extent(iw, k, dil, stride, pad);
    if (oh < 1 || ow < 1) fail(ErrorKind::Shape, w.name + ": empty output");
    x_ = x;
    Tensor<T> y({size_t(n), size_t(out_c), size_t(oh), size_t(ow)});
    conv2d_forward(y.v.data(), x.v.data(), w.t.v.data(), b.t.v.data(), n, in_c,
                   ih, iw, out_c, k, dil, stride, pad, oh, ow);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    int n = int(x_.shape[0]), ih = int(x_.shape[2]), iw = int(x_.shape[3]);
    int oh = int(dy.shape[2]), ow = int(dy.shape[3]);
    conv2d_backward_weights(w.t.g.data(), b.t.g.data(), dy.v.data(),
                            x_.v.data(), n, in_c, ih, iw, out_c, k, dil,
                            stride, pad, oh, ow);
    Tensor<T> dx;
    if (need_input_grad) {
      dx = Tensor<T>(x_.shape);
      conv2d_backward_input(dx.v.data(), dy.v.data(), w.t.v.data(), n, in_c,
                            ih, iw, out_c, k, dil, stride, pad, oh, ow);
    }
    return dx;
  }

  void collect(std::vector<Param<T>*>& ps) {
    ps.push_back(&w);
    ps.push_back(&b);
  }
};

// ---------------------------------------------------------------------------

template <class T>
struct BatchNorm2d {
  int c;
  Param<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  double momentum = 0.1, eps = 1e-5;
  // caches
  Tensor<T> xhat_;
  std::vector<T> invstd_;
  Mode mode_ = Mode::Train;

  BatchNorm2d(std::string name, int c_) : c(c_) {
    gamma.name = name + ".gamma";
    beta.name = name + ".beta";
    gamma.init_shape({size_t(c)});
    beta.init_shape({size_t(c)});
    std::fill(gamma.t.v.begin(), gamma.t.v.end(), T(1));
    running_mean.assign(size_t(c), T(0));
    running_var.assign(size_t(c), T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, bool update_stats = true) {
    if (x.shape.size() != 4 || int(x.shape[1]) != c)
      fail(ErrorKind::Shape, gamma.name + ": bad input shape");
    mode_ = mode;
    size_t n = x.shape[0], hw = x.shape[2] * x.shape[3];
    Tensor<T> y(x.shape);
    if (mode == Mode::Train) {
      if (n < 2)
        fail(ErrorKind::DegenerateBatch,
             gamma.name + ": train-mode batch of " + std::to_string(n));
      size_t m = n * hw;
      xhat_ = Tensor<T>(x.shape);
      invstd_.assign(size_t(c), T(0));
      for (size_t ci = 0; ci < size_t(c); ++ci) {
        double mean = 0;
        for (size_t ni = 0; ni < n; ++ni) {
          const T* p = x.v.data() + (ni * c + ci) * hw;
          for (size_t i = 0; i < hw; ++i) mean += double(p[i]);
        }
        mean /= double(m);
        double var = 0;
        for (size_t ni = 0; ni < n; ++ni) {
          const T* p = x.v.data() + (ni * c + ci) * hw;
          for (size_t i = 0; i < hw; ++i) {
            double d = double(p[i]) - mean;
            var += d * d;
          }
        }
        double var_b = var / double(m);            // biased, used to normalize
        double var_u = var / double(m - 1);        // unbiased, tracked
        if (update_stats) {
          running_mean[ci] = T((1 - momentum) * double(running_mean[ci]) + momentum * mean);
          running_var[ci] = T((1 - momentum) * double(running_var[ci]) + momentum * var_u);
        }
        T inv = T(1.0 / std::sqrt(var_b + eps));
        invstd_[ci] = inv;
        T mu = T(mean), ga = gamma.t.v[ci], be = beta.t.v[ci];
        for (size_t ni = 0; ni < n; ++ni) {
          const T* p = x.v.data() + (ni * c + ci) * hw;
          T* xh = xhat_.v.data() + (ni * c + ci) * hw;
          T* yp = y.v.data() + (ni * c + ci) * hw;
          for (size_t i = 0; i < hw; ++i) {
            xh[i] = (p[i] - mu) * inv;
            yp[i] = ga * xh[i] + be;
          }
        }
      }
    } else {
      // xhat is cached here too so eval-mode backward can produce the
      // gamma and beta gradients (running stats are constants then)
      xhat_ = Tensor<T>(x.shape);
      invstd_.assign(size_t(c), T(0));
      for (size_t ci = 0; ci < size_t(c); ++ci) {
        T inv = T(1.0 / std::sqrt(double(running_var[ci]) + eps));
        invstd_[ci] = inv;
        T mu = running_mean[ci], ga = gamma.t.v[ci], be = beta.t.v[ci];
        for (size_t ni = 0; ni < n; ++ni) {
          const T* p = x.v.data() + (ni * c + ci) * hw;
          T* xh = xhat_.v.data() + (ni * c + ci) * hw;
          T* yp = y.v.data() + (ni * c + ci) * hw;
          for (size_t i = 0; i < hw; ++i) {
            xh[i] = (p[i] - mu) * inv;
            yp[i] = ga * xh[i] + be;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    size_t n = dy.shape[0], hw = dy.shape[2] * dy.shape[3];
    Tensor<T> dx(dy.shape);
    if (mode_ == Mode::Train) {
      size_t m = n * hw;
      for (size_t ci = 0; ci < size_t(c); ++ci) {
        double sum_dy = 0, sum_dyx = 0;
        for (size_t ni = 0; ni < n; ++ni) {
          const T* dyp = dy.v.data() + (ni * c + ci) * hw;
          const T* xh = xhat_.v.data() + (ni * c + ci) * hw;
          for (size_t i = 0; i < hw; ++i) {
            sum_dy += double(dyp[i]);
            sum_dyx += double(dyp[i]) * double(xh[i]);
          }
        }
        gamma.t.g[ci] += T(sum_dyx);
        beta.t.g[ci] += T(sum_dy);
        T ga = gamma.t.v[ci], inv = invstd_[ci];
        T k1 = T(sum_dy / double(m)), k2 = T(sum_dyx / double(m));
        for (size_t ni = 0; ni < n; ++ni) {
          const T* dyp = dy.v.data() + (ni * c + ci) * hw;
          const T* xh = xhat_.v.data() + (ni * c + ci) * hw;
          T* dxp = dx.v.data() + (ni * c + ci) * hw;
          for (size_t i = 0; i < hw; ++i)
            dxp[i] = ga * inv * (dyp[i] - k1 - xh[i] * k2);
        }
      }
    } else {
      for (size_t ci = 0; ci < size_t(c); ++ci) {
        double sum_dy = 0, sum_dyx = 0;
        T ga = gamma.t.v[ci], inv = invstd_[ci];
        for (size_t ni = 0; ni < n; ++ni) {
          const T* dyp = dy.v.data() + (ni * c + ci) * hw;
          const T* xh = xhat_.v.data() + (ni * c + ci) * hw;
          T* dxp = dx.v.data() + (ni * c + ci) * hw;
          for (size_t i = 0; i < hw; ++i) {
            sum_dy += double(dyp[i]);
            sum_dyx += double(dyp[i]) * double(xh[i]);
            dxp[i] = dyp[i] * ga * inv;
          }
        }
        gamma.t.g[ci] += T(sum_dyx);
        beta.t.g[ci] += T(sum_dy);
      }
    }
    return dx;
  }

  void collect(std::vector<Param<T>*>& ps) {
    ps.push_back(&gamma);
    ps.push_back(&beta);
  }
};

// ---------------------------------------------------------------------------

template <class T>
struct ReLU {
  std::vector<uint8_t> mask_;

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y(x.shape);
    mask_.assign(x.size(), 0);
    for (size_t i = 0; i < x.size(); ++i) {
      if (x.v[i] > T(0)) {
        y.v[i] = x.v[i];
        mask_[i] = 1;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape);
    for (size_t i = 0; i < dy.size(); ++i)
      dx.v[i] = mask_[i] ? dy.v[i] : T(0);
    return dx;
  }
};

// ---------------------------------------------------------------------------

template <class T>
struct MaxPool2d {
  int win, stride, pad;
  bool frozen = false;  // reuse the cached argmax, for finite differencing
  std::vector<int> argmax_;  // flat (h*w) plane index of the winner
  std::vector<size_t> in_shape_;

  explicit MaxPool2d(int win_ = 2, int stride_ = 2, int pad_ = 0)
      : win(win_), stride(stride_), pad(pad_) {}

  Tensor<T> forward(const Tensor<T>& x) {
    int n = int(x.shape[0]), c = int(x.shape[1]);
    int ih = int(x.shape[2]), iw = int(x.shape[3]);
    if ((ih + 2 * pad - win) % stride != 0 || (iw + 2 * pad - win) % stride != 0)
      fail(ErrorKind::Shape, "pool extent not divisible by stride");
    int oh = (ih + 2 * pad - win) / stride + 1;
    int ow = (iw + 2 * pad - win) / stride + 1;
    size_t ysz = size_t(n) * size_t(c) * size_t(oh) * size_t(ow);
    if (frozen && in_shape_ == x.shape && argmax_.size() == ysz) {
      Tensor<T> y({size_t(n), size_t(c), size_t(oh), size_t(ow)});
      size_t ihw = size_t(ih) * size_t(iw);
      for (size_t i = 0; i < ysz; ++i) {
        size_t plane = i / (size_t(oh) * size_t(ow));
        y.v[i] = argmax_[i] >= 0
                     ? x.v[plane * ihw + size_t(argmax_[i])]
                     : -std::numeric_limits<T>::infinity();
      }
      return y;
    }
    in_shape_ = x.shape;
    Tensor<T> y({size_t(n), size_t(c), size_t(oh), size_t(ow)});
    argmax_.assign(y.size(), -1);
    size_t oi = 0;
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci) {
        const T* xp = x.v.data() + (size_t(ni) * c + ci) * ih * iw;
        for (int r = 0; r < oh; ++r)
          for (int col = 0; col < ow; ++col, ++oi) {
            T best = -std::numeric_limits<T>::infinity();
            int bi = -1;
            for (int kh = 0; kh < win; ++kh) {
              int hh = r * stride + kh - pad;
              if (hh < 0 || hh >= ih) continue;
              for (int kw = 0; kw < win; ++kw) {
                int ww = col * stride + kw - pad;
                if (ww < 0 || ww >= iw) continue;
                T v = xp[hh * iw + ww];
                if (v > best) {
                  best = v;
                  bi = hh * iw + ww;
                }
              }
            }
            y.v[oi] = best;
            argmax_[oi] = bi;
          }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(in_shape_);
    int c = int(in_shape_[1]);
    size_t ihw = in_shape_[2] * in_shape_[3];
    size_t ohw = dy.shape[2] * dy.shape[3];
    for (size_t ni = 0; ni < dy.shape[0]; ++ni)
      for (size_t ci = 0; ci < size_t(c); ++ci) {
        const T* dyp = dy.v.data() + (ni * c + ci) * ohw;
        T* dxp = dx.v.data() + (ni * c + ci) * ihw;
        const int* am = argmax_.data() + (ni * c + ci) * ohw;
        for (size_t i = 0; i < ohw; ++i)
          if (am[i] >= 0) dxp[am[i]] += dyp[i];
      }
    return dx;
  }
};

template <class T>
struct GlobalMaxPool {
  bool frozen = false;
  std::vector<int> argmax_;
  std::vector<size_t> in_shape_;

  Tensor<T> forward(const Tensor<T>& x) {
    size_t n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    if (frozen && in_shape_ == x.shape && argmax_.size() == n * c) {
      Tensor<T> y({n, c});
      for (size_t i = 0; i < n * c; ++i)
        y.v[i] = x.v[i * hw + size_t(argmax_[i])];
      return y;
    }
    in_shape_ = x.shape;
    Tensor<T> y({n, c});
    argmax_.assign(n * c, 0);
    for (size_t i = 0; i < n * c; ++i) {
      const T* p = x.v.data() + i * hw;
      T best = p[0];
      int bi = 0;
      for (size_t j = 1; j < hw; ++j)
        if (p[j] > best) {
          best = p[j];
          bi = int(j);
        }
      y.v[i] = best;
      argmax_[i] = bi;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(in_shape_);
    size_t hw = in_shape_[2] * in_shape_[3];
    for (size_t i = 0; i < dy.size(); ++i)
      dx.v[i * hw + size_t(argmax_[i])] += dy.v[i];
    return dx;
  }
};

// ---------------------------------------------------------------------------

template <class T>
struct Linear {
  int in_f, out_f;
  Param<T> w, b;  // w is (in_f, out_f)
  Tensor<T> x_;

  Linear(std::string name, int in_f_, int out_f_) : in_f(in_f_), out_f(out_f_) {
    w.name = name + ".w";
    b.name = name + ".b";
    w.init_shape({size_t(in_f), size_t(out_f)});
    b.init_shape({size_t(out_f)});
  }

  void init(Rng& rng) {
    fanin_uniform(w.t, size_t(in_f), rng);
    std::fill(b.t.v.begin(), b.t.v.end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.shape.size() != 2 || int(x.shape[1]) != in_f)
      fail(ErrorKind::Shape, w.name + ": input " + shape_str(x.shape) +
                                 " incompatible with in_f=" + std::to_string(in_f));
    x_ = x;
    size_t n = x.shape[0];
    Tensor<T> y({n, size_t(out_f)});
    for (size_t ni = 0; ni < n; ++ni) {
      T* yp = y.v.data() + ni * out_f;
      for (int g = 0; g < out_f; ++g) yp[g] = b.t.v[size_t(g)];
      const T* xp = x.v.data() + ni * in_f;
      for (int f = 0; f < in_f; ++f) {
        T xv = xp[f];
        const T* wr = w.t.v.data() + size_t(f) * out_f;
        for (int g = 0; g < out_f; ++g) yp[g] += xv * wr[g];
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    size_t n = dy.shape[0];
    Tensor<T> dx({n, size_t(in_f)});
    for (size_t ni = 0; ni < n; ++ni) {
      const T* dyp = dy.v.data() + ni * out_f;
      const T* xp = x_.v.data() + ni * in_f;
      T* dxp = dx.v.data() + ni * in_f;
      for (int f = 0; f < in_f; ++f) {
        const T* wr = w.t.v.data() + size_t(f) * out_f;
        T* wg = w.t.g.data() + size_t(f) * out_f;
        T acc = T(0);
        T xv = xp[f];
        for (int g = 0; g < out_f; ++g) {
          acc += dyp[g] * wr[g];
          wg[g] += xv * dyp[g];
        }
        dxp[f] = acc;
      }
      for (int g = 0; g < out_f; ++g) b.t.g[size_t(g)] += dyp[g];
    }
    return dx;
  }

  void collect(std::vector<Param<T>*>& ps) {
    ps.push_back(&w);
    ps.push_back(&b);
  }
};

// ---------------------------------------------------------------------------

template <class T>
struct Dropout {
  double p;
  bool frozen = false;  // reuse the stored mask (finite-difference checks)
  std::vector<uint8_t> mask_;

  explicit Dropout(double p_ = 0.5) : p(p_) {
    if (p < 0 || p >= 1) fail(ErrorKind::InvalidSpec, "dropout p outside [0,1)");
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) {
    if (mode == Mode::Eval || p == 0.0) {
      mask_.assign(x.size(), 1);
      return x;
    }
    if (!frozen || mask_.size() != x.size()) {
      if (!rng) fail(ErrorKind::InvalidSpec, "dropout needs an rng in train mode");
      mask_.assign(x.size(), 0);
      for (auto& m : mask_) m = rng->uniform() >= p ? 1 : 0;
    }
    T s = T(1.0 / (1.0 - p));
    Tensor<T> y(x.shape);
    for (size_t i = 0; i < x.size(); ++i)
      y.v[i] = mask_[i] ? x.v[i] * s : T(0);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    T s = T(1.0 / (1.0 - p));
    Tensor<T> dx(dy.shape);
    for (size_t i = 0; i < dy.size(); ++i)
      dx.v[i] = mask_[i] ? dy.v[i] * s : T(0);
    return dx;
  }
};

// ---------------------------------------------------------------------------

template <class T>
struct ChannelAttention {
  int c, r;
  bool frozen = false;
  Param<T> w1, b1, w2, b2;  // shared MLP: C -> C/r -> C
  Tensor<T> x_, s_;
  Tensor<T> avg_, mx_;
  Tensor<T> h_avg_, h_mx_;  // post-ReLU hidden activations
  std::vector<uint8_t> relu_avg_, relu_mx_;
  std::vector<int> argmax_;

  ChannelAttention(std::string name, int c_, int r_ = 8) : c(c_), r(r_) {
    if (c % r != 0)
      fail(ErrorKind::InvalidSpec, "channel count not divisible by reduction");
    int h = c / r;
    w1.name = name + ".w1";
    b1.name = name + ".b1";
    w2.name = name + ".w2";
    b2.name = name + ".b2";
    w1.init_shape({size_t(c), size_t(h)});
    b1.init_shape({size_t(h)});
    w2.init_shape({size_t(h), size_t(c)});
    b2.init_shape({size_t(c)});
  }

  void init(Rng& rng) {
    fanin_uniform(w1.t, size_t(c), rng);
    fanin_uniform(w2.t, size_t(c / r), rng);
  }

  // u:(n,C) -> post-ReLU h:(n,C/r), o:(n,C); relu mask recorded
  void mlp(const Tensor<T>& u, Tensor<T>& h, Tensor<T>& o,
           std::vector<uint8_t>& relu_mask) {
    size_t n = u.shape[0];
    int hd = c / r;
    h = Tensor<T>({n, size_t(hd)});
    o = Tensor<T>({n, size_t(c)});
    relu_mask.assign(n * size_t(hd), 0);
    for (size_t ni = 0; ni < n; ++ni) {
      for (int j = 0; j < hd; ++j) {
        T acc = b1.t.v[size_t(j)];
        for (int i = 0; i < c; ++i)
          acc += u.v[ni * c + i] * w1.t.v[size_t(i) * hd + j];
        if (acc > T(0)) {
          h.v[ni * hd + j] = acc;
          relu_mask[ni * hd + j] = 1;
        }
      }
      for (int j = 0; j < c; ++j) {
        T acc = b2.t.v[size_t(j)];
        for (int i = 0; i < hd; ++i)
          acc += h.v[ni * hd + i] * w2.t.v[size_t(i) * c + j];
        o.v[ni * size_t(c) + j] = acc;
      }
    }
  }

  // backward through the shared MLP for one branch; du returned
  Tensor<T> mlp_backward(const Tensor<T>& dout, const Tensor<T>& u,
                         const Tensor<T>& h, const std::vector<uint8_t>& relu_mask) {
    size_t n = dout.shape[0];
    int hd = c / r;
    Tensor<T> du({n, size_t(c)});
    for (size_t ni = 0; ni < n; ++ni) {
      std::vector<T> dh(size_t(hd), T(0));
      for (int j = 0; j < c; ++j) {
        T g = dout.v[ni * c + j];
        b2.t.g[size_t(j)] += g;
        for (int i = 0; i < hd; ++i) {
          w2.t.g[size_t(i) * c + j] += h.v[ni * hd + i] * g;
          dh[size_t(i)] += w2.t.v[size_t(i) * c + j] * g;
        }
      }
      for (int i = 0; i < hd; ++i)
        if (!relu_mask[ni * hd + i]) dh[size_t(i)] = T(0);
      for (int i = 0; i < hd; ++i) {
        T g = dh[size_t(i)];
        b1.t.g[size_t(i)] += g;
        for (int j = 0; j < c; ++j) {
          w1.t.g[size_t(j) * hd + i] += u.v[ni * c + j] * g;
          du.v[ni * size_t(c) + j] += w1.t.v[size_t(j) * hd + i] * g;
        }
      }
    }
    return du;
  }

  Tensor<T> forward(const Tensor<T>& x) {
    size_t n = x.shape[0], hw = x.shape[2] * x.shape[3];
    if (int(x.shape[1]) != c) fail(ErrorKind::Shape, "channel attention: bad C");
    bool reuse = frozen && x_.shape == x.shape && argmax_.size() == n * size_t(c);
    x_ = x;
    avg_ = Tensor<T>({n, size_t(c)});
    mx_ = Tensor<T>({n, size_t(c)});
    if (!reuse) argmax_.assign(n * size_t(c), 0);
    for (size_t i = 0; i < n * size_t(c); ++i) {
      const T* p = x.v.data() + i * hw;
      double acc = 0;
      T best = p[0];
      int bi = 0;
      for (size_t j = 0; j < hw; ++j) {
        acc += double(p[j]);
        if (p[j] > best) {
          best = p[j];
          bi = int(j);
        }
      }
      avg_.v[i] = T(acc / double(hw));
      if (reuse) {
        mx_.v[i] = p[size_t(argmax_[i])];
      } else {
        mx_.v[i] = best;
        argmax_[i] = bi;
      }
    }
    Tensor<T> o_avg, o_mx;
    mlp(avg_, h_avg_, o_avg, relu_avg_);
    mlp(mx_, h_mx_, o_mx, relu_mx_);
    s_ = Tensor<T>({n, size_t(c)});
    for (size_t i = 0; i < s_.size(); ++i)
      s_.v[i] = T(1) / (T(1) + std::exp(-(o_avg.v[i] + o_mx.v[i])));
    Tensor<T> y(x.shape);
    for (size_t i = 0; i < n * size_t(c); ++i) {
      const T* p = x.v.data() + i * hw;
      T* q = y.v.data() + i * hw;
      T sv = s_.v[i];
      for (size_t j = 0; j < hw; ++j) q[j] = p[j] * sv;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    size_t n = dy.shape[0], hw = dy.shape[2] * dy.shape[3];
    Tensor<T> dx(dy.shape);
    Tensor<T> dpre({n, size_t(c)});  // grad at the pre-sigmoid sum
    for (size_t i = 0; i < n * size_t(c); ++i) {
      const T* dyp = dy.v.data() + i * hw;
      const T* xp = x_.v.data() + i * hw;
      T* dxp = dx.v.data() + i * hw;
      T sv = s_.v[i];
      double ds = 0;
      for (size_t j = 0; j < hw; ++j) {
        ds += double(dyp[j]) * double(xp[j]);
        dxp[j] = dyp[j] * sv;
      }
      dpre.v[i] = T(ds) * sv * (T(1) - sv);
    }
    Tensor<T> du_avg = mlp_backward(dpre, avg_, h_avg_, relu_avg_);
    Tensor<T> du_mx = mlp_backward(dpre, mx_, h_mx_, relu_mx_);
    for (size_t i = 0; i < n * size_t(c); ++i) {
      T* dxp = dx.v.data() + i * hw;
      T spread = du_avg.v[i] / T(double(hw));
      for (size_t j = 0; j < hw; ++j) dxp[j] += spread;
      dxp[argmax_[i]] += du_mx.v[i];
    }
    return dx;
  }

  void collect(std::vector<Param<T>*>& ps) {
    ps.push_back(&w1);
    ps.push_back(&b1);
    ps.push_back(&w2);
    ps.push_back(&b2);
  }
};

// ---------------------------------------------------------------------------

template <class T>
struct SpatialAttention {
  int k;
  bool frozen = false;
  Param<T> w, b;  // conv (1, 2, k, k)
  Tensor<T> x_, stats_, m_, pre_;
  std::vector<int> argmax_ch_;

  explicit SpatialAttention(std::string name, int k_ = 7) : k(k_) {
    w.name = name + ".w";
    b.name = name + ".b";
    w.init_shape({1, 2, size_t(k), size_t(k)});
    b.init_shape({1});
  }

  void init(Rng& rng) { fanin_uniform(w.t, size_t(2 * k * k), rng); }

  Tensor<T> forward(const Tensor<T>& x) {
    size_t n = x.shape[0], c = x.shape[1];
    int h = int(x.shape[2]), wd = int(x.shape[3]);
    bool reuse = frozen && x_.shape == x.shape &&
                 argmax_ch_.size() == n * size_t(h) * size_t(wd);
    x_ = x;
    stats_ = Tensor<T>({n, 2, size_t(h), size_t(wd)});
    if (!reuse) argmax_ch_.assign(n * size_t(h) * size_t(wd), 0);
    for (size_t ni = 0; ni < n; ++ni)
      for (int i = 0; i < h * wd; ++i) {
        double acc = 0;
        T best = x.v[(ni * c) * size_t(h * wd) + size_t(i)];
        int bc = 0;
        for (size_t ci = 0; ci < c; ++ci) {
          T v = x.v[(ni * c + ci) * size_t(h * wd) + size_t(i)];
          acc += double(v);
          if (v > best) {
            best = v;
            bc = int(ci);
          }
        }
        if (reuse) {
          bc = argmax_ch_[ni * size_t(h * wd) + size_t(i)];
          best = x.v[(ni * c + size_t(bc)) * size_t(h * wd) + size_t(i)];
        }
        stats_.v[(ni * 2 + 0) * size_t(h * wd) + size_t(i)] = T(acc / double(c));
        stats_.v[(ni * 2 + 1) * size_t(h * wd) + size_t(i)] = best;
        argmax_ch_[ni * size_t(h * wd) + size_t(i)] = bc;
      }
    int pad = (k - 1) / 2;
    pre_ = Tensor<T>({n, 1, size_t(h), size_t(wd)});
    conv2d_forward(pre_.v.data(), stats_.v.data(), w.t.v.data(), b.t.v.data(),
                   int(n), 2, h, wd, 1, k, 1, 1, pad, h, wd);
    m_ = Tensor<T>(pre_.shape);
    for (size_t i = 0; i < m_.size(); ++i)
      m_.v[i] = T(1) / (T(1) + std::exp(-pre_.v[i]));
    Tensor<T> y(x.shape);
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t ci = 0; ci < c; ++ci) {
        const T* xp = x.v.data() + (ni * c + ci) * size_t(h * wd);
        const T* mp = m_.v.data() + ni * size_t(h * wd);
        T* yp = y.v.data() + (ni * c + ci) * size_t(h * wd);
        for (int i = 0; i < h * wd; ++i) yp[i] = xp[i] * mp[i];
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    size_t n = dy.shape[0], c = dy.shape[1];
    int h = int(dy.shape[2]), wd = int(dy.shape[3]);
    int hw = h * wd;
    Tensor<T> dx(dy.shape);
    Tensor<T> dpre(pre_.shape);
    for (size_t ni = 0; ni < n; ++ni)
      for (int i = 0; i < hw; ++i) {
        double dm = 0;
        const T* mp = m_.v.data() + ni * size_t(hw);
        for (size_t ci = 0; ci < c; ++ci) {
          size_t off = (ni * c + ci) * size_t(hw) + size_t(i);
          dm += double(dy.v[off]) * double(x_.v[off]);
          dx.v[off] = dy.v[off] * mp[i];
        }
        T mv = mp[i];
        dpre.v[ni * size_t(hw) + size_t(i)] = T(dm) * mv * (T(1) - mv);
      }
    int pad = (k - 1) / 2;
    Tensor<T> dstats(stats_.shape);
    conv2d_backward_weights(w.t.g.data(), b.t.g.data(), dpre.v.data(),
                            stats_.v.data(), int(n), 2, h, wd, 1, k, 1, 1, pad,
                            h, wd);
    conv2d_backward_input(dstats.v.data(), dpre.v.data(), w.t.v.data(), int(n),
                          2, h, wd, 1, k, 1, 1, pad, h, wd);
    for (size_t ni = 0; ni < n; ++ni)
      for (int i = 0; i < hw; ++i) {
        T davg = dstats.v[(ni * 2 + 0) * size_t(hw) + size_t(i)];
        T dmax = dstats.v[(ni * 2 + 1) * size_t(hw) + size_t(i)];
        T spread = davg / T(double(c));
        for (size_t ci = 0; ci < c; ++ci)
          dx.v[(ni * c + ci) * size_t(hw) + size_t(i)] += spread;
        size_t bc = size_t(argmax_ch_[ni * size_t(hw) + size_t(i)]);
        dx.v[(ni * c + bc) * size_t(hw) + size_t(i)] += dmax;
      }
    return dx;
  }

  void collect(std::vector<Param<T>*>& ps) {
    ps.push_back(&w);
    ps.push_back(&b);
  }
};

// ---------------------------------------------------------------------------

template <class T>
struct Grl {
  double lambda = 0.0;
  bool passthrough = false;  // identity backward, for adversarial-sign checks

  Tensor<T> forward(const Tensor<T>& x) { return x; }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (passthrough) return dy;
    Tensor<T> dx(dy.shape);
    T nl = T(-lambda);
    for (size_t i = 0; i < dy.size(); ++i) dx.v[i] = nl * dy.v[i];
    return dx;
  }
};

// ---------------------------------------------------------------------------

template <class T>
struct SoftmaxCrossEntropy {
  Tensor<T> probs_;
  std::vector<int> labels_;

  T forward(const Tensor<T>& logits, const std::vector<int>& labels) {
    size_t n = logits.shape[0], k = logits.shape[1];
    if (labels.size() != n) fail(ErrorKind::Shape, "label count != batch");
    probs_ = Tensor<T>({n, k});
    labels_ = labels;
    double loss = 0;
    for (size_t ni = 0; ni < n; ++ni) {
      if (labels[ni] < 0 || size_t(labels[ni]) >= k)
        fail(ErrorKind::InvalidLabel,
             "label " + std::to_string(labels[ni]) + " outside [0," +
                 std::to_string(k) + ")");
      const T* lp = logits.v.data() + ni * k;
      T mx = lp[0];
      for (size_t j = 1; j < k; ++j) mx = std::max(mx, lp[j]);
      double z = 0;
      for (size_t j = 0; j < k; ++j) z += std::exp(double(lp[j] - mx));
      for (size_t j = 0; j < k; ++j)
        probs_.v[ni * k + j] = T(std::exp(double(lp[j] - mx)) / z);
      loss += -(double(lp[size_t(labels[ni])] - mx) - std::log(z));
    }
    return T(loss / double(n));
  }

  Tensor<T> backward(T scale = T(1)) {
    size_t n = probs_.shape[0], k = probs_.shape[1];
    Tensor<T> d({n, k});
    T inv_n = scale / T(double(n));
    for (size_t ni = 0; ni < n; ++ni)
      for (size_t j = 0; j < k; ++j) {
        T p = probs_.v[ni * k + j];
        d.v[ni * k + j] = (p - T(j == size_t(labels_[ni]) ? 1 : 0)) * inv_n;
      }
    return d;
  }
};

// ---------------------------------------------------------------------------

// Supervised contrastive loss over L2-normalized rows; anchors with no
// positive partner are skipped. Returns the sum over valid anchors.
template <class T>
struct SupConLoss {
  double tau;
  Tensor<T> z_;           // normalized rows
  Tensor<T> raw_;         // pre-normalization input
  std::vector<T> norms_;
  std::vector<int> labels_;
  std::vector<int> pos_count_;
  Tensor<T> q_;  // softmax weights q[i,a], zero diagonal, rows for valid anchors

  explicit SupConLoss(double tau_ = 0.05) : tau(tau_) {}

  T forward(const Tensor<T>& features, const std::vector<int>& labels) {
    size_t n = features.shape[0], f = features.shape[1];
    if (n < 2) fail(ErrorKind::InsufficientData, "supcon needs a batch of >= 2");
    if (labels.size() != n) fail(ErrorKind::Shape, "label count != batch");
    raw_ = features;
    labels_ = labels;
    z_ = Tensor<T>({n, f});
    norms_.assign(n, T(0));
    for (size_t i = 0; i < n; ++i) {
      double s = 0;
      const T* p = features.v.data() + i * f;
      for (size_t j = 0; j < f; ++j) s += double(p[j]) * double(p[j]);
      T nv = T(std::sqrt(s));
      if (!(nv > T(0)))
        fail(ErrorKind::DegenerateChannel, "zero-norm feature row in supcon");
      norms_[i] = nv;
      for (size_t j = 0; j < f; ++j) z_.v[i * f + j] = p[j] / nv;
    }
    pos_count_.assign(n, 0);
    for (size_t i = 0; i < n; ++i)
      for (size_t a = 0; a < n; ++a)
        if (a != i && labels[a] == labels[i]) ++pos_count_[i];

    // dot matrix
    std::vector<double> dot(n * n, 0.0);
    for (size_t i = 0; i < n; ++i)
      for (size_t a = i + 1; a < n; ++a) {
        double s = 0;
        for (size_t j = 0; j < f; ++j)
          s += double(z_.v[i * f + j]) * double(z_.v[a * f + j]);
        dot[i * n + a] = s;
        dot[a * n + i] = s;
      }

    q_ = Tensor<T>({n, n});
    double loss = 0;
    for (size_t i = 0; i < n; ++i) {
      if (pos_count_[i] == 0) continue;
      double mx = -1e300;
      for (size_t a = 0; a < n; ++a)
        if (a != i) mx = std::max(mx, dot[i * n + a] / tau);
      double den = 0;
      for (size_t a = 0; a < n; ++a)
        if (a != i) den += std::exp(dot[i * n + a] / tau - mx);
      double log_den = mx + std::log(den);
      for (size_t a = 0; a < n; ++a)
        if (a != i)
          q_.v[i * n + a] = T(std::exp(dot[i * n + a] / tau - mx) / den);
      double pos_sum = 0;
      for (size_t p = 0; p < n; ++p)
        if (p != i && labels[p] == labels[i]) pos_sum += dot[i * n + p] / tau;
      loss += -pos_sum / double(pos_count_[i]) + log_den;
    }
    return T(loss);
  }

  Tensor<T> backward(T scale = T(1)) {
    size_t n = z_.shape[0], f = z_.shape[1];
    // m[i,a] = dL/d(dot(i,a)) pieces folded into one coefficient matrix
    std::vector<double> m(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      if (pos_count_[i] == 0) continue;
      for (size_t a = 0; a < n; ++a) {
        if (a == i) continue;
        double v = double(q_.v[i * n + a]) / tau;
        if (labels_[a] == labels_[i]) v -= 1.0 / (tau * double(pos_count_[i]));
        m[i * n + a] = v;
      }
    }
    // dz_k = sum_a (m[k,a] + m[a,k]) z_a
    Tensor<T> dz({n, f});
    for (size_t k = 0; k < n; ++k) {
      for (size_t a = 0; a < n; ++a) {
        double coef = m[k * n + a] + m[a * n + k];
        if (coef == 0.0) continue;
        const T* za = z_.v.data() + a * f;
        T* dzk = dz.v.data() + k * f;
        for (size_t j = 0; j < f; ++j) dzk[j] += T(coef) * za[j];
      }
    }
    // through the normalization: dv = (dz - z (z.dz)) / ||v||
    Tensor<T> dv({n, f});
    for (size_t i = 0; i < n; ++i) {
      const T* zp = z_.v.data() + i * f;
      const T* dzp = dz.v.data() + i * f;
      double zd = 0;
      for (size_t j = 0; j < f; ++j) zd += double(zp[j]) * double(dzp[j]);
      for (size_t j = 0; j < f; ++j)
        dv.v[i * f + j] = scale * T((double(dzp[j]) - double(zp[j]) * zd) / double(norms_[i]));
    }
    return dv;
  }
};

// ---------------------------------------------------------------------------

// Central finite differences against an analytic gradient. `loss` must
// re-evaluate the full forward pass using the current contents of `vals`.
template <class T>
double grad_check(const std::function<double()>& loss, T* vals,
                  const T* analytic, size_t count, double h = 1e-5) {
  double worst = 0;
  for (size_t i = 0; i < count; ++i) {
    T keep = vals[i];
    vals[i] = keep + T(h);
    double lp = loss();
    vals[i] = keep - T(h);
    double lm = loss();
    vals[i] = keep;
    double num = (lp - lm) / (2 * h);
    double err = std::abs(double(analytic[i]) - num) / std::max(1.0, std::abs(num));
    worst = std::max(worst, err);
    if (!std::isfinite(err)) fail(ErrorKind::NonFinite, "non-finite in grad check");
  }
  return worst;
}

// Same, over a subset of coordinates. A coordinate whose estimate moves when
// h is halved has a relu kink inside the probe interval; the central
// difference measures a chord across the kink rather than the derivative, so
// that coordinate is skipped.
template <class T>
double grad_check_at(const std::function<double()>& loss, T* vals,
                     const T* analytic, const std::vector<size_t>& idx,
                     double h = 1e-5) {
  double worst = 0;
  for (size_t i : idx) {
    T keep = vals[i];
    auto fd = [&](double hh) {
      vals[i] = keep + T(hh);
      double lp = loss();
      vals[i] = keep - T(hh);
      double lm = loss();
      vals[i] = keep;
      return (lp - lm) / (2 * hh);
    };
    double num = fd(h);
    double num2 = fd(h / 2);
    if (std::abs(num - num2) / std::max(1.0, std::abs(num2)) > 1e-7) continue;
    double err = std::abs(double(analytic[i]) - num) / std::max(1.0, std::abs(num));
    worst = std::max(worst, err);
    if (!std::isfinite(err)) fail(ErrorKind::NonFinite, "non-finite in grad check");
  }
  return worst;
}

}  // namespace fatiguenet::nn
