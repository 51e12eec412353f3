#include "fatiguenet/kernels.hpp"

#include <algorithm>
#include <vector>

namespace fatiguenet::nn {

namespace {

// copy channel planes into a zero border of `pad` cells on every side
template <class T>
void pad_planes(T* dst, const T* src, int ch, int ih, int iw, int pad) {
  const int ph = ih + 2 * pad, pw = iw + 2 * pad;
  std::fill(dst, dst + size_t(ch) * ph * pw, T(0));
  for (int ci = 0; ci < ch; ++ci)
    for (int r = 0; r < ih; ++r) {
      const T* s = src + (size_t(ci) * ih + r) * iw;
      std::copy(s, s + iw, dst + (size_t(ci) * ph + r + pad) * pw + pad);
    }
}

// out[r][c] += sum_t wv[t] * in[off[t] + r*pw + c] over an oh x ow plane.
// Every output element sees its taps in ascending t order, one add per tap,
// so the values are bit-identical to a naive gather; the zero border only
// inserts +w*0 terms which do not change finite sums. Blocked 4 rows by
// 4 taps to cut accumulator load/store traffic.
template <class T>
void gather_plane(T* out, int oh, int ow, const T* in, int pw, const int* off,
                  const T* wv, int nt) {
  int r = 0;
  for (; r + 4 <= oh; r += 4) {
    T* q0 = out + size_t(r) * ow;
    T* q1 = q0 + ow;
    T* q2 = q1 + ow;
    T* q3 = q2 + ow;
    int t = 0;
    for (; t + 4 <= nt; t += 4) {
      const T* pa = in + off[t + 0] + size_t(r) * pw;
      const T* pb = in + off[t + 1] + size_t(r) * pw;
      const T* pc = in + off[t + 2] + size_t(r) * pw;
      const T* pd = in + off[t + 3] + size_t(r) * pw;
      const T w0 = wv[t + 0], w1 = wv[t + 1], w2 = wv[t + 2], w3 = wv[t + 3];
      const int s1 = pw, s2 = 2 * pw, s3 = 3 * pw;
#pragma omp simd
      for (int c = 0; c < ow; ++c) {
        T v0 = q0[c];
        v0 += w0 * pa[c];
        v0 += w1 * pb[c];
        v0 += w2 * pc[c];
        v0 += w3 * pd[c];
        q0[c] = v0;
        T v1 = q1[c];
        v1 += w0 * pa[c + s1];
        v1 += w1 * pb[c + s1];
        v1 += w2 * pc[c + s1];
        v1 += w3 * pd[c + s1];
        q1[c] = v1;
        T v2 = q2[c];
        v2 += w0 * pa[c + s2];
        v2 += w1 * pb[c + s2];
        v2 += w2 * pc[c + s2];
        v2 += w3 * pd[c + s2];
        q2[c] = v2;
        T v3 = q3[c];
        v3 += w0 * pa[c + s3];
        v3 += w1 * pb[c + s3];
        v3 += w2 * pc[c + s3];
        v3 += w3 * pd[c + s3];
        q3[c] = v3;
      }
    }
    for (; t < nt; ++t) {
      const T* pa = in + off[t] + size_t(r) * pw;
      const T w0 = wv[t];
      const int s1 = pw, s2 = 2 * pw, s3 = 3 * pw;
#pragma omp simd
      for (int c = 0; c < ow; ++c) {
        q0[c] += w0 * pa[c];
        q1[c] += w0 * pa[c + s1];
        q2[c] += w0 * pa[c + s2];
        q3[c] += w0 * pa[c + s3];
      }
    }
  }
  for (; r < oh; ++r) {
    T* q = out + size_t(r) * ow;
    for (int t = 0; t < nt; ++t) {
      const T* pa = in + off[t] + size_t(r) * pw;
      const T w0 = wv[t];
#pragma omp simd
      for (int c = 0; c < ow; ++c) q[c] += w0 * pa[c];
    }
  }
}

}  // namespace

template <class T>
void conv2d_forward_ref(T* y, const T* x, const T* w, const T* b, int n,
                        int ic, int ih, int iw, int oc, int k, int dil,
                        int stride, int pad, int oh, int ow) {
  for (int ni = 0; ni < n; ++ni)
    for (int o = 0; o < oc; ++o)
      for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
          T acc = b ? b[o] : T(0);
          for (int i = 0; i < ic; ++i)
            for (int kh = 0; kh < k; ++kh) {
              int hh = r * stride + kh * dil - pad;
              if (hh < 0 || hh >= ih) continue;
              for (int kw = 0; kw < k; ++kw) {
                int ww = c * stride + kw * dil - pad;
                if (ww < 0 || ww >= iw) continue;
                acc += w[((o * ic + i) * k + kh) * k + kw] *
                       x[((ni * ic + i) * ih + hh) * iw + ww];
              }
            }
          y[((ni * oc + o) * oh + r) * ow + c] = acc;
        }
}

template <class T>
void conv2d_forward(T* y, const T* x, const T* w, const T* b, int n, int ic,
                    int ih, int iw, int oc, int k, int dil, int stride,
                    int pad, int oh, int ow) {
  if (stride != 1) {
    conv2d_forward_ref(y, x, w, b, n, ic, ih, iw, oc, k, dil, stride, pad, oh, ow);
    return;
  }
  const int ph = ih + 2 * pad, pw = iw + 2 * pad;
  const int nt = ic * k * k;
  std::vector<int> off(static_cast<size_t>(nt));
  {
    int t = 0;
    for (int i = 0; i < ic; ++i)
      for (int kh = 0; kh < k; ++kh)
        for (int kw = 0; kw < k; ++kw, ++t)
          off[t] = (i * ph + kh * dil) * pw + kw * dil;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int ni = 0; ni < n; ++ni) {
    std::vector<T> xp(size_t(ic) * ph * pw);
    pad_planes(xp.data(), x + size_t(ni) * ic * ih * iw, ic, ih, iw, pad);
    for (int o = 0; o < oc; ++o) {
      T* yb = y + (size_t(ni) * oc + o) * oh * ow;
      const T bias = b ? b[o] : T(0);
      std::fill(yb, yb + size_t(oh) * ow, bias);
      // weights of one output channel are already contiguous in tap order
      gather_plane(yb, oh, ow, xp.data(), pw, off.data(), w + size_t(o) * nt,
                   nt);
    }
  }
}

template <class T>
void conv2d_backward_input_ref(T* dx, const T* dy, const T* w, int n, int ic,
                               int ih, int iw, int oc, int k, int dil,
                               int stride, int pad, int oh, int ow) {
  for (int ni = 0; ni < n; ++ni)
    for (int i = 0; i < ic; ++i)
      for (int h = 0; h < ih; ++h)
        for (int v = 0; v < iw; ++v) {
          T& dst = dx[((ni * ic + i) * ih + h) * iw + v];
          for (int o = 0; o < oc; ++o)
            for (int kh = 0; kh < k; ++kh) {
              int r = h + pad - kh * dil;
              if (r % stride != 0) continue;
              r /= stride;
              if (r < 0 || r >= oh) continue;
              for (int kw = 0; kw < k; ++kw) {
                int c = v + pad - kw * dil;
                if (c % stride != 0) continue;
                c /= stride;
                if (c < 0 || c >= ow) continue;
                dst += w[((o * ic + i) * k + kh) * k + kw] *
                       dy[((ni * oc + o) * oh + r) * ow + c];
              }
            }
        }
}

template <class T>
void conv2d_backward_input(T* dx, const T* dy, const T* w, int n, int ic,
                           int ih, int iw, int oc, int k, int dil, int stride,
                           int pad, int oh, int ow) {
  if (stride != 1) {
    conv2d_backward_input_ref(dx, dy, w, n, ic, ih, iw, oc, k, dil, stride, pad, oh, ow);
    return;
  }
  // border wide enough that every tap of every dx element lands inside the
  // padded dy plane; row index h + pad - kh*dil + q stays in [0, ph)
  const int q = (k - 1) * dil;
  const int ph = oh + 2 * q, pw = ow + 2 * q;
  const int u = q + pad;
  const int nt = oc * k * k;
  std::vector<int> off(static_cast<size_t>(nt));
  std::vector<T> wg(size_t(ic) * nt);
  {
    int t = 0;
    for (int o = 0; o < oc; ++o)
      for (int kh = 0; kh < k; ++kh)
        for (int kw = 0; kw < k; ++kw, ++t) {
          off[t] = (o * ph + (u - kh * dil)) * pw + (u - kw * dil);
          for (int i = 0; i < ic; ++i)
            wg[size_t(i) * nt + t] = w[((o * ic + i) * k + kh) * k + kw];
        }
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int ni = 0; ni < n; ++ni) {
    std::vector<T> dp(size_t(oc) * ph * pw);
    pad_planes(dp.data(), dy + size_t(ni) * oc * oh * ow, oc, oh, ow, q);
    for (int i = 0; i < ic; ++i)
      gather_plane(dx + (size_t(ni) * ic + i) * ih * iw, ih, iw, dp.data(),
                   pw, off.data(), wg.data() + size_t(i) * nt, nt);
  }
}

template <class T>
void conv2d_backward_weights_ref(T* dw, T* db, const T* dy, const T* x, int n,
                                 int ic, int ih, int iw, int oc, int k,
                                 int dil, int stride, int pad, int oh,
                                 int ow) {
  for (int o = 0; o < oc; ++o) {
    for (int i = 0; i < ic; ++i)
      for (int kh = 0; kh < k; ++kh)
        for (int kw = 0; kw < k; ++kw) {
          T acc = T(0);
          for (int ni = 0; ni < n; ++ni)
            for (int r = 0; r < oh; ++r) {
              int hh = r * stride + kh * dil - pad;
              if (hh < 0 || hh >= ih) continue;
              for (int c = 0; c < ow; ++c) {
                int ww = c * stride + kw * dil - pad;
                if (ww < 0 || ww >= iw) continue;
                acc += dy[((ni * oc + o) * oh + r) * ow + c] *
                       x[((ni * ic + i) * ih + hh) * iw + ww];
              }
            }
          dw[((o * ic + i) * k + kh) * k + kw] += acc;
        }
    if (db) {
      T acc = T(0);
      for (int ni = 0; ni < n; ++ni)
        for (int rc = 0; rc < oh * ow; ++rc)
          acc += dy[((size_t(ni) * oc + o) * oh) * ow + rc];
      db[o] += acc;
    }
  }
}

template <class T>
void conv2d_backward_weights(T* dw, T* db, const T* dy, const T* x, int n,
                             int ic, int ih, int iw, int oc, int k, int dil,
                             int stride, int pad, int oh, int ow) {
  if (stride != 1) {
    conv2d_backward_weights_ref(dw, db, dy, x, n, ic, ih, iw, oc, k, dil, stride, pad, oh, ow);
    return;
  }
  const int ph = ih + 2 * pad, pw = iw + 2 * pad;
  std::vector<T> xp(size_t(n) * ic * ph * pw);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int ni = 0; ni < n; ++ni)
    pad_planes(xp.data() + size_t(ni) * ic * ph * pw,
               x + size_t(ni) * ic * ih * iw, ic, ih, iw, pad);
  // row dots are vectorized reductions, so dw can differ from the reference
  // by reassociation roundoff; db keeps the reference order exactly
  constexpr int VW = 8;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int o = 0; o < oc; ++o) {
    for (int i = 0; i < ic; ++i)
      for (int kh = 0; kh < k; ++kh)
        for (int kw = 0; kw < k; ++kw) {
          // four lane accumulators, one per row slot, summed once at the end
          // so short rows never pay a horizontal reduction
          T l0[VW] = {}, l1[VW] = {}, l2[VW] = {}, l3[VW] = {};
          T tail = T(0);
          const int wv = ow - ow % VW;
          for (int ni = 0; ni < n; ++ni) {
            const T* dyb = dy + (size_t(ni) * oc + o) * oh * ow;
            const T* xb = xp.data() +
                          ((size_t(ni) * ic + i) * ph + kh * dil) * pw +
                          kw * dil;
            int r = 0;
            for (; r + 4 <= oh; r += 4) {
              const T* d0 = dyb + size_t(r) * ow;
              const T* d1 = d0 + ow;
              const T* d2 = d1 + ow;
              const T* d3 = d2 + ow;
              const T* x0 = xb + size_t(r) * pw;
              const T* x1 = x0 + pw;
              const T* x2 = x1 + pw;
              const T* x3 = x2 + pw;
              for (int c = 0; c < wv; c += VW) {
#pragma omp simd
                for (int v = 0; v < VW; ++v) {
                  l0[v] += d0[c + v] * x0[c + v];
                  l1[v] += d1[c + v] * x1[c + v];
                  l2[v] += d2[c + v] * x2[c + v];
                  l3[v] += d3[c + v] * x3[c + v];
                }
              }
              for (int c = wv; c < ow; ++c) {
                tail += d0[c] * x0[c];
                tail += d1[c] * x1[c];
                tail += d2[c] * x2[c];
                tail += d3[c] * x3[c];
              }
            }
            for (; r < oh; ++r) {
              const T* d0 = dyb + size_t(r) * ow;
              const T* x0 = xb + size_t(r) * pw;
              for (int c = 0; c < wv; c += VW) {
#pragma omp simd
                for (int v = 0; v < VW; ++v) l0[v] += d0[c + v] * x0[c + v];
              }
              for (int c = wv; c < ow; ++c) tail += d0[c] * x0[c];
            }
          }
          T acc = tail;
          for (int v = 0; v < VW; ++v)
            acc += ((l0[v] + l1[v]) + (l2[v] + l3[v]));
          dw[((o * ic + i) * k + kh) * k + kw] += acc;
        }
    if (db) {
      T acc = T(0);
      for (int ni = 0; ni < n; ++ni)
        for (int rc = 0; rc < oh * ow; ++rc)
          acc += dy[((size_t(ni) * oc + o) * oh) * ow + rc];
      db[o] += acc;
    }
  }
}

#define FN_INSTANTIATE(T)                                                      \
  template void conv2d_forward_ref<T>(T*, const T*, const T*, const T*, int,  \
                                      int, int, int, int, int, int, int, int, \
                                      int, int);                              \
  template void conv2d_forward<T>(T*, const T*, const T*, const T*, int, int, \
                                  int, int, int, int, int, int, int, int,     \
                                  int);                                       \
  template void conv2d_backward_input_ref<T>(T*, const T*, const T*, int,     \
                                             int, int, int, int, int, int,    \
                                             int, int, int, int);             \
  template void conv2d_backward_input<T>(T*, const T*, const T*, int, int,    \
                                         int, int, int, int, int, int, int,   \
                                         int, int);                           \
  template void conv2d_backward_weights_ref<T>(T*, T*, const T*, const T*,    \
                                               int, int, int, int, int, int,  \
                                               int, int, int, int, int);      \
  template void conv2d_backward_weights<T>(T*, T*, const T*, const T*, int,   \
                                           int, int, int, int, int, int, int, \
                                           int, int, int);

FN_INSTANTIATE(float)
FN_INSTANTIATE(double)
#undef FN_INSTANTIATE

}  // namespace fatiguenet::nn
