#pragma once

namespace fatiguenet::nn {

// Dense NCHW convolution kernels. The *_ref variants are the plain
// reference implementations kept for verification; the unsuffixed ones are
// the blocked OpenMP paths used by the layers. All accumulate with the same
// per-element term order (ic, kh, kw ascending) so the two stay comparable.
// Gradients accumulate into their output buffers.

template <class T>
void conv2d_forward_ref(T* y, const T* x, const T* w, const T* b, int n,
                        int ic, int ih, int iw, int oc, int k, int dil,
                        int stride, int pad, int oh, int ow);

template <class T>
void conv2d_forward(T* y, const T* x, const T* w, const T* b, int n, int ic,
                    int ih, int iw, int oc, int k, int dil, int stride,
                    int pad, int oh, int ow);

template <class T>
void conv2d_backward_input_ref(T* dx, const T* dy, const T* w, int n, int ic,
                               int ih, int iw, int oc, int k, int dil,
                               int stride, int pad, int oh, int ow);

template <class T>
void conv2d_backward_input(T* dx, const T* dy, const T* w, int n, int ic,
                           int ih, int iw, int oc, int k, int dil, int stride,
                           int pad, int oh, int ow);

template <class T>
void conv2d_backward_weights_ref(T* dw, T* db, const T* dy, const T* x, int n,
                                 int ic, int ih, int iw, int oc, int k,
                                 int dil, int stride, int pad, int oh, int ow);

template <class T>
void conv2d_backward_weights(T* dw, T* db, const T* dy, const T* x, int n,
                             int ic, int ih, int iw, int oc, int k, int dil,
                             int stride, int pad, int oh, int ow);

// output extent for one spatial axis
inline int conv_out_extent(int in, int k, int dil, int stride, int pad) {
  int r = k + (k - 1) * (dil - 1);
  return (in + 2 * pad - r) / stride + 1;
}

}  // namespace fatiguenet::nn
