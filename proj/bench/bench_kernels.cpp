#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "fatiguenet/dsp.hpp"
#include "fatiguenet/kernels.hpp"
#include "fatiguenet/rng.hpp"

using namespace fatiguenet;
using Clock = std::chrono::steady_clock;

namespace {

double time_best(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    fn();
    auto t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

struct ConvCase {
  const char* name;
  int n, ic, ih, oc, k, dil, pad;
};

void fill(std::vector<float>& v, Rng& rng) {
  for (auto& x : v) x = float(rng.uniform(-1, 1));
}

double max_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

void bench_conv(const ConvCase& c) {
  int oh = nn::conv_out_extent(c.ih, c.k, c.dil, 1, c.pad);
  double macs = double(c.n) * c.oc * oh * oh * c.ic * c.k * c.k;
  Rng rng(7, 99);
  std::vector<float> x(size_t(c.n) * c.ic * c.ih * c.ih),
      w(size_t(c.oc) * c.ic * c.k * c.k), b(size_t(c.oc)),
      y_fast(size_t(c.n) * c.oc * oh * oh), y_ref(y_fast.size()),
      dy(y_fast.size()), dx_fast(x.size()), dx_ref(x.size()),
      dw_fast(w.size()), dw_ref(w.size()), db_fast(b.size()), db_ref(b.size());
  fill(x, rng);
  fill(w, rng);
  fill(b, rng);
  fill(dy, rng);

  auto fwd_fast = [&] {
    nn::conv2d_forward(y_fast.data(), x.data(), w.data(), b.data(), c.n, c.ic,
                       c.ih, c.ih, c.oc, c.k, c.dil, 1, c.pad, oh, oh);
  };
  auto fwd_ref = [&] {
    nn::conv2d_forward_ref(y_ref.data(), x.data(), w.data(), b.data(), c.n,
                           c.ic, c.ih, c.ih, c.oc, c.k, c.dil, 1, c.pad, oh, oh);
  };
  fwd_fast();
  fwd_ref();
  double fd = max_diff(y_fast, y_ref);
  double tf = time_best(5, fwd_fast), tr = time_best(2, fwd_ref);
  std::printf("%-14s fwd   ref %7.2f ms (%6.2f GMAC/s)  fast %7.2f ms (%6.2f GMAC/s)  x%5.1f  |diff| %.2e\n",
              c.name, tr * 1e3, macs / tr / 1e9, tf * 1e3, macs / tf / 1e9,
              tr / tf, fd);

  auto bwi_fast = [&] {
    std::fill(dx_fast.begin(), dx_fast.end(), 0.f);
    nn::conv2d_backward_input(dx_fast.data(), dy.data(), w.data(), c.n, c.ic,
                              c.ih, c.ih, c.oc, c.k, c.dil, 1, c.pad, oh, oh);
  };
  auto bwi_ref = [&] {
    std::fill(dx_ref.begin(), dx_ref.end(), 0.f);
    nn::conv2d_backward_input_ref(dx_ref.data(), dy.data(), w.data(), c.n, c.ic,
                                  c.ih, c.ih, c.oc, c.k, c.dil, 1, c.pad, oh, oh);
  };
  bwi_fast();
  bwi_ref();
  double bid = max_diff(dx_fast, dx_ref);
  tf = time_best(5, bwi_fast);
  tr = time_best(2, bwi_ref);
  std::printf("%-14s bwd_x ref %7.2f ms (%6.2f GMAC/s)  fast %7.2f ms (%6.2f GMAC/s)  x%5.1f  |diff| %.2e\n",
              c.name, tr * 1e3, macs / tr / 1e9, tf * 1e3, macs / tf / 1e9,
              tr / tf, bid);

  auto bww_fast = [&] {
    std::fill(dw_fast.begin(), dw_fast.end(), 0.f);
    std::fill(db_fast.begin(), db_fast.end(), 0.f);
    nn::conv2d_backward_weights(dw_fast.data(), db_fast.data(), dy.data(),
                                x.data(), c.n, c.ic, c.ih, c.ih, c.oc, c.k,
                                c.dil, 1, c.pad, oh, oh);
  };
  auto bww_ref = [&] {
    std::fill(dw_ref.begin(), dw_ref.end(), 0.f);
    std::fill(db_ref.begin(), db_ref.end(), 0.f);
    nn::conv2d_backward_weights_ref(dw_ref.data(), db_ref.data(), dy.data(),
                                    x.data(), c.n, c.ic, c.ih, c.ih, c.oc, c.k,
                                    c.dil, 1, c.pad, oh, oh);
  };
  bww_fast();
  bww_ref();
  double bwd = max_diff(dw_fast, dw_ref);
  tf = time_best(5, bww_fast);
  tr = time_best(2, bww_ref);
  std::printf("%-14s bwd_w ref %7.2f ms (%6.2f GMAC/s)  fast %7.2f ms (%6.2f GMAC/s)  x%5.1f  |diff| %.2e\n",
              c.name, tr * 1e3, macs / tr / 1e9, tf * 1e3, macs / tf / 1e9,
              tr / tf, bwd);
}

void bench_cwt() {
  Rng rng(3, 5);
  std::vector<double> x(500);
  for (auto& v : x) v = rng.normal();
  dsp::CwtParams p;
  p.f_max_hz = 200;
  double tf = time_best(5, [&] { dsp::cwt_magnitude(x, 500.0, p); });
  double tr = time_best(2, [&] { dsp::cwt_magnitude_ref(x, 500.0, p); });
  dsp::TFImage a = dsp::cwt_magnitude(x, 500.0, p);
  dsp::TFImage b = dsp::cwt_magnitude_ref(x, 500.0, p);
  double d = 0;
  for (size_t i = 0; i < a.values.size(); ++i)
    d = std::max(d, std::abs(a.values[i] - b.values[i]));
  std::printf("%-14s       ref %7.2f ms                  fast %7.2f ms                  x%5.1f  |diff| %.2e\n",
              "cwt 64x64", tr * 1e3, tf * 1e3, tr / tf, d);
}

}  // namespace

int main() {
  const ConvCase cases[] = {
      {"conv1 32px", 64, 6, 32, 32, 7, 2, 6},
      {"conv2 32px", 64, 32, 16, 64, 5, 2, 4},
      {"conv1 64px", 64, 6, 64, 32, 7, 2, 6},
      {"conv2 64px", 64, 32, 32, 64, 5, 2, 4},
      {"incep 5x5", 64, 16, 8, 32, 5, 1, 2},
  };
  for (const auto& c : cases) bench_conv(c);
  bench_cwt();
  return 0;
}
