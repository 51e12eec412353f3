#pragma once
// Shared test oracles, deliberately independent of the library's own DSP:
// FFT amplitude spectra, Goertzel probes, median frequency, Spearman rank
// correlation with a t-distribution p-value, and a tiny separable image set.
#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "fatiguenet/dataset.hpp"

namespace oracle {

inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse = false) {
  size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2 * M_PI / double(len) * (inverse ? 1 : -1);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1);
      for (size_t k = 0; k < len / 2; ++k) {
        auto u = a[i + k], v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= double(n);
}

// amplitude spectrum of the first 2^m >= n padded signal; bin k is k*rate/nfft Hz
inline std::vector<double> amplitude_spectrum(const std::vector<double>& x,
                                              size_t& nfft_out) {
  size_t nfft = 1;
  while (nfft < x.size()) nfft <<= 1;
  std::vector<std::complex<double>> a(nfft);
  for (size_t i = 0; i < x.size(); ++i) a[i] = x[i];
  fft_inplace(a);
  nfft_out = nfft;
  std::vector<double> amp(nfft / 2 + 1);
  for (size_t k = 0; k < amp.size(); ++k)
    amp[k] = std::abs(a[k]) * 2.0 / double(x.size());
  return amp;
}

inline double dominant_frequency(const std::vector<double>& x, double rate) {
  size_t nfft = 0;
  auto amp = amplitude_spectrum(x, nfft);
  size_t best = 1;
  for (size_t k = 1; k < amp.size(); ++k)
    if (amp[k] > amp[best]) best = k;
  return double(best) * rate / double(nfft);
}

// single-bin DFT amplitude of a known frequency (steady-state sine measurements)
inline double goertzel_amplitude(const std::vector<double>& x, double rate,
                                 double f) {
  double w = 2 * M_PI * f / rate;
  double c = 2 * std::cos(w);
  double s0 = 0, s1 = 0, s2 = 0;
  for (double v : x) {
    s0 = v + c * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  std::complex<double> y(s1 - s2 * std::cos(w), s2 * std::sin(w));
  return std::abs(y) * 2.0 / double(x.size());
}

// frequency splitting the power spectrum into equal halves
inline double median_frequency(const std::vector<double>& x, double rate) {
  size_t nfft = 0;
  auto amp = amplitude_spectrum(x, nfft);
  std::vector<double> power(amp.size());
  for (size_t k = 0; k < amp.size(); ++k) power[k] = amp[k] * amp[k];
  double total = std::accumulate(power.begin(), power.end(), 0.0);
  double acc = 0;
  for (size_t k = 0; k < power.size(); ++k) {
    acc += power[k];
    if (acc >= total / 2) return double(k) * rate / double(nfft);
  }
  return rate / 2;
}

inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), size_t(0));
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    double mean_rank = (double(i) + double(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) r[idx[k]] = mean_rank;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / double(a.size());
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / double(b.size());
  double sab = 0, sa = 0, sb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    sa += (a[i] - ma) * (a[i] - ma);
    sb += (b[i] - mb) * (b[i] - mb);
  }
  if (sa == 0 || sb == 0) return 0;
  return sab / std::sqrt(sa * sb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

// regularized incomplete beta via Lentz continued fraction
inline double betacf(double a, double b, double x) {
  const double eps = 1e-12, fpmin = 1e-300;
  double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1, d = 1 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1) < eps) break;
  }
  return h;
}

inline double ibeta(double a, double b, double x) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
              a * std::log(x) + b * std::log(1 - x);
  double bt = std::exp(ln);
  if (x < (a + 1) / (a + b + 2)) return bt * betacf(a, b, x) / a;
  return 1 - bt * betacf(b, a, 1 - x) / b;
}

// two-sided p-value for Spearman rho via the t approximation, df = n-2
inline double spearman_pvalue(double rho, size_t n) {
  if (n < 3) return 1.0;
  double df = double(n - 2);
  double denom = 1 - rho * rho;
  if (denom <= 0) return 0.0;
  double t = rho * std::sqrt(df / denom);
  double p_one = 0.5 * ibeta(df / 2, 0.5, df / (df + t * t));
  return std::min(1.0, 2 * p_one);
}

// ---------------------------------------------------------------------------
// Tiny in-memory image set: class -> bright horizontal band, subject -> a
// vertical marker column. Linearly separable on both axes.
inline fatiguenet::data::SampleSet micro_set(int n_subjects, int per_class,
                                             size_t s = 16,
                                             double subject_gain = 0.5,
                                             uint64_t seed = 5) {
  fatiguenet::data::SampleSet set;
  set.channels = 6;
  set.rows = set.cols = s;
  fatiguenet::Rng rng(seed, 0x311);
  for (int subj = 0; subj < n_subjects; ++subj) {
    for (int cls = 0; cls < 3; ++cls) {
      for (int i = 0; i < per_class; ++i) {
        fatiguenet::data::TFSample sample;
        sample.label = cls;
        sample.subject = subj;
        sample.borg = cls * 4;
        sample.rep = i;
        sample.values.assign(6 * s * s, 0.f);
        size_t band0 = size_t(cls) * s / 3, band1 = band0 + s / 3;
        size_t marker = 2 + (size_t(subj) * 3) % (s - 4);
        for (size_t c = 0; c < 6; ++c)
          for (size_t r = 0; r < s; ++r)
            for (size_t t = 0; t < s; ++t) {
              double v = 0.05 + 0.03 * rng.uniform();
              if (r >= band0 && r < band1) v += 0.6;
              if (t == marker) v += subject_gain;
              sample.values[(c * s + r) * s + t] = float(v);
            }
        set.samples.push_back(std::move(sample));
      }
    }
  }
  for (size_t k = 0; k < s; ++k) {
    set.freq_axis.push_back(200.0 - double(k));
    set.time_axis.push_back((double(k) + 0.5) / double(s));
  }
  return set;
}

}  // namespace oracle
