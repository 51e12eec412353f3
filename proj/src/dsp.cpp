#include "fatiguenet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fatiguenet::dsp {

namespace {

using cd = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;

void check_finite(const TimeSeries& ts, const char* who) {
  for (const auto& ch : ts.data)
    for (double x : ch)
      if (!std::isfinite(x)) fail(ErrorKind::NonFinite, std::string(who) + " produced non-finite values");
}

std::vector<cd> butter_proto_poles(int n) {
  std::vector<cd> p;
  p.reserve(n);
  for (int k = 0; k < n; ++k) {
    double theta = kPi * (2.0 * k + n + 1.0) / (2.0 * n);
    p.emplace_back(std::cos(theta), std::sin(theta));
  }
  return p;
}

double prewarp(double f_hz, double rate) {
  return 2.0 * rate * std::tan(kPi * f_hz / rate);
}

cd bilinear_pole(cd s, double rate) {
  return (2.0 * rate + s) / (2.0 * rate - s);
}

// Group digital poles into real-coefficient sections. n_z_pos / n_z_neg are
// the counts of digital zeros at z=+1 and z=-1 to distribute.
SosFilter assemble_sections(std::vector<cd> zpoles, int n_z_pos, int n_z_neg) {
  SosFilter f;
  std::vector<bool> used(zpoles.size(), false);
  while (true) {
    int i = -1;
    double best = -1.0;
    for (size_t k = 0; k < zpoles.size(); ++k)
      if (!used[k] && std::abs(zpoles[k].imag()) > best) {
        best = std::abs(zpoles[k].imag());
        i = int(k);
      }
    if (i < 0) break;
    used[i] = true;
    double a1, a2;
    if (std::abs(zpoles[i].imag()) > 1e-10) {
      // conjugate partner
      int j = -1;
      double d = 1e300;
      for (size_t k = 0; k < zpoles.size(); ++k)
        if (!used[k]) {
          double dd = std::abs(zpoles[k] - std::conj(zpoles[i]));
          if (dd < d) {
            d = dd;
            j = int(k);
          }
        }
      if (j < 0) fail(ErrorKind::InvalidSpec, "unpaired complex pole");
      used[j] = true;
      a1 = -(zpoles[i] + zpoles[j]).real();
      a2 = (zpoles[i] * zpoles[j]).real();
    } else {
      // real pole: prefer another real pole, else first-order section
      int j = -1;
      for (size_t k = 0; k < zpoles.size(); ++k)
        if (!used[k] && std::abs(zpoles[k].imag()) <= 1e-10) {
          j = int(k);
          break;
        }
      if (j >= 0) {
        used[j] = true;
        a1 = -(zpoles[i].real() + zpoles[j].real());
        a2 = zpoles[i].real() * zpoles[j].real();
      } else {
        a1 = -zpoles[i].real();
        a2 = 0.0;
      }
    }
    bool first_order = (a2 == 0.0) && (std::abs(zpoles[i].imag()) <= 1e-10);
    double b0 = 1, b1 = 0, b2 = 0;
    if (first_order) {
      if (n_z_neg > 0) {
        b1 = 1;
        --n_z_neg;
      } else if (n_z_pos > 0) {
        b1 = -1;
        --n_z_pos;
      }
    } else if (n_z_pos > 0 && n_z_neg > 0) {
      b1 = 0;
      b2 = -1;  // (z-1)(z+1)
      --n_z_pos;
      --n_z_neg;
    } else if (n_z_neg >= 2) {
      b1 = 2;
      b2 = 1;  // (z+1)^2
      n_z_neg -= 2;
    } else if (n_z_pos >= 2) {
      b1 = -2;
      b2 = 1;
      n_z_pos -= 2;
    } else if (n_z_neg == 1) {
      b1 = 1;
    } else if (n_z_pos == 1) {
      b1 = -1;
    }
    f.sections.push_back({b0, b1, b2, a1, a2});
  }
  return f;
}

cd section_response(const Biquad& s, cd z) {
  cd zi = 1.0 / z;
  return (s.b0 + s.b1 * zi + s.b2 * zi * zi) /
         (1.0 + s.a1 * zi + s.a2 * zi * zi);
}

double filter_magnitude(const SosFilter& f, double w) {
  cd z = std::polar(1.0, w);
  cd h = 1.0;
  for (const auto& s : f.sections) h *= section_response(s, z);
  return std::abs(h);
}

void normalize_gain(SosFilter& f, double w_ref) {
  double h = filter_magnitude(f, w_ref);
  if (h <= 0) fail(ErrorKind::InvalidSpec, "degenerate filter gain");
  double g = std::pow(1.0 / h, 1.0 / double(f.sections.size()));
  for (auto& s : f.sections) {
    s.b0 *= g;
    s.b1 *= g;
    s.b2 *= g;
  }
}

}  // namespace

SosFilter design_filter(const FilterSpec& spec, double rate) {
  if (rate <= 0) fail(ErrorKind::InvalidSpec, "sampling rate must be positive");
  double nyq = rate / 2.0;
  if (spec.order < 1) fail(ErrorKind::InvalidSpec, "filter order must be >= 1");

  switch (spec.kind) {
    case FilterKind::Lowpass: {
      double fc = spec.corner_low_hz;
      if (fc <= 0 || fc >= nyq)
        fail(ErrorKind::InvalidSpec, "lowpass corner outside (0, Nyquist)");
      double wc = prewarp(fc, rate);
      auto poles = butter_proto_poles(spec.order);
      std::vector<cd> zp;
      for (auto p : poles) zp.push_back(bilinear_pole(p * wc, rate));
      SosFilter f = assemble_sections(std::move(zp), 0, spec.order);
      normalize_gain(f, 0.0);  // unity at DC
      return f;
    }
    case FilterKind::Bandpass: {
      double fl = spec.corner_low_hz, fh = spec.corner_high_hz;
      if (fl <= 0 || fh <= fl || fh >= nyq)
        fail(ErrorKind::InvalidSpec, "bandpass corners outside (0, Nyquist)");
      double wl = prewarp(fl, rate), wh = prewarp(fh, rate);
      double w0 = std::sqrt(wl * wh), bw = wh - wl;
      auto poles = butter_proto_poles(spec.order);
      std::vector<cd> zp;
      for (auto p : poles) {
        cd b = p * bw * 0.5;
        cd d = std::sqrt(b * b - w0 * w0);
        zp.push_back(bilinear_pole(b + d, rate));
        zp.push_back(bilinear_pole(b - d, rate));
      }
      SosFilter f = assemble_sections(std::move(zp), spec.order, spec.order);
      normalize_gain(f, 2.0 * std::atan(w0 / (2.0 * rate)));
      return f;
    }
    case FilterKind::Notch: {
      double f0 = spec.corner_low_hz;
      if (f0 <= 0 || f0 >= nyq)
        fail(ErrorKind::InvalidSpec, "notch center outside (0, Nyquist)");
      if (spec.q <= 0) fail(ErrorKind::InvalidSpec, "notch q must be positive");
      double w0 = 2.0 * kPi * f0 / rate;
      double alpha = std::sin(w0) / (2.0 * spec.q);
      double a0 = 1.0 + alpha;
      Biquad s{1.0 / a0, -2.0 * std::cos(w0) / a0, 1.0 / a0,
               -2.0 * std::cos(w0) / a0, (1.0 - alpha) / a0};
      return SosFilter{{s}};
    }
  }
  fail(ErrorKind::InvalidSpec, "unknown filter kind");
}

TimeSeries sosfilt(const SosFilter& f, const TimeSeries& x) {
  if (x.length() == 0) fail(ErrorKind::EmptyInput, "empty signal");
  TimeSeries y = x;
  for (auto& ch : y.data) {
    for (const auto& s : f.sections) {
      double s1 = 0, s2 = 0;
      for (double& v : ch) {
        double in = v;
        double out = s.b0 * in + s1;
        s1 = s.b1 * in - s.a1 * out + s2;
        s2 = s.b2 * in - s.a2 * out;
        v = out;
      }
    }
  }
  check_finite(y, "sosfilt");
  return y;
}

TimeSeries filtfilt(const SosFilter& f, const TimeSeries& x) {
  if (x.length() == 0) fail(ErrorKind::EmptyInput, "empty signal");
  size_t pad = size_t(3 * f.digital_order());
  size_t n = x.length();
  if (n <= pad)
    fail(ErrorKind::InsufficientData,
         "signal shorter than zero-phase padding (" + std::to_string(pad) + ")");
  TimeSeries y = x;
  for (auto& ch : y.data) {
    std::vector<double> ext(n + 2 * pad);
    for (size_t i = 0; i < pad; ++i)
      ext[i] = 2.0 * ch[0] - ch[pad - i];
    std::copy(ch.begin(), ch.end(), ext.begin() + pad);
    for (size_t i = 0; i < pad; ++i)
      ext[pad + n + i] = 2.0 * ch[n - 1] - ch[n - 2 - i];

    // each section starts in steady state for a constant input equal to the
    // first padded sample, otherwise low corners ring for far longer than the
    // reflection pad covers
    auto run = [&](std::vector<double>& v) {
      for (const auto& s : f.sections) {
        double u0 = v[0];
        double den = 1.0 + s.a1 + s.a2;
        double s1 = 0, s2 = 0;
        if (std::abs(den) > 1e-12) {
          double y0 = u0 * (s.b0 + s.b1 + s.b2) / den;
          s1 = y0 - s.b0 * u0;
          s2 = s.b2 * u0 - s.a2 * y0;
        }
        for (double& xv : v) {
          double in = xv;
          double out = s.b0 * in + s1;
          s1 = s.b1 * in - s.a1 * out + s2;
          s2 = s.b2 * in - s.a2 * out;
          xv = out;
        }
      }
    };
    run(ext);
    std::reverse(ext.begin(), ext.end());
    run(ext);
    std::reverse(ext.begin(), ext.end());
    std::copy(ext.begin() + pad, ext.begin() + pad + n, ch.begin());
  }
  check_finite(y, "filtfilt");
  return y;
}

TimeSeries iir_filter(const TimeSeries& signal, const FilterSpec& spec) {
  if (signal.length() == 0) fail(ErrorKind::EmptyInput, "empty signal");
  SosFilter f = design_filter(spec, signal.rate);
  return filtfilt(f, signal);
}

namespace {

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  double hx = x / 2.0;
  for (int m = 1; m < 80; ++m) {
    term *= (hx / m) * (hx / m);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  double px = kPi * x;
  return std::sin(px) / px;
}

uint64_t gcd_u(uint64_t a, uint64_t b) { return b ? gcd_u(b, a % b) : a; }

}  // namespace

TimeSeries resample(const TimeSeries& signal, double to_rate) {
  if (to_rate <= 0) fail(ErrorKind::InvalidSpec, "target rate must be positive");
  if (signal.length() == 0) fail(ErrorKind::EmptyInput, "empty signal");
  double from_rate = signal.rate;
  uint64_t fi = uint64_t(std::llround(from_rate));
  uint64_t ti = uint64_t(std::llround(to_rate));
  if (std::abs(from_rate - double(fi)) > 1e-6 * from_rate ||
      std::abs(to_rate - double(ti)) > 1e-6 * to_rate)
    fail(ErrorKind::InvalidSpec, "non-integer rates unsupported");
  uint64_t g = gcd_u(fi, ti);
  size_t up = size_t(ti / g), down = size_t(fi / g);
  size_t n = signal.length();
  size_t out_n = size_t(std::llround(double(n) * to_rate / from_rate));

  TimeSeries y;
  y.rate = to_rate;
  y.channel_names = signal.channel_names;
  if (up == 1 && down == 1) {
    y.data = signal.data;
    return y;
  }

  // Kaiser-windowed sinc on the upsampled grid, beta 5, unity DC gain,
  // group delay of `half` compensated below.
  size_t mr = std::max(up, down);
  size_t half = 10 * mr;
  size_t taps = 2 * half + 1;
  double fc = 1.0 / double(mr);
  double i0b = bessel_i0(5.0);
  std::vector<double> h(taps);
  double hsum = 0.0;
  for (size_t i = 0; i < taps; ++i) {
    double t = double(i) - double(half);
    double r = t / double(half);
    double w = bessel_i0(5.0 * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[i] = fc * sinc(fc * t) * w;
    hsum += h[i];
  }
  for (auto& v : h) v *= double(up) / hsum;

  y.data.assign(signal.channels(), std::vector<double>(out_n, 0.0));
  for (size_t c = 0; c < signal.channels(); ++c) {
    const auto& x = signal.data[c];
    auto& o = y.data[c];
    for (size_t m = 0; m < out_n; ++m) {
      // position on the upsampled grid, delay-compensated
      size_t t = m * down + half;
      size_t k0 = t % up;
      double acc = 0.0;
      for (size_t k = k0; k < taps; k += up) {
        size_t tu = t - k;
        size_t q = tu / up;
        if (q < n) acc += h[k] * x[q];
        if (tu < up) break;
      }
      o[m] = acc;
    }
  }
  check_finite(y, "resample");
  return y;
}

TimeSeries sliding_rms(const TimeSeries& signal, size_t window, size_t stride) {
  if (signal.length() == 0) fail(ErrorKind::EmptyInput, "empty signal");
  if (window == 0 || stride == 0)
    fail(ErrorKind::InvalidSpec, "window and stride must be positive");
  size_t n = signal.length();
  if (n < window)
    fail(ErrorKind::InsufficientData, "signal shorter than RMS window");
  size_t count = (n - window) / stride + 1;
  TimeSeries y;
  y.rate = signal.rate / double(stride);
  y.channel_names = signal.channel_names;
  y.data.assign(signal.channels(), std::vector<double>(count));
  for (size_t c = 0; c < signal.channels(); ++c) {
    const auto& x = signal.data[c];
    for (size_t k = 0; k < count; ++k) {
      double acc = 0.0;
      size_t base = k * stride;
      for (size_t i = 0; i < window; ++i) acc += x[base + i] * x[base + i];
      y.data[c][k] = std::sqrt(acc / double(window));
    }
  }
  return y;
}

std::vector<double> mvc_estimate(const TimeSeries& rms) {
  if (rms.length() == 0) fail(ErrorKind::EmptyInput, "empty RMS envelope");
  std::vector<double> mvc(rms.channels());
  for (size_t c = 0; c < rms.channels(); ++c) {
    std::vector<double> s = rms.data[c];
    std::sort(s.begin(), s.end());
    size_t rank = size_t(std::ceil(0.95 * double(s.size())));  // 1-based
    mvc[c] = s[rank - 1];
  }
  return mvc;
}

TimeSeries normalize_by_mvc(const TimeSeries& signal,
                            const std::vector<double>& mvc) {
  if (mvc.size() != signal.channels())
    fail(ErrorKind::Shape, "mvc size does not match channel count");
  TimeSeries y = signal;
  for (size_t c = 0; c < y.channels(); ++c) {
    if (!(mvc[c] > 0))
      fail(ErrorKind::DegenerateChannel,
           "mvc <= 0 for channel " + std::to_string(c));
    for (double& v : y.data[c]) v /= mvc[c];
  }
  return y;
}

namespace {

std::vector<double> cwt_freqs(const CwtParams& p) {
  std::vector<double> f(p.n_scales);
  double ratio = p.f_min_hz / p.f_max_hz;
  for (size_t i = 0; i < p.n_scales; ++i)
    f[i] = p.f_max_hz *
           std::pow(ratio, double(i) / double(p.n_scales - 1));  // descending
  return f;
}

void cwt_check(const std::vector<double>& x, double rate, const CwtParams& p) {
  if (x.size() < 8) fail(ErrorKind::InsufficientData, "signal shorter than 8 samples");
  if (p.f_max_hz >= rate / 2.0)
    fail(ErrorKind::InvalidSpec, "cwt f_max at or above Nyquist");
  if (p.f_min_hz <= 0 || p.f_min_hz >= p.f_max_hz)
    fail(ErrorKind::InvalidSpec, "cwt frequency band is empty");
  if (p.n_scales < 2 || p.n_time < 1)
    fail(ErrorKind::InvalidSpec, "cwt grid too small");
}

}  // namespace

TFImage cwt_magnitude(const std::vector<double>& x, double rate,
                      const CwtParams& p) {
  cwt_check(x, rate, p);
  const double B = p.wavelet.bandwidth, C = p.wavelet.center_frequency;
  const size_t n = x.size();
  TFImage img;
  img.channels = 1;
  img.rows = p.n_scales;
  img.cols = p.n_time;
  img.values.assign(p.n_scales * p.n_time, 0.0);
  img.freq_axis = cwt_freqs(p);
  img.time_axis.resize(p.n_time);
  for (size_t k = 0; k < p.n_time; ++k)
    img.time_axis[k] = (double(k) + 0.5) / double(p.n_time);

  // Gaussian support beyond exp(-u^2/B) < 1e-8 is dropped.
  const double umax = std::sqrt(B * std::log(1e8));
  // amplitude-calibrated: a unit sine reads ~1 at its ridge regardless of a
  const double norm = 2.0 / (std::sqrt(kPi * B) * rate);

  std::vector<long> centers(p.n_time);
  for (size_t k = 0; k < p.n_time; ++k)
    centers[k] = std::lround((double(k) + 0.5) * double(n) / double(p.n_time) - 0.5);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (long si = 0; si < long(p.n_scales); ++si) {
    double a = C / img.freq_axis[size_t(si)];  // seconds
    long hw = long(std::ceil(umax * a * rate));
    // per-offset wavelet table, conjugated
    std::vector<double> wre(2 * hw + 1), wim(2 * hw + 1);
    for (long j = -hw; j <= hw; ++j) {
      double u = double(j) / (rate * a);
      double env = std::exp(-u * u / B);
      double ph = 2.0 * kPi * C * u;
      wre[size_t(j + hw)] = env * std::cos(ph);
      wim[size_t(j + hw)] = -env * std::sin(ph);
    }
    double scale = norm / a;
    for (size_t k = 0; k < p.n_time; ++k) {
      long c = centers[k];
      long lo = std::max(long(0), c - hw);
      long hi = std::min(long(n) - 1, c + hw);
      double ar = 0.0, ai = 0.0;
      const double* wr = wre.data() + (lo - (c - hw));
      const double* wi = wim.data() + (lo - (c - hw));
      const double* xv = x.data() + lo;
      long len = hi - lo + 1;
      for (long j = 0; j < len; ++j) {
        ar += xv[j] * wr[j];
        ai += xv[j] * wi[j];
      }
      img.values[size_t(si) * p.n_time + k] =
          std::sqrt(ar * ar + ai * ai) * scale;
    }
  }
  return img;
}

TFImage cwt_magnitude_ref(const std::vector<double>& x, double rate,
                          const CwtParams& p) {
  cwt_check(x, rate, p);
  const double B = p.wavelet.bandwidth, C = p.wavelet.center_frequency;
  const size_t n = x.size();
  TFImage img;
  img.channels = 1;
  img.rows = p.n_scales;
  img.cols = p.n_time;
  img.values.assign(p.n_scales * p.n_time, 0.0);
  img.freq_axis = cwt_freqs(p);
  img.time_axis.resize(p.n_time);
  for (size_t k = 0; k < p.n_time; ++k)
    img.time_axis[k] = (double(k) + 0.5) / double(p.n_time);
  const double umax = std::sqrt(B * std::log(1e8));

  for (size_t si = 0; si < p.n_scales; ++si) {
    double a = C / img.freq_axis[si];
    long hw = long(std::ceil(umax * a * rate));
    for (size_t k = 0; k < p.n_time; ++k) {
      long c = std::lround((double(k) + 0.5) * double(n) / double(p.n_time) - 0.5);
      double ar = 0.0, ai = 0.0;
      for (long j = std::max(long(0), c - hw);
           j <= std::min(long(n) - 1, c + hw); ++j) {
        double u = double(j - c) / (rate * a);
        double env = std::exp(-u * u / B) / std::sqrt(kPi * B);
        double ph = 2.0 * kPi * C * u;
        ar += x[size_t(j)] * env * std::cos(ph);
        ai += x[size_t(j)] * env * (-std::sin(ph));
      }
      double w = 2.0 * std::sqrt(ar * ar + ai * ai) / (a * rate);
      img.values[si * p.n_time + k] = w;
    }
  }
  return img;
}

TFImage cwt_image(const TimeSeries& signal, const CwtParams& p,
                  size_t channel) {
  if (signal.length() == 0) fail(ErrorKind::EmptyInput, "empty signal");
  if (channel >= signal.channels())
    fail(ErrorKind::Shape, "channel index out of range");
  TFImage img = cwt_magnitude(signal.data[channel], signal.rate, p);
  double mx = 0.0;
  for (double v : img.values) mx = std::max(mx, v);
  if (mx > 0)
    for (double& v : img.values) v /= mx;
  return img;
}

}  // namespace fatiguenet::dsp
