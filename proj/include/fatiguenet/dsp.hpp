#pragma once
#include <vector>

#include "fatiguenet/timeseries.hpp"

namespace fatiguenet::dsp {

enum class FilterKind { Bandpass, Lowpass, Notch };

struct FilterSpec {
  FilterKind kind = FilterKind::Bandpass;
  int order = 4;               // analog prototype order (bandpass doubles it)
  double corner_low_hz = 0.0;  // lowpass cutoff / bandpass low edge / notch center
  double corner_high_hz = 0.0;
  double q = 30.0;  // notch only
};

// One second-order section, direct form II transposed coefficients.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

struct SosFilter {
  std::vector<Biquad> sections;
  int digital_order() const { return int(sections.size()) * 2; }
};

SosFilter design_filter(const FilterSpec& spec, double rate);

// Single forward pass, zero initial state. Exposed for response measurements.
TimeSeries sosfilt(const SosFilter& f, const TimeSeries& x);

// Zero-phase forward-backward filtering with odd-reflect padding of
// 3x the digital order at both ends.
TimeSeries filtfilt(const SosFilter& f, const TimeSeries& x);

// Designs from spec and applies zero-phase.
TimeSeries iir_filter(const TimeSeries& signal, const FilterSpec& spec);

// Polyphase FIR rational resampling (Kaiser beta 5, linear phase,
// delay compensated).
TimeSeries resample(const TimeSeries& signal, double to_rate);

TimeSeries sliding_rms(const TimeSeries& signal, size_t window = 100,
                       size_t stride = 50);

// Nearest-rank 95th percentile per channel.
std::vector<double> mvc_estimate(const TimeSeries& rms);

TimeSeries normalize_by_mvc(const TimeSeries& signal,
                            const std::vector<double>& mvc);

struct WaveletSpec {
  double bandwidth = 1.5;
  double center_frequency = 1.0;
};

struct TFImage {
  size_t channels = 0, rows = 0, cols = 0;
  std::vector<double> values;  // channels x rows x cols
  std::vector<double> freq_axis;  // Hz, descending
  std::vector<double> time_axis;  // normalized [0,1]

  double& at(size_t c, size_t r, size_t t) {
    return values[(c * rows + r) * cols + t];
  }
  double at(size_t c, size_t r, size_t t) const {
    return values[(c * rows + r) * cols + t];
  }
};

struct CwtParams {
  WaveletSpec wavelet;
  size_t n_scales = 64;
  size_t n_time = 64;
  double f_min_hz = 20.0;
  double f_max_hz = 400.0;
};

// |W(a,b)| magnitudes of one channel, amplitude-calibrated so a pure sine
// reads its amplitude at the ridge on every scale.
TFImage cwt_magnitude(const std::vector<double>& x, double rate,
                      const CwtParams& p);
// Reference evaluation (direct per-tap wavelet evaluation, no tables).
TFImage cwt_magnitude_ref(const std::vector<double>& x, double rate,
                          const CwtParams& p);

// Single-channel scalogram, max-normalized to [0,1] (zero image stays zero).
TFImage cwt_image(const TimeSeries& signal, const CwtParams& p,
                  size_t channel = 0);

}  // namespace fatiguenet::dsp
