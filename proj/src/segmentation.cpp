#include "fatiguenet/segmentation.hpp"

#include <algorithm>
#include <cmath>

#include "fatiguenet/dsp.hpp"

namespace fatiguenet::seg {

namespace {

constexpr double kPi = 3.14159265358979323846;

// gaussian FIR with replicated ends; a butterworth here rings on plateau
// corners and the velocity ripple defeats the dwell detector
std::vector<double> gaussian_smooth(const std::vector<double>& x, double sigma) {
  size_t n = x.size();
  int k = std::max(1, int(std::lround(4.0 * sigma)));
  std::vector<double> kern(size_t(2 * k + 1));
  double sum = 0;
  for (int j = -k; j <= k; ++j) {
    double w = std::exp(-0.5 * (j / sigma) * (j / sigma));
    kern[size_t(j + k)] = w;
    sum += w;
  }
  for (double& w : kern) w /= sum;
  std::vector<double> y(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double acc = 0;
    for (int j = -k; j <= k; ++j) {
      long idx = long(i) + j;
      if (idx < 0) idx = 0;
      if (idx >= long(n)) idx = long(n) - 1;
      acc += kern[size_t(j + k)] * x[size_t(idx)];
    }
    y[i] = acc;
  }
  return y;
}

}  // namespace

const char* phase_name(MotionPhase p) {
  switch (p) {
    case MotionPhase::Resting: return "Resting";
    case MotionPhase::Rising: return "Rising";
    case MotionPhase::Holding: return "Holding";
    case MotionPhase::Falling: return "Falling";
  }
  return "?";
}

std::optional<FatigueLabel> borg_to_label(int score) {
  if (score < 0 || score > 10)
    fail(ErrorKind::InvalidLabel, "borg score outside [0,10]: " + std::to_string(score));
  if (score <= 2) return FatigueLabel::NF;
  if (score == 3 || score == 7) return std::nullopt;
  if (score <= 6) return FatigueLabel::MF;
  return FatigueLabel::SF;
}

std::pair<dsp::TimeSeries, dsp::TimeSeries> align_streams(
    const dsp::TimeSeries& semg_raw, const dsp::TimeSeries& imu_raw,
    const AlignParams& p) {
  semg_raw.check();
  imu_raw.check();
  double gap = std::abs(semg_raw.duration() - imu_raw.duration());
  if (gap > p.max_duration_gap_s)
    fail(ErrorKind::Alignment,
         "stream durations differ by " + std::to_string(gap) + " s");

  dsp::FilterSpec lp;
  lp.kind = dsp::FilterKind::Lowpass;
  lp.order = p.imu_lowpass_order;
  lp.corner_low_hz = p.imu_lowpass_hz;
  dsp::TimeSeries imu_f = dsp::iir_filter(imu_raw, lp);

  dsp::TimeSeries semg = dsp::resample(semg_raw, p.to_rate);
  dsp::TimeSeries imu = dsp::resample(imu_f, p.to_rate);

  size_t n = std::min(semg.length(), imu.length());
  for (auto& ch : semg.data) ch.resize(n);
  for (auto& ch : imu.data) ch.resize(n);
  return {std::move(semg), std::move(imu)};
}

SegmentationResult segment_phases(const dsp::TimeSeries& imu,
                                  const SegmenterParams& p) {
  imu.check();
  if (imu.channels() < 1) fail(ErrorKind::EmptyInput, "no angle channel");
  const size_t n = imu.length();
  const double rate = imu.rate;

  // The raw derivative of the angle is too noisy for the velocity bands, so
  // the machine runs on a further-smoothed copy; thresholds are unchanged.
  double sigma = rate / (2.0 * kPi * p.velocity_lowpass_hz);
  std::vector<double> x = gaussian_smooth(imu.data[0], sigma);

  auto [mn_it, mx_it] = std::minmax_element(x.begin(), x.end());
  double xmin = *mn_it, xmax = *mx_it;
  double range = xmax - xmin;

  SegmentationResult res;
  if (range < p.flat_range) {
    res.flat = true;
    res.segments.push_back({MotionPhase::Resting, 0, n});
    return res;
  }

  // no velocity estimate where the smoothing window hangs off the ends; the
  // replicated edge gives the boundary sample enough leverage that its noise
  // alone can cross v_th
  std::vector<double> v(n, 0.0);
  size_t margin = std::min(n / 2, size_t(std::lround(2.0 * sigma)));
  for (size_t i = std::max<size_t>(margin, 1); i + std::max<size_t>(margin, 1) < n; ++i)
    v[i] = (x[i + 1] - x[i - 1]) * rate / 2.0;

  const double th_lo = xmin + p.theta_lo_frac * range;
  const double th_hi = xmin + p.theta_hi_frac * range;
  const double v_th = p.v_th_frac * range;
  const double v_eps = p.v_eps_frac * range;
  const size_t dwell = std::max<size_t>(1, size_t(std::lround(p.hold_dwell_s * rate)));

  MotionPhase state = MotionPhase::Resting;
  size_t seg_start = 0;
  size_t calm_run = 0;  // consecutive samples with x>th_hi and |v|<v_eps

  auto close = [&](size_t end, MotionPhase next, size_t next_start) {
    if (end > seg_start)
      res.segments.push_back({state, seg_start, end});
    state = next;
    seg_start = next_start;
  };

  for (size_t i = 0; i < n; ++i) {
    switch (state) {
      case MotionPhase::Resting:
        if (v[i] > v_th) close(i, MotionPhase::Rising, i);
        break;
      case MotionPhase::Rising:
        if (x[i] > th_hi && std::abs(v[i]) < v_eps)
          ++calm_run;
        else
          calm_run = 0;
        if (calm_run >= dwell) {
          size_t dwell_start = i + 1 - dwell;
          close(dwell_start, MotionPhase::Holding, dwell_start);
          calm_run = 0;
        }
        break;
      case MotionPhase::Holding:
        if (v[i] < -v_th) close(i, MotionPhase::Falling, i);
        break;
      case MotionPhase::Falling:
        if (x[i] < th_lo && std::abs(v[i]) < v_eps)
          close(i, MotionPhase::Resting, i);
        break;
    }
  }
  if (n > seg_start) res.segments.push_back({state, seg_start, n});
  return res;
}

HoldExtraction extract_holding(const dsp::TimeSeries& semg,
                               const std::vector<PhaseSegment>& segments,
                               double min_hold_s) {
  semg.check();
  HoldExtraction out;
  size_t min_len = size_t(std::lround(min_hold_s * semg.rate));
  for (const auto& s : segments) {
    if (s.phase != MotionPhase::Holding) continue;
    if (s.end > semg.length())
      fail(ErrorKind::Shape, "segment extends past the sEMG stream");
    if (s.end - s.start < min_len) {
      ++out.dropped_short;
      continue;
    }
    dsp::TimeSeries h;
    h.rate = semg.rate;
    h.channel_names = semg.channel_names;
    h.data.reserve(semg.channels());
    for (const auto& ch : semg.data)
      h.data.emplace_back(ch.begin() + long(s.start), ch.begin() + long(s.end));
    out.holds.push_back(std::move(h));
  }
  return out;
}

}  // namespace fatiguenet::seg
