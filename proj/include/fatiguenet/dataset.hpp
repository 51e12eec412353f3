#pragma once
#include <string>
#include <vector>

#include "fatiguenet/dsp.hpp"
#include "fatiguenet/segmentation.hpp"

namespace fatiguenet::data {

struct PreprocessParams {
  int bp_order = 4;
  double bp_low_hz = 20.0, bp_high_hz = 400.0;
  double notch_hz = 50.0, notch_q = 30.0;
  size_t rms_window = 100, rms_stride = 50;
  size_t image_size = 64;
  double cwt_f_min_hz = 20.0, cwt_f_max_hz = 200.0;
  dsp::WaveletSpec wavelet;
  double min_hold_s = 0.1;
  seg::AlignParams align;
  seg::SegmenterParams segmenter;
};

struct TFSample {
  std::vector<float> values;  // channels x rows x cols
  int label = 0;              // 0 NF, 1 MF, 2 SF
  int subject = 0;
  int borg = 0;
  int rep = 0;   // trial index within (subject, borg)
  int hold = 0;  // hold index within the trial
};

struct SegmentRow {
  int subject = 0, borg = 0, rep = 0;
  seg::MotionPhase phase{};
  double start_s = 0, end_s = 0;
};

struct SampleSet {
  size_t channels = 6, rows = 0, cols = 0;
  std::vector<double> freq_axis;  // Hz, descending
  std::vector<double> time_axis;  // normalized [0,1]
  std::vector<TFSample> samples;
  size_t dropped_short_holds = 0;
  size_t unlabeled_trials = 0;  // Borg 3 / 7, excluded
  std::vector<SegmentRow> segment_report;
};

// Full conditioning chain: bandpass+notch at the native rate, session-wide
// per-subject MVC normalization, 500 Hz alignment, phase segmentation,
// hold extraction, per-channel CWT, per-sample stack normalization.
SampleSet preprocess_dataset(const std::vector<seg::Trial>& trials,
                             const PreprocessParams& pp = {});

// f32 little-endian blob + JSON sidecar {shape, freq_axis, time_axis, labels, ...}
void write_samples(const SampleSet& set, const std::string& bin_path,
                   const std::string& json_path);
SampleSet read_samples(const std::string& bin_path, const std::string& json_path);

}  // namespace fatiguenet::data
