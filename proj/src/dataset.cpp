#include "fatiguenet/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "fatiguenet/error.hpp"
#include "json.hpp"

namespace fatiguenet::data {

using dsp::TimeSeries;

namespace {

TimeSeries condition_semg(const TimeSeries& semg, const PreprocessParams& pp) {
  dsp::FilterSpec bp;
  bp.kind = dsp::FilterKind::Bandpass;
  bp.order = pp.bp_order;
  bp.corner_low_hz = pp.bp_low_hz;
  bp.corner_high_hz = pp.bp_high_hz;
  TimeSeries out = dsp::iir_filter(semg, bp);
  dsp::FilterSpec notch;
  notch.kind = dsp::FilterKind::Notch;
  notch.corner_low_hz = pp.notch_hz;
  notch.q = pp.notch_q;
  return dsp::iir_filter(out, notch);
}

}  // namespace

SampleSet preprocess_dataset(const std::vector<seg::Trial>& trials,
                             const PreprocessParams& pp) {
  if (trials.empty()) fail(ErrorKind::EmptyInput, "no trials to preprocess");
  SampleSet set;
  set.rows = set.cols = pp.image_size;

  std::vector<TimeSeries> filtered(trials.size());
  for (size_t i = 0; i < trials.size(); ++i)
    filtered[i] = condition_semg(trials[i].semg, pp);

  // session-wide RMS envelope per subject -> per-channel MVC
  std::map<int, std::vector<size_t>> by_subject;
  for (size_t i = 0; i < trials.size(); ++i)
    by_subject[trials[i].subject_id].push_back(i);
  std::map<int, std::vector<double>> mvc;
  for (auto& [sid, idxs] : by_subject) {
    TimeSeries env;
    env.rate = filtered[idxs[0]].rate / double(pp.rms_stride);
    env.data.assign(filtered[idxs[0]].channels(), {});
    for (size_t i : idxs) {
      TimeSeries r = dsp::sliding_rms(filtered[i], pp.rms_window, pp.rms_stride);
      for (size_t c = 0; c < r.channels(); ++c)
        env.data[c].insert(env.data[c].end(), r.data[c].begin(), r.data[c].end());
    }
    mvc[sid] = dsp::mvc_estimate(env);
  }

  dsp::CwtParams cp;
  cp.wavelet = pp.wavelet;
  cp.n_scales = pp.image_size;
  cp.n_time = pp.image_size;
  cp.f_min_hz = pp.cwt_f_min_hz;
  cp.f_max_hz = pp.cwt_f_max_hz;

  std::map<std::pair<int, int>, int> rep_counter;
  for (size_t i = 0; i < trials.size(); ++i) {
    const seg::Trial& tr = trials[i];
    int rep = rep_counter[{tr.subject_id, tr.borg}]++;
    TimeSeries norm = dsp::normalize_by_mvc(filtered[i], mvc[tr.subject_id]);
    auto [semg, imu] = seg::align_streams(norm, tr.imu, pp.align);
    seg::SegmentationResult segres = seg::segment_phases(imu, pp.segmenter);
    for (const auto& s : segres.segments)
      set.segment_report.push_back({tr.subject_id, tr.borg, rep, s.phase,
                                    double(s.start) / imu.rate,
                                    double(s.end) / imu.rate});
    auto label = seg::borg_to_label(tr.borg);
    if (!label) {
      ++set.unlabeled_trials;
      continue;
    }
    seg::HoldExtraction ex =
        seg::extract_holding(semg, segres.segments, pp.min_hold_s);
    set.dropped_short_holds += ex.dropped_short;
    for (size_t h = 0; h < ex.holds.size(); ++h) {
      const TimeSeries& slice = ex.holds[h];
      TFSample sample;
      sample.label = int(*label);
      sample.subject = tr.subject_id;
      sample.borg = tr.borg;
      sample.rep = rep;
      sample.hold = int(h);
      sample.values.resize(set.channels * set.rows * set.cols);
      double peak = 0;
      std::vector<dsp::TFImage> imgs(slice.channels());
      for (size_t c = 0; c < slice.channels(); ++c) {
        imgs[c] = dsp::cwt_magnitude(slice.data[c], slice.rate, cp);
        for (double v : imgs[c].values) peak = std::max(peak, v);
      }
      if (set.freq_axis.empty()) {
        set.freq_axis = imgs[0].freq_axis;
        set.time_axis = imgs[0].time_axis;
      }
      double inv = peak > 0 ? 1.0 / peak : 0.0;
      for (size_t c = 0; c < imgs.size(); ++c)
        for (size_t k = 0; k < imgs[c].values.size(); ++k)
          sample.values[c * set.rows * set.cols + k] =
              float(imgs[c].values[k] * inv);
      set.samples.push_back(std::move(sample));
    }
  }
  return set;
}

void write_samples(const SampleSet& set, const std::string& bin_path,
                   const std::string& json_path) {
  size_t per = set.channels * set.rows * set.cols;
  nlohmann::json side;
  side["shape"] = {set.samples.size(), set.channels, set.rows, set.cols};
  side["freq_axis"] = set.freq_axis;
  side["time_axis"] = set.time_axis;
  std::vector<int> labels, subjects, borgs, reps, holds;
  for (const auto& s : set.samples) {
    labels.push_back(s.label);
    subjects.push_back(s.subject);
    borgs.push_back(s.borg);
    reps.push_back(s.rep);
    holds.push_back(s.hold);
  }
  side["labels"] = labels;
  side["subjects"] = subjects;
  side["borgs"] = borgs;
  side["reps"] = reps;
  side["holds"] = holds;
  side["dropped_short_holds"] = set.dropped_short_holds;
  side["unlabeled_trials"] = set.unlabeled_trials;

  std::string btmp = bin_path + ".tmp";
  {
    std::ofstream f(btmp, std::ios::binary);
    if (!f) fail(ErrorKind::Io, "cannot write " + btmp);
    for (const auto& s : set.samples) {
      if (s.values.size() != per)
        fail(ErrorKind::Shape, "sample size does not match set shape");
      f.write(reinterpret_cast<const char*>(s.values.data()),
              std::streamsize(per * sizeof(float)));
    }
    if (!f) fail(ErrorKind::Io, "short write to " + btmp);
  }
  std::string jtmp = json_path + ".tmp";
  {
    std::ofstream f(jtmp);
    if (!f) fail(ErrorKind::Io, "cannot write " + jtmp);
    f << side.dump(2) << "\n";
  }
  if (std::rename(btmp.c_str(), bin_path.c_str()) != 0)
    fail(ErrorKind::Io, "cannot move " + btmp + " into place");
  if (std::rename(jtmp.c_str(), json_path.c_str()) != 0)
    fail(ErrorKind::Io, "cannot move " + jtmp + " into place");
}

SampleSet read_samples(const std::string& bin_path, const std::string& json_path) {
  std::ifstream jf(json_path);
  if (!jf) fail(ErrorKind::Io, "cannot open " + json_path);
  nlohmann::json side = nlohmann::json::parse(jf, nullptr, false);
  if (side.is_discarded()) fail(ErrorKind::Io, "bad JSON in " + json_path);

  SampleSet set;
  auto shape = side["shape"].get<std::vector<size_t>>();
  if (shape.size() != 4) fail(ErrorKind::Io, "sidecar shape must have 4 entries");
  size_t n = shape[0];
  set.channels = shape[1];
  set.rows = shape[2];
  set.cols = shape[3];
  set.freq_axis = side["freq_axis"].get<std::vector<double>>();
  set.time_axis = side["time_axis"].get<std::vector<double>>();
  auto labels = side["labels"].get<std::vector<int>>();
  auto subjects = side["subjects"].get<std::vector<int>>();
  auto borgs = side["borgs"].get<std::vector<int>>();
  auto reps = side["reps"].get<std::vector<int>>();
  auto holds = side["holds"].get<std::vector<int>>();
  if (labels.size() != n || subjects.size() != n || borgs.size() != n ||
      reps.size() != n || holds.size() != n)
    fail(ErrorKind::Io, "sidecar arrays disagree with shape[0]");
  set.dropped_short_holds = side.value("dropped_short_holds", size_t(0));
  set.unlabeled_trials = side.value("unlabeled_trials", size_t(0));

  std::ifstream bf(bin_path, std::ios::binary);
  if (!bf) fail(ErrorKind::Io, "cannot open " + bin_path);
  size_t per = set.channels * set.rows * set.cols;
  set.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    TFSample& s = set.samples[i];
    s.values.resize(per);
    bf.read(reinterpret_cast<char*>(s.values.data()),
            std::streamsize(per * sizeof(float)));
    if (!bf) fail(ErrorKind::Io, bin_path + " truncated at sample " + std::to_string(i));
    s.label = labels[i];
    s.subject = subjects[i];
    s.borg = borgs[i];
    s.rep = reps[i];
    s.hold = holds[i];
  }
  bf.peek();
  if (!bf.eof()) fail(ErrorKind::Io, bin_path + " larger than sidecar shape");
  return set;
}

}  // namespace fatiguenet::data
