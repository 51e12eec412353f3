#include "fatiguenet/config.hpp"

#include <fstream>

#include "fatiguenet/error.hpp"
#include "json.hpp"

namespace fatiguenet::cfg {

namespace {

using nlohmann::json;

template <class T>
T get_as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::InvalidConfig, "wrong value type for '" + where + "'");
  }
}

void bound(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorKind::InvalidConfig, msg);
}

void parse_synth(const json& j, synth::SynthConfig& s) {
  for (auto& [key, val] : j.items()) {
    if (key == "n_subjects")
      s.n_subjects = get_as<int>(val, "synth.n_subjects");
    else if (key == "trials_per_borg")
      s.trials_per_borg = get_as<int>(val, "synth.trials_per_borg");
    else if (key == "rng_seed")
      s.rng_seed = get_as<uint64_t>(val, "synth.rng_seed");
    else if (key == "imu_noise")
      s.imu_noise = get_as<double>(val, "synth.imu_noise");
    else
      fail(ErrorKind::InvalidConfig, "unknown key 'synth." + key + "'");
  }
}

void parse_dsp(const json& j, data::PreprocessParams& d) {
  for (auto& [key, val] : j.items()) {
    if (key == "bp_order")
      d.bp_order = get_as<int>(val, "dsp.bp_order");
    else if (key == "bp_low_hz")
      d.bp_low_hz = get_as<double>(val, "dsp.bp_low_hz");
    else if (key == "bp_high_hz")
      d.bp_high_hz = get_as<double>(val, "dsp.bp_high_hz");
    else if (key == "notch_hz")
      d.notch_hz = get_as<double>(val, "dsp.notch_hz");
    else if (key == "notch_q")
      d.notch_q = get_as<double>(val, "dsp.notch_q");
    else if (key == "rms_window")
      d.rms_window = get_as<size_t>(val, "dsp.rms_window");
    else if (key == "rms_stride")
      d.rms_stride = get_as<size_t>(val, "dsp.rms_stride");
    else if (key == "image_size")
      d.image_size = get_as<size_t>(val, "dsp.image_size");
    else if (key == "cwt_f_min_hz")
      d.cwt_f_min_hz = get_as<double>(val, "dsp.cwt_f_min_hz");
    else if (key == "cwt_f_max_hz")
      d.cwt_f_max_hz = get_as<double>(val, "dsp.cwt_f_max_hz");
    else if (key == "wavelet_b")
      d.wavelet.bandwidth = get_as<double>(val, "dsp.wavelet_b");
    else if (key == "wavelet_c")
      d.wavelet.center_frequency = get_as<double>(val, "dsp.wavelet_c");
    else if (key == "min_hold_s")
      d.min_hold_s = get_as<double>(val, "dsp.min_hold_s");
    else
      fail(ErrorKind::InvalidConfig, "unknown key 'dsp." + key + "'");
  }
}

void parse_train(const json& j, PipelineConfig& c) {
  for (auto& [key, val] : j.items()) {
    if (key == "epochs")
      c.train.epochs = get_as<int>(val, "train.epochs");
    else if (key == "batch_size")
      c.train.batch_size = get_as<int>(val, "train.batch_size");
    else if (key == "learning_rate")
      c.train.learning_rate = get_as<double>(val, "train.learning_rate");
    else if (key == "optimizer")
      c.train.optimizer = get_as<std::string>(val, "train.optimizer");
    else if (key == "alpha")
      c.train.weights.alpha = get_as<double>(val, "train.alpha");
    else if (key == "beta")
      c.train.weights.beta = get_as<double>(val, "train.beta");
    else if (key == "tau")
      c.train.weights.tau = get_as<double>(val, "train.tau");
    else if (key == "gamma")
      c.train.schedule_gamma = get_as<double>(val, "train.gamma");
    else if (key == "k")
      c.train.schedule_k = get_as<double>(val, "train.k");
    else if (key == "rng_seed")
      c.train.rng_seed = get_as<uint64_t>(val, "train.rng_seed");
    else if (key == "augment")
      c.train.augment = get_as<bool>(val, "train.augment");
    else if (key == "precision")
      c.precision = get_as<std::string>(val, "train.precision");
    else if (key == "variant")
      c.variant = get_as<std::string>(val, "train.variant");
    else
      fail(ErrorKind::InvalidConfig, "unknown key 'train." + key + "'");
  }
}

void parse_folds(const json& j, PipelineConfig& c) {
  for (auto& [key, val] : j.items()) {
    if (key == "k")
      c.folds_k = get_as<int>(val, "folds.k");
    else if (key == "seed")
      c.folds_seed = get_as<uint64_t>(val, "folds.seed");
    else
      fail(ErrorKind::InvalidConfig, "unknown key 'folds." + key + "'");
  }
}

void parse_paths(const json& j, PipelineConfig& c) {
  for (auto& [key, val] : j.items()) {
    if (key == "in")
      c.in_dir = get_as<std::string>(val, "paths.in");
    else if (key == "out")
      c.out_dir = get_as<std::string>(val, "paths.out");
    else
      fail(ErrorKind::InvalidConfig, "unknown key 'paths." + key + "'");
  }
}

}  // namespace

PipelineConfig parse_config_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::InvalidConfig, "config is not valid JSON");
  if (!j.is_object()) fail(ErrorKind::InvalidConfig, "config root must be an object");
  PipelineConfig c;
  for (auto& [key, val] : j.items()) {
    if (key == "synth")
      parse_synth(val, c.synth);
    else if (key == "dsp")
      parse_dsp(val, c.dsp);
    else if (key == "train")
      parse_train(val, c);
    else if (key == "folds")
      parse_folds(val, c);
    else if (key == "paths")
      parse_paths(val, c);
    else
      fail(ErrorKind::InvalidConfig, "unknown key '" + key + "'");
  }
  validate_config(c);
  return c;
}

PipelineConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::Io, "cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

void validate_config(const PipelineConfig& c) {
  bound(c.synth.n_subjects >= 4, "synth.n_subjects must be >= 4");
  bound(c.synth.trials_per_borg >= 1, "synth.trials_per_borg must be >= 1");
  bound(c.synth.imu_noise >= 0 && c.synth.imu_noise <= 0.1,
        "synth.imu_noise must be in [0, 0.1]");
  bound(c.dsp.bp_order >= 1, "dsp.bp_order must be >= 1");
  bound(c.dsp.bp_low_hz > 0 && c.dsp.bp_low_hz < c.dsp.bp_high_hz,
        "dsp bandpass corners must satisfy 0 < low < high");
  bound(c.dsp.notch_hz > 0, "dsp.notch_hz must be > 0");
  bound(c.dsp.notch_q > 0, "dsp.notch_q must be > 0");
  bound(c.dsp.rms_window >= 1, "dsp.rms_window must be >= 1");
  bound(c.dsp.rms_stride >= 1, "dsp.rms_stride must be >= 1");
  bound(c.dsp.image_size >= 8 && c.dsp.image_size % 4 == 0,
        "dsp.image_size must be >= 8 and divisible by 4");
  bound(c.dsp.cwt_f_min_hz > 0 && c.dsp.cwt_f_min_hz < c.dsp.cwt_f_max_hz,
        "dsp cwt frequency bounds must satisfy 0 < min < max");
  bound(c.dsp.cwt_f_max_hz < c.dsp.align.to_rate / 2,
        "dsp.cwt_f_max_hz must be below the aligned Nyquist rate");
  bound(c.dsp.wavelet.bandwidth > 0, "dsp.wavelet_b must be > 0");
  bound(c.dsp.wavelet.center_frequency > 0, "dsp.wavelet_c must be > 0");
  bound(c.dsp.min_hold_s > 0, "dsp.min_hold_s must be > 0");
  bound(c.train.epochs >= 1, "train.epochs must be >= 1");
  bound(c.train.batch_size >= 2, "train.batch_size must be >= 2");
  bound(c.train.learning_rate > 0, "train.learning_rate must be > 0");
  bound(c.train.optimizer == "adaptive-moments" ||
            c.train.optimizer == "sgd-momentum",
        "train.optimizer must be adaptive-moments or sgd-momentum");
  bound(c.train.weights.alpha >= 0, "train.alpha must be >= 0");
  bound(c.train.weights.beta >= 0, "train.beta must be >= 0");
  bound(c.train.weights.tau > 0, "train.tau must be > 0");
  bound(c.train.schedule_gamma > 0, "train.gamma must be > 0");
  bound(c.train.schedule_k > 0, "train.k must be > 0");
  bound(c.precision == "f32" || c.precision == "f64",
        "train.precision must be f32 or f64");
  nn::variant_from_name(c.variant);  // throws on unknown
  bound(c.folds_k >= 2, "folds.k must be >= 2");
  bound(!c.in_dir.empty() && !c.out_dir.empty(), "paths must be nonempty");
}

std::string serialize_config(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["synth"] = {{"n_subjects", c.synth.n_subjects},
                {"trials_per_borg", c.synth.trials_per_borg},
                {"rng_seed", c.synth.rng_seed},
                {"imu_noise", c.synth.imu_noise}};
  j["dsp"] = {{"bp_order", c.dsp.bp_order},
              {"bp_low_hz", c.dsp.bp_low_hz},
              {"bp_high_hz", c.dsp.bp_high_hz},
              {"notch_hz", c.dsp.notch_hz},
              {"notch_q", c.dsp.notch_q},
              {"rms_window", c.dsp.rms_window},
              {"rms_stride", c.dsp.rms_stride},
              {"image_size", c.dsp.image_size},
              {"cwt_f_min_hz", c.dsp.cwt_f_min_hz},
              {"cwt_f_max_hz", c.dsp.cwt_f_max_hz},
              {"wavelet_b", c.dsp.wavelet.bandwidth},
              {"wavelet_c", c.dsp.wavelet.center_frequency},
              {"min_hold_s", c.dsp.min_hold_s}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"optimizer", c.train.optimizer},
                {"alpha", c.train.weights.alpha},
                {"beta", c.train.weights.beta},
                {"tau", c.train.weights.tau},
                {"gamma", c.train.schedule_gamma},
                {"k", c.train.schedule_k},
                {"rng_seed", c.train.rng_seed},
                {"augment", c.train.augment},
                {"precision", c.precision},
                {"variant", c.variant}};
  j["folds"] = {{"k", c.folds_k}, {"seed", c.folds_seed}};
  j["paths"] = {{"in", c.in_dir}, {"out", c.out_dir}};
  return j.dump(2) + "\n";
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace fatiguenet::cfg
