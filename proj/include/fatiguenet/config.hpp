#pragma once
#include <cstdint>
#include <string>

#include "fatiguenet/dataset.hpp"
#include "fatiguenet/synthgen.hpp"
#include "fatiguenet/training.hpp"

namespace fatiguenet::cfg {

struct PipelineConfig {
  synth::SynthConfig synth;
  data::PreprocessParams dsp;
  train::TrainConfig train;
  std::string precision = "f32";  // f32 | f64
  std::string variant = "IADAN";
  int folds_k = 4;
  uint64_t folds_seed = 17;
  std::string in_dir = "data";
  std::string out_dir = "out";
};

// Strict parse: unknown keys and out-of-range values are errors that name
// the offending key/bound. Defaults fill everything an empty object omits.
PipelineConfig parse_config_text(const std::string& text);
PipelineConfig parse_config_file(const std::string& path);

// Canonical JSON (stable key order); parse(serialize(c)) reproduces c.
std::string serialize_config(const PipelineConfig& c);

void validate_config(const PipelineConfig& c);

uint64_t fnv1a64(const std::string& bytes);
inline uint64_t config_hash(const PipelineConfig& c) {
  return fnv1a64(serialize_config(c));
}

}  // namespace fatiguenet::cfg
