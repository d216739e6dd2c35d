#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "sctkg/generator.hpp"
#include "sctkg/training.hpp"

namespace sctkg {

std::uint32_t fnv1a32(std::string_view text);

// Everything a run needs, merged from profile defaults, an optional flat
// key=value config file, and command-line flags (flags win). The `desk`
// profile is sized for CPU experiments; `paper` carries the full-scale
// dimensions (200-dim embeddings, 512 decoder, 300 latent, 32 sentiment).
struct RunConfig {
  std::string profile = "desk";

  // Model dims (vocab filled from data at run time).
  ModelDims dims;

  Stage1Config stage1;
  Stage2Config stage2;

  // Data handling.
  int vocab_cap = 50000;
  int topic_label_cap = 100;
  int max_per_topic = 8;
  double kg_min_weight = 0.0;
  int max_len = 20;
  int synth_essays = 2000;
  std::uint64_t seed = 7;

  // Discriminator shape.
  int disc_filters = 32;
  int disc_window = 128;

  void apply_profile(const std::string& name);

  // Parses `key=value` lines ('#' comments allowed). Unknown keys raise.
  void load_file(const std::string& path);
  bool set_key(const std::string& key, const std::string& value);  // false = unknown

  std::string canonical() const;  // stable key=value dump
  std::uint32_t hash() const { return fnv1a32(canonical()); }
};

}  // namespace sctkg
