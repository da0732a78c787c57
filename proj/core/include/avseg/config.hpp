#pragma once

#include <cstdint>
#include <string>

#include "avseg/errors.hpp"

namespace avseg {

enum class PromptMode { kLast, kSum };

std::string prompt_mode_name(PromptMode m);
PromptMode prompt_mode_from_name(const std::string& s);

// All architectural hyperparameters; the single source of truth for model
// assembly. Toy defaults keep the gradient-check suite in the seconds range.
struct ModelConfig {
  int64_t embed_dim = 64;          // encoder channel width C
  int64_t num_blocks = 4;          // transformer depth N
  int64_t num_heads = 4;
  int64_t patch_size = 8;
  int64_t input_resolution = 64;   // square input side R
  int64_t prompt_dim = 64;         // decoder embedding width P
  double adapter_compression = 0.25;
  int64_t audio_dim = 32;          // raw audio feature width D_a
  double mlp_ratio = 4.0;
  PromptMode prompt_mode = PromptMode::kLast;
  double fscore_beta_sq = 0.3;
  uint64_t seed = 0;

  int64_t grid_side() const { return input_resolution / patch_size; }
  int64_t head_dim() const { return embed_dim / num_heads; }
  int64_t bottleneck_dim() const {
    return static_cast<int64_t>(adapter_compression * static_cast<double>(embed_dim));
  }

  // Throws ConfigError naming the violated field.
  void validate() const;
};

// Strict JSON (de)serialization: flat object, exactly the field names of
// ModelConfig; unknown keys are an error.
ModelConfig config_from_json_text(const std::string& text);
ModelConfig config_from_json_file(const std::string& path);
std::string config_to_json_text(const ModelConfig& c);
void config_to_json_file(const ModelConfig& c, const std::string& path);

}  // namespace avseg
