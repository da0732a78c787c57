#include "avseg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace avseg {

using nlohmann::json;

std::string prompt_mode_name(PromptMode m) {
  return m == PromptMode::kLast ? "last" : "sum";
}

PromptMode prompt_mode_from_name(const std::string& s) {
  if (s == "last") return PromptMode::kLast;
  if (s == "sum") return PromptMode::kSum;
  throw ConfigError("prompt_mode must be 'last' or 'sum', got '" + s + "'");
}

void ModelConfig::validate() const {
  auto positive = [](int64_t v, const char* field) {
    if (v <= 0) {
      throw ConfigError(std::string(field) + " must be positive, got " +
                        std::to_string(v));
    }
  };
  positive(embed_dim, "embed_dim");
  positive(num_blocks, "num_blocks");
  positive(num_heads, "num_heads");
  positive(patch_size, "patch_size");
  positive(input_resolution, "input_resolution");
  positive(prompt_dim, "prompt_dim");
  positive(audio_dim, "audio_dim");
  if (embed_dim % num_heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (input_resolution % patch_size != 0) {
    throw ConfigError("input_resolution " + std::to_string(input_resolution) +
                      " not divisible by patch_size " + std::to_string(patch_size));
  }
  if (adapter_compression <= 0.0 || adapter_compression > 1.0) {
    throw ConfigError("adapter_compression must lie in (0,1], got " +
                      std::to_string(adapter_compression));
  }
  if (bottleneck_dim() < 1) {
    throw ConfigError("adapter_compression " + std::to_string(adapter_compression) +
                      " gives an empty bottleneck for embed_dim " +
                      std::to_string(embed_dim));
  }
  if (mlp_ratio <= 0.0) {
    throw ConfigError("mlp_ratio must be positive, got " + std::to_string(mlp_ratio));
  }
  if (fscore_beta_sq < 0.0) {
    throw ConfigError("fscore_beta_sq must be nonnegative, got " +
                      std::to_string(fscore_beta_sq));
  }
  if (embed_dim < 2) {
    throw ConfigError("embed_dim must be at least 2, got " + std::to_string(embed_dim));
  }
  // Decoder upscaling halves the channel width twice.
  if (prompt_dim % 4 != 0) {
    throw ConfigError("prompt_dim must be divisible by 4, got " +
                      std::to_string(prompt_dim));
  }
}

namespace {

const std::set<std::string> kFields = {
    "embed_dim",       "num_blocks",  "num_heads",      "patch_size",
    "input_resolution", "prompt_dim", "adapter_compression", "audio_dim",
    "mlp_ratio",       "prompt_mode", "fscore_beta_sq", "seed"};

int64_t get_int(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ConfigError(std::string(key) + " must be an integer");
  }
  return v.get<int64_t>();
}

double get_num(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(std::string(key) + " must be a number");
  return v.get<double>();
}

}  // namespace

ModelConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config JSON parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kFields.count(it.key())) {
      throw ConfigError("unknown config key '" + it.key() + "'");
    }
  }
  ModelConfig c;
  try {
    if (j.contains("embed_dim")) c.embed_dim = get_int(j, "embed_dim");
    if (j.contains("num_blocks")) c.num_blocks = get_int(j, "num_blocks");
    if (j.contains("num_heads")) c.num_heads = get_int(j, "num_heads");
    if (j.contains("patch_size")) c.patch_size = get_int(j, "patch_size");
    if (j.contains("input_resolution")) c.input_resolution = get_int(j, "input_resolution");
    if (j.contains("prompt_dim")) c.prompt_dim = get_int(j, "prompt_dim");
    if (j.contains("adapter_compression")) c.adapter_compression = get_num(j, "adapter_compression");
    if (j.contains("audio_dim")) c.audio_dim = get_int(j, "audio_dim");
    if (j.contains("mlp_ratio")) c.mlp_ratio = get_num(j, "mlp_ratio");
    if (j.contains("prompt_mode")) {
      c.prompt_mode = prompt_mode_from_name(j.at("prompt_mode").get<std::string>());
    }
    if (j.contains("fscore_beta_sq")) c.fscore_beta_sq = get_num(j, "fscore_beta_sq");
    if (j.contains("seed")) {
      const auto& v = j.at("seed");
      if (!v.is_number_integer() && !v.is_number_unsigned()) {
        throw ConfigError("seed must be an unsigned integer");
      }
      if (v.is_number_integer() && v.get<int64_t>() < 0) {
        throw ConfigError("seed must be nonnegative");
      }
      c.seed = v.get<uint64_t>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig config_from_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ModelConfig& c) {
  json j;
  j["embed_dim"] = c.embed_dim;
  j["num_blocks"] = c.num_blocks;
  j["num_heads"] = c.num_heads;
  j["patch_size"] = c.patch_size;
  j["input_resolution"] = c.input_resolution;
  j["prompt_dim"] = c.prompt_dim;
  j["adapter_compression"] = c.adapter_compression;
  j["audio_dim"] = c.audio_dim;
  j["mlp_ratio"] = c.mlp_ratio;
  j["prompt_mode"] = prompt_mode_name(c.prompt_mode);
  j["fscore_beta_sq"] = c.fscore_beta_sq;
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

void config_to_json_file(const ModelConfig& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write config file: " + path);
  out << config_to_json_text(c);
}

}  // namespace avseg
