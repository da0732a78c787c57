#pragma once

#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "avseg/audio_adapter.hpp"
#include "avseg/backbone.hpp"
#include "avseg/config.hpp"
#include "avseg/mask_decoder.hpp"
#include "avseg/tensor_file.hpp"

namespace avseg {

// Assembled model: image encoder with per-block adapters, residual audio
// adapter stack, and mask decoder, with all parameters owned by one seeded
// store. Frozen/trainable status is fixed at construction: the simulated
// pretrained backbone (patch embedding, block MHSA/MLP/LayerNorm, rel-pos
// tables) is frozen; adapters, audio stack, neck, and decoder train.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg)
      : cfg_(validated(cfg)), store_(cfg.seed) {
    encoder_ = std::make_unique<ImageEncoder<T>>(store_, cfg_);
    audio_ = std::make_unique<AudioAdapterStack<T>>(store_, cfg_);
    decoder_ = std::make_unique<MaskDecoder<T>>(store_, cfg_);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  ImageEncoder<T>& encoder() { return *encoder_; }
  AudioAdapterStack<T>& audio() { return *audio_; }
  MaskDecoder<T>& decoder() { return *decoder_; }
  const ImageEncoder<T>& encoder() const { return *encoder_; }
  const AudioAdapterStack<T>& audio() const { return *audio_; }
  const MaskDecoder<T>& decoder() const { return *decoder_; }

  struct Forward {
    InjectionBundleVars<T> bundle;
    Var<T> embedding;    // [P,H,W]
    Var<T> logits_grid;  // [1,4H,4W]
  };

  // Full pipeline: audio stack -> encoder with injections -> decoder.
  Forward forward(Graph<T>& g, const Tensor<T>& image,
                  const Tensor<T>& audio_feature) const {
    Forward f;
    f.bundle = audio_->stack_forward(g, g.input(audio_feature));
    f.embedding = encoder_->forward(g, g.input(image), f.bundle.injections, true);
    f.logits_grid = decoder_->decode(g, f.embedding, f.bundle.prompt);
    return f;
  }

 private:
  static ModelConfig validated(const ModelConfig& c) {
    c.validate();
    return c;
  }

  ModelConfig cfg_;
  ParamStore<T> store_;
  std::unique_ptr<ImageEncoder<T>> encoder_;
  std::unique_ptr<AudioAdapterStack<T>> audio_;
  std::unique_ptr<MaskDecoder<T>> decoder_;
};

template <typename T>
Model<T> build_model(const ModelConfig& cfg) {
  return Model<T>(cfg);
}

template <typename T>
ParameterPartition partition_parameters(const Model<T>& model) {
  ParameterPartition part;
  for (const auto* p : model.params().all()) {
    (p->trainable ? part.trainable : part.frozen).insert(p->name);
  }
  return part;
}

// ---- checkpoint io ----------------------------------------------------------
// Layout: dir/config.json + dir/params/<name>.savt (one f32 raw tensor per
// parameter), bit-exact for float models.

template <typename T>
void save_checkpoint(const Model<T>& model, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "params");
  config_to_json_file(model.config(), (fs::path(dir) / "config.json").string());
  for (const auto* p : model.params().all()) {
    const auto path = fs::path(dir) / "params" / (p->name + ".savt");
    if constexpr (std::is_same_v<T, float>) {
      write_raw_tensor(path.string(), p->value);
    } else {
      write_raw_tensor(path.string(), p->value.template cast<float>());
    }
  }
}

template <typename T>
Model<T> load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::exists(root / "config.json")) {
    throw DataError("checkpoint missing config.json: " + dir);
  }
  Model<T> model(config_from_json_file((root / "config.json").string()));
  std::set<std::string> expected;
  for (auto* p : model.params().all()) {
    expected.insert(p->name);
    const auto path = root / "params" / (p->name + ".savt");
    if (!fs::exists(path)) {
      throw DataError("checkpoint missing parameter file: " + path.string());
    }
    Tensor<float> loaded = read_raw_tensor(path.string());
    if (loaded.shape() != p->value.shape()) {
      throw DataError("checkpoint parameter " + p->name + " has shape " +
                      shape_str(loaded.shape()) + ", expected " +
                      shape_str(p->value.shape()));
    }
    if constexpr (std::is_same_v<T, float>) {
      p->value = std::move(loaded);
    } else {
      p->value = loaded.template cast<T>();
    }
  }
  for (const auto& entry : fs::directory_iterator(root / "params")) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 5 && name.ends_with(".savt")) {
      const std::string pname = name.substr(0, name.size() - 5);
      if (!expected.count(pname)) {
        throw DataError("checkpoint contains unknown parameter file: " + name);
      }
    }
  }
  return model;
}

}  // namespace avseg
