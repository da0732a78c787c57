#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avseg/tensor.hpp"
#include "avseg/tensor_file.hpp"

namespace avseg {

// ---- manifest ----------------------------------------------------------------

struct SampleRecord {
  std::string video_id;
  int64_t frame_index = 0;
  std::string image_path;  // PNG, RGB, relative to dataset root
  std::string mask_path;   // PNG, single channel, values {0,255}
  std::string audio_path;  // raw tensor file, shape [D_a]
  std::string category;
};

struct Manifest {
  int64_t version = 1;
  std::string split;  // train | val | test
  std::vector<SampleRecord> samples;
};

// root/manifest.json holds a JSON array of per-split Manifest documents.
// Loading validates the schema, that referenced files exist, and that the
// splits are disjoint by video id.
std::vector<Manifest> load_manifests(const std::string& root);
void save_manifests(const std::string& root, const std::vector<Manifest>& manifests);
const Manifest& find_split(const std::vector<Manifest>& manifests,
                           const std::string& split);

// ---- resize rule ---------------------------------------------------------------

struct ResizeProvenance {
  bool padded = false;
  int64_t orig_h = 0;
  int64_t orig_w = 0;
};

struct ResizeResult {
  Tensor<float> data;  // [target, target, c]
  ResizeProvenance prov;
};

// When both sides are smaller than the target the image is placed at the
// top-left of a target x target zero canvas (pad bottom/right); otherwise it
// is resized to target x target (bilinear for images, nearest for masks so
// binarity survives). Equal-size resizes are bit-exact no-ops.
ResizeResult resize_with_rule(const Tensor<float>& hwc, int64_t target,
                              bool nearest);

// ---- sample loading -------------------------------------------------------------

struct Sample {
  Tensor<float> image;      // [3,R,R], values in [0,1]
  Tensor<float> audio;      // [D_a]
  Tensor<float> mask;       // [R,R], {0,1}, input resolution
  Tensor<float> orig_mask;  // [h0,w0], {0,1}, original resolution
  ResizeProvenance prov;
  std::string category;
  std::string video_id;
  int64_t frame_index = 0;
};

Sample load_sample(const std::string& root, const SampleRecord& rec,
                   int64_t input_resolution, int64_t audio_dim);

std::vector<Sample> load_split(const std::string& root, const std::string& split,
                               int64_t input_resolution, int64_t audio_dim);

// ---- synthetic dataset generator -------------------------------------------------

struct GenSpec {
  int64_t num_videos = 200;
  int64_t frames_per_video = 2;
  int64_t num_classes = 4;
  int64_t canvas = 64;
  int64_t objects_per_frame = 2;
  double noise_sigma = 0.1;
  uint64_t seed = 0;
  int64_t audio_dim = 32;
};

// One composited shape; kept so tests can re-rasterize the sounding object.
struct ShapeInstance {
  int64_t cls = 0;
  std::string family;
  double cx = 0, cy = 0, size = 0;
  bool sounding = false;
};

struct FrameGeometry {
  std::string video_id;
  int64_t frame_index = 0;
  std::vector<ShapeInstance> objects;
};

struct GenerationReport {
  std::vector<FrameGeometry> frames;
  std::vector<Tensor<float>> anchors;  // per-class audio anchors (pre-noise)
};

// Writes root/{manifest.json, frames/, masks/, audio/}. Each frame composites
// objects_per_frame distinct-class shapes on a textured background; exactly
// one is sounding, its audio feature is the class anchor plus Gaussian noise
// and the ground-truth mask covers exactly its rasterization. Byte-identical
// output for identical specs.
GenerationReport generate_synthetic(const GenSpec& spec, const std::string& out_dir);

// Binary {0,1} rasterization of one shape on a canvas; the oracle the
// generator itself uses for masks.
Tensor<float> rasterize_shape(const std::string& family, double cx, double cy,
                              double size, int64_t canvas);

const std::vector<std::string>& shape_families();
std::string category_name(int64_t cls);

}  // namespace avseg
