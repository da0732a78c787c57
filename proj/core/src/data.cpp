#include "avseg/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "avseg/errors.hpp"
#include "avseg/png_io.hpp"
#include "avseg/rng.hpp"

namespace avseg {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "raw tensor files assume a little-endian host");

// ---- raw tensor file -----------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'S', 'A', 'V', 'T'};
}

void write_raw_tensor(const std::string& path, const Tensor<float>& t) {
  json header;
  header["dtype"] = "f32";
  header["shape"] = t.shape();
  const std::string htext = header.dump();
  const uint32_t hlen = static_cast<uint32_t>(htext.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create raw tensor file: " + path);
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * 4));
  if (!out) throw DataError("short write to raw tensor file: " + path);
}

Tensor<float> read_raw_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open raw tensor file: " + path);

  char magic[4];
  uint32_t hlen = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&hlen), 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("bad raw tensor magic in: " + path);
  }
  if (hlen == 0 || hlen > (1u << 20)) {
    throw DataError("implausible raw tensor header length in: " + path);
  }
  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  if (!in) throw DataError("truncated raw tensor header in: " + path);

  json header;
  try {
    header = json::parse(htext);
  } catch (const json::parse_error&) {
    throw DataError("corrupt raw tensor header in: " + path);
  }
  if (!header.is_object() || header.value("dtype", "") != "f32" ||
      !header.contains("shape") || !header["shape"].is_array()) {
    throw DataError("invalid raw tensor header in: " + path);
  }
  Shape shape;
  for (const auto& d : header["shape"]) {
    if (!d.is_number_integer() || d.get<int64_t>() < 0) {
      throw DataError("invalid raw tensor shape in: " + path);
    }
    shape.push_back(d.get<int64_t>());
  }
  const int64_t n = shape_numel(shape);
  std::vector<float> payload(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(n * 4));
  if (in.gcount() != static_cast<std::streamsize>(n * 4)) {
    throw DataError("truncated raw tensor payload in: " + path);
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw DataError("trailing bytes in raw tensor file: " + path);
  }
  return Tensor<float>(std::move(shape), std::move(payload));
}

// ---- manifest -------------------------------------------------------------------

namespace {

const std::set<std::string> kSplits = {"train", "val", "test"};

void require_keys(const json& obj, const std::set<std::string>& keys,
                  const std::string& what) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!keys.count(it.key())) {
      throw DataError("unknown key '" + it.key() + "' in " + what);
    }
  }
  for (const auto& k : keys) {
    if (!obj.contains(k)) throw DataError("missing key '" + k + "' in " + what);
  }
}

json record_to_json(const SampleRecord& r) {
  json j;
  j["video_id"] = r.video_id;
  j["frame_index"] = r.frame_index;
  j["image_path"] = r.image_path;
  j["mask_path"] = r.mask_path;
  j["audio_path"] = r.audio_path;
  j["category"] = r.category;
  return j;
}

SampleRecord record_from_json(const json& j) {
  require_keys(j, {"video_id", "frame_index", "image_path", "mask_path",
                   "audio_path", "category"},
               "sample record");
  SampleRecord r;
  r.video_id = j.at("video_id").get<std::string>();
  r.frame_index = j.at("frame_index").get<int64_t>();
  r.image_path = j.at("image_path").get<std::string>();
  r.mask_path = j.at("mask_path").get<std::string>();
  r.audio_path = j.at("audio_path").get<std::string>();
  r.category = j.at("category").get<std::string>();
  return r;
}

}  // namespace

void save_manifests(const std::string& root, const std::vector<Manifest>& manifests) {
  json arr = json::array();
  for (const auto& m : manifests) {
    json j;
    j["version"] = m.version;
    j["split"] = m.split;
    j["samples"] = json::array();
    for (const auto& r : m.samples) j["samples"].push_back(record_to_json(r));
    arr.push_back(std::move(j));
  }
  const fs::path path = fs::path(root) / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << arr.dump(2) << "\n";
}

std::vector<Manifest> load_manifests(const std::string& root) {
  const fs::path path = fs::path(root) / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  json arr;
  try {
    in >> arr;
  } catch (const json::parse_error& e) {
    throw DataError("manifest JSON parse error in " + path.string() + ": " + e.what());
  }
  if (!arr.is_array()) throw DataError("manifest.json must be a JSON array");

  std::vector<Manifest> out;
  std::set<std::string> seen_splits;
  std::vector<std::set<std::string>> split_videos;
  for (const auto& j : arr) {
    require_keys(j, {"version", "split", "samples"}, "manifest");
    Manifest m;
    m.version = j.at("version").get<int64_t>();
    if (m.version != 1) {
      throw DataError("unsupported manifest version " + std::to_string(m.version));
    }
    m.split = j.at("split").get<std::string>();
    if (!kSplits.count(m.split)) throw DataError("unknown split '" + m.split + "'");
    if (!seen_splits.insert(m.split).second) {
      throw DataError("duplicate split '" + m.split + "' in manifest");
    }
    std::set<std::string> videos;
    for (const auto& rj : j.at("samples")) {
      SampleRecord r = record_from_json(rj);
      for (const std::string* p : {&r.image_path, &r.mask_path, &r.audio_path}) {
        const fs::path f = fs::path(root) / *p;
        if (!fs::exists(f)) {
          throw DataError("manifest references missing file: " + f.string());
        }
      }
      videos.insert(r.video_id);
      m.samples.push_back(std::move(r));
    }
    for (const auto& prev : split_videos) {
      for (const auto& v : videos) {
        if (prev.count(v)) {
          throw DataError("video id '" + v + "' appears in multiple splits");
        }
      }
    }
    split_videos.push_back(std::move(videos));
    out.push_back(std::move(m));
  }
  return out;
}

const Manifest& find_split(const std::vector<Manifest>& manifests,
                           const std::string& split) {
  for (const auto& m : manifests) {
    if (m.split == split) return m;
  }
  throw DataError("split '" + split + "' not present in manifest");
}

// ---- resize rule ----------------------------------------------------------------

ResizeResult resize_with_rule(const Tensor<float>& hwc, int64_t target,
                              bool nearest) {
  if (target <= 0) throw ValueError("resize target must be positive");
  if (hwc.rank() != 3) throw ShapeError("resize_with_rule expects [h,w,c]");
  const int64_t h = hwc.dim(0), w = hwc.dim(1), c = hwc.dim(2);
  if (h == 0 || w == 0) throw DataError("resize_with_rule: empty image");

  ResizeResult res;
  res.prov = {h < target && w < target, h, w};
  if (res.prov.padded) {
    Tensor<float> canvas({target, target, c});
    for (int64_t i = 0; i < h; ++i) {
      for (int64_t j = 0; j < w; ++j) {
        for (int64_t k = 0; k < c; ++k) canvas(i, j, k) = hwc(i, j, k);
      }
    }
    res.data = std::move(canvas);
    return res;
  }
  if (h == target && w == target) {
    res.data = hwc;  // bit-exact identity
    return res;
  }
  Tensor<float> out({target, target, c});
  for (int64_t k = 0; k < c; ++k) {
    Tensor<float> plane({h, w});
    for (int64_t i = 0; i < h; ++i) {
      for (int64_t j = 0; j < w; ++j) plane(i, j) = hwc(i, j, k);
    }
    Tensor<float> rp = nearest ? resize_nearest_2d(plane, target, target)
                               : resize_bilinear_2d(plane, target, target);
    for (int64_t i = 0; i < target; ++i) {
      for (int64_t j = 0; j < target; ++j) out(i, j, k) = rp(i, j);
    }
  }
  res.data = std::move(out);
  return res;
}

// ---- sample loading --------------------------------------------------------------

Sample load_sample(const std::string& root, const SampleRecord& rec,
                   int64_t input_resolution, int64_t audio_dim) {
  const fs::path rootp(root);

  const std::string image_file = (rootp / rec.image_path).string();
  ImageU8 img = read_png(image_file);
  if (img.channels != 3) {
    throw DataError("frame image must be RGB: " + image_file);
  }

  const std::string mask_file = (rootp / rec.mask_path).string();
  ImageU8 mask = read_png(mask_file);
  if (mask.channels != 1) {
    throw DataError("mask must be single-channel: " + mask_file);
  }
  if (mask.height != img.height || mask.width != img.width) {
    throw DataError("mask dimensions disagree with frame image: " + mask_file);
  }
  for (uint8_t v : mask.pixels) {
    if (v != 0 && v != 255) {
      throw DataError("mask is not bi-valued {0,255}: " + mask_file);
    }
  }

  Tensor<float> img_f({img.height, img.width, 3});
  for (int64_t i = 0; i < img_f.numel(); ++i) {
    img_f[i] = static_cast<float>(img.pixels[static_cast<size_t>(i)]) / 255.0f;
  }
  Tensor<float> mask_f({mask.height, mask.width, 1});
  for (int64_t i = 0; i < mask_f.numel(); ++i) {
    mask_f[i] = mask.pixels[static_cast<size_t>(i)] == 255 ? 1.0f : 0.0f;
  }

  ResizeResult rimg = resize_with_rule(img_f, input_resolution, /*nearest=*/false);
  ResizeResult rmask = resize_with_rule(mask_f, input_resolution, /*nearest=*/true);

  Sample s;
  s.prov = rimg.prov;
  s.video_id = rec.video_id;
  s.frame_index = rec.frame_index;
  s.category = rec.category;

  // [R,R,3] -> [3,R,R]
  const int64_t r = input_resolution;
  s.image = Tensor<float>({3, r, r});
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < r; ++j) {
      for (int64_t k = 0; k < 3; ++k) s.image(k, i, j) = rimg.data(i, j, k);
    }
  }
  s.mask = Tensor<float>({r, r});
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < r; ++j) s.mask(i, j) = rmask.data(i, j, 0);
  }
  s.orig_mask = Tensor<float>({mask.height, mask.width});
  for (int64_t i = 0; i < s.orig_mask.numel(); ++i) s.orig_mask[i] = mask_f[i];

  const std::string audio_file = (rootp / rec.audio_path).string();
  Tensor<float> audio = read_raw_tensor(audio_file);
  if (audio.rank() != 1 || audio.dim(0) != audio_dim) {
    throw DataError("audio feature in " + audio_file + " has shape " +
                    shape_str(audio.shape()) + ", expected [" +
                    std::to_string(audio_dim) + "]");
  }
  s.audio = std::move(audio);
  return s;
}

std::vector<Sample> load_split(const std::string& root, const std::string& split,
                               int64_t input_resolution, int64_t audio_dim) {
  const auto manifests = load_manifests(root);
  const Manifest& m = find_split(manifests, split);
  std::vector<Sample> out;
  out.reserve(m.samples.size());
  for (const auto& rec : m.samples) {
    out.push_back(load_sample(root, rec, input_resolution, audio_dim));
  }
  return out;
}

// ---- synthetic generator ----------------------------------------------------------

const std::vector<std::string>& shape_families() {
  static const std::vector<std::string> families = {"circle", "square", "triangle",
                                                    "diamond", "cross", "ring"};
  return families;
}

std::string category_name(int64_t cls) {
  const auto& fams = shape_families();
  const auto& fam = fams[static_cast<size_t>(cls) % fams.size()];
  if (cls < static_cast<int64_t>(fams.size())) return fam;
  return fam + "_" + std::to_string(cls);
}

Tensor<float> rasterize_shape(const std::string& family, double cx, double cy,
                              double size, int64_t canvas) {
  Tensor<float> m({canvas, canvas});
  const double r = size;
  for (int64_t y = 0; y < canvas; ++y) {
    for (int64_t x = 0; x < canvas; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      const double dx = px - cx, dy = py - cy;
      bool inside = false;
      if (family == "circle") {
        inside = dx * dx + dy * dy <= r * r;
      } else if (family == "square") {
        inside = std::abs(dx) <= r && std::abs(dy) <= r;
      } else if (family == "triangle") {
        // Equilateral, apex up, inscribed in radius r.
        const double ax = 0.0, ay = -r;
        const double bx = -r * 0.8660254037844386, by = r * 0.5;
        const double cx2 = r * 0.8660254037844386, cy2 = r * 0.5;
        auto cross = [](double ox, double oy, double ux, double uy, double vx,
                        double vy) {
          return (ux - ox) * (vy - oy) - (uy - oy) * (vx - ox);
        };
        const double d1 = cross(ax, ay, bx, by, dx, dy);
        const double d2 = cross(bx, by, cx2, cy2, dx, dy);
        const double d3 = cross(cx2, cy2, ax, ay, dx, dy);
        const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
        const bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
        inside = !(has_neg && has_pos);
      } else if (family == "diamond") {
        inside = std::abs(dx) + std::abs(dy) <= r;
      } else if (family == "cross") {
        inside = (std::abs(dx) <= r / 3.0 && std::abs(dy) <= r) ||
                 (std::abs(dy) <= r / 3.0 && std::abs(dx) <= r);
      } else if (family == "ring") {
        const double d2c = dx * dx + dy * dy;
        inside = d2c <= r * r && d2c >= (r * 0.5) * (r * 0.5);
      } else {
        throw ValueError("unknown shape family: " + family);
      }
      if (inside) m(y, x) = 1.0f;
    }
  }
  return m;
}

namespace {

struct Rgb {
  uint8_t r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  auto q = [&](double u) {
    return static_cast<uint8_t>(std::lround(std::clamp(u + m, 0.0, 1.0) * 255.0));
  };
  return {q(r), q(g), q(b)};
}

struct Placement {
  double cx, cy, size;
};

bool fits(const Placement& p, const std::vector<Placement>& others) {
  for (const auto& o : others) {
    const double dx = p.cx - o.cx, dy = p.cy - o.cy;
    const double min_d = p.size + o.size + 2.0;
    if (dx * dx + dy * dy < min_d * min_d) return false;
  }
  return true;
}

}  // namespace

GenerationReport generate_synthetic(const GenSpec& spec, const std::string& out_dir) {
  if (spec.num_videos < 1) throw ValueError("generate_synthetic: num_videos must be >= 1");
  if (spec.frames_per_video < 1) {
    throw ValueError("generate_synthetic: frames_per_video must be >= 1");
  }
  if (spec.num_classes < 2) throw ValueError("generate_synthetic: num_classes must be >= 2");
  if (spec.objects_per_frame < 2) {
    throw ValueError("generate_synthetic: objects_per_frame must be >= 2");
  }
  if (spec.objects_per_frame > spec.num_classes) {
    throw ValueError("generate_synthetic: objects_per_frame exceeds num_classes");
  }
  if (spec.canvas < 16) throw ValueError("generate_synthetic: canvas must be >= 16");
  if (spec.noise_sigma < 0) throw ValueError("generate_synthetic: noise_sigma must be >= 0");
  if (spec.audio_dim < 1) throw ValueError("generate_synthetic: audio_dim must be >= 1");

  const fs::path root(out_dir);
  fs::create_directories(root / "frames");
  fs::create_directories(root / "masks");
  fs::create_directories(root / "audio");

  Rng gen(spec.seed);

  // Unit-norm class anchors, pairwise at least 4*sigma apart.
  std::vector<Tensor<float>> anchors;
  for (int attempt = 0; attempt < 100; ++attempt) {
    anchors.clear();
    for (int64_t k = 0; k < spec.num_classes; ++k) {
      Tensor<float> a({spec.audio_dim});
      fill_normal(a, gen, 1.0);
      double norm = 0;
      for (int64_t i = 0; i < a.numel(); ++i) norm += a[i] * a[i];
      norm = std::sqrt(norm);
      if (norm < 1e-9) { --k; continue; }
      for (int64_t i = 0; i < a.numel(); ++i) a[i] = static_cast<float>(a[i] / norm);
      anchors.push_back(std::move(a));
    }
    bool ok = true;
    for (size_t i = 0; i < anchors.size() && ok; ++i) {
      for (size_t j = i + 1; j < anchors.size() && ok; ++j) {
        double d2 = 0;
        for (int64_t d = 0; d < spec.audio_dim; ++d) {
          const double df = anchors[i][d] - anchors[j][d];
          d2 += df * df;
        }
        if (std::sqrt(d2) < 4.0 * spec.noise_sigma) ok = false;
      }
    }
    if (ok) break;
    if (attempt == 99) {
      throw ValueError(
          "generate_synthetic: cannot place class anchors 4*sigma apart; "
          "reduce noise_sigma or num_classes");
    }
  }

  std::vector<Rgb> colors;
  for (int64_t k = 0; k < spec.num_classes; ++k) {
    colors.push_back(hsv_to_rgb(static_cast<double>(k) / spec.num_classes, 0.85, 0.95));
  }

  const int64_t c = spec.canvas;
  const double size_lo = 0.11 * static_cast<double>(c);
  const double size_hi = 0.18 * static_cast<double>(c);

  GenerationReport report;
  report.anchors = anchors;

  std::vector<Manifest> manifests(3);
  manifests[0].split = "train";
  manifests[1].split = "val";
  manifests[2].split = "test";
  const int64_t n_val = spec.num_videos / 10;
  const int64_t n_test = spec.num_videos / 10;
  const int64_t n_train = spec.num_videos - n_val - n_test;

  char buf[64];
  for (int64_t v = 0; v < spec.num_videos; ++v) {
    std::snprintf(buf, sizeof buf, "vid%04lld", static_cast<long long>(v));
    const std::string video_id = buf;

    // Object classes and the sounding class are fixed per video.
    std::vector<int64_t> classes(static_cast<size_t>(spec.num_classes));
    std::iota(classes.begin(), classes.end(), 0);
    std::shuffle(classes.begin(), classes.end(), gen);
    classes.resize(static_cast<size_t>(spec.objects_per_frame));
    std::uniform_int_distribution<int64_t> pick(0, spec.objects_per_frame - 1);
    const int64_t sounding_slot = pick(gen);

    // Base placement, non-overlapping by rejection.
    std::vector<Placement> base;
    std::uniform_real_distribution<double> usize(size_lo, size_hi);
    for (int64_t o = 0; o < spec.objects_per_frame; ++o) {
      bool placed = false;
      for (int tries = 0; tries < 500; ++tries) {
        Placement p;
        p.size = usize(gen);
        std::uniform_real_distribution<double> upos(p.size + 1.0,
                                                    static_cast<double>(c) - p.size - 1.0);
        p.cx = upos(gen);
        p.cy = upos(gen);
        if (fits(p, base)) {
          base.push_back(p);
          placed = true;
          break;
        }
      }
      if (!placed) {
        throw ValueError("generate_synthetic: cannot place objects without overlap; "
                         "reduce objects_per_frame or enlarge canvas");
      }
    }

    // Background gradient endpoints per video.
    std::uniform_real_distribution<double> ubg(30.0, 110.0);
    double bg0[3] = {ubg(gen), ubg(gen), ubg(gen)};
    double bg1[3] = {ubg(gen), ubg(gen), ubg(gen)};
    std::uniform_real_distribution<double> uang(0.0, 2.0 * 3.141592653589793);
    const double ang = uang(gen);
    const double gx = std::cos(ang), gy = std::sin(ang);

    for (int64_t f = 0; f < spec.frames_per_video; ++f) {
      // Jittered placement, kept in bounds and non-overlapping.
      std::vector<Placement> placed;
      std::uniform_real_distribution<double> jit(-2.0, 2.0);
      for (size_t o = 0; o < base.size(); ++o) {
        Placement p = base[o];
        for (int tries = 0; tries < 100; ++tries) {
          Placement q = base[o];
          q.cx = std::clamp(q.cx + jit(gen), q.size + 1.0,
                            static_cast<double>(c) - q.size - 1.0);
          q.cy = std::clamp(q.cy + jit(gen), q.size + 1.0,
                            static_cast<double>(c) - q.size - 1.0);
          if (fits(q, placed)) {
            p = q;
            break;
          }
        }
        placed.push_back(p);
      }

      ImageU8 frame;
      frame.height = c;
      frame.width = c;
      frame.channels = 3;
      frame.pixels.assign(static_cast<size_t>(c * c * 3), 0);
      std::uniform_real_distribution<double> unoise(-8.0, 8.0);
      for (int64_t y = 0; y < c; ++y) {
        for (int64_t x = 0; x < c; ++x) {
          const double t = 0.5 + 0.5 * ((static_cast<double>(x) / c - 0.5) * gx +
                                        (static_cast<double>(y) / c - 0.5) * gy);
          for (int64_t ch = 0; ch < 3; ++ch) {
            const double vbg = bg0[ch] + t * (bg1[ch] - bg0[ch]) + unoise(gen);
            frame.at(y, x, ch) = static_cast<uint8_t>(std::clamp(vbg, 0.0, 255.0));
          }
        }
      }

      FrameGeometry geom;
      geom.video_id = video_id;
      geom.frame_index = f;
      Tensor<float> sounding_mask;
      for (size_t o = 0; o < placed.size(); ++o) {
        const int64_t cls = classes[o];
        const std::string fam = shape_families()[static_cast<size_t>(cls) %
                                                 shape_families().size()];
        Tensor<float> m = rasterize_shape(fam, placed[o].cx, placed[o].cy,
                                          placed[o].size, c);
        const Rgb col = colors[static_cast<size_t>(cls)];
        for (int64_t y = 0; y < c; ++y) {
          for (int64_t x = 0; x < c; ++x) {
            if (m(y, x) > 0.5f) {
              frame.at(y, x, 0) = col.r;
              frame.at(y, x, 1) = col.g;
              frame.at(y, x, 2) = col.b;
            }
          }
        }
        const bool sounding = static_cast<int64_t>(o) == sounding_slot;
        if (sounding) sounding_mask = std::move(m);
        geom.objects.push_back(ShapeInstance{cls, fam, placed[o].cx, placed[o].cy,
                                             placed[o].size, sounding});
      }
      report.frames.push_back(std::move(geom));

      ImageU8 mask_img;
      mask_img.height = c;
      mask_img.width = c;
      mask_img.channels = 1;
      mask_img.pixels.assign(static_cast<size_t>(c * c), 0);
      for (int64_t i = 0; i < c * c; ++i) {
        mask_img.pixels[static_cast<size_t>(i)] = sounding_mask[i] > 0.5f ? 255 : 0;
      }

      const int64_t sounding_cls = classes[static_cast<size_t>(sounding_slot)];
      Tensor<float> audio({spec.audio_dim});
      std::normal_distribution<double> noise(0.0, spec.noise_sigma);
      for (int64_t d = 0; d < spec.audio_dim; ++d) {
        audio[d] = static_cast<float>(anchors[static_cast<size_t>(sounding_cls)][d] +
                                      noise(gen));
      }

      std::snprintf(buf, sizeof buf, "%s_f%lld", video_id.c_str(),
                    static_cast<long long>(f));
      const std::string stem = buf;
      write_png((root / "frames" / (stem + ".png")).string(), frame);
      write_png((root / "masks" / (stem + ".png")).string(), mask_img);
      write_raw_tensor((root / "audio" / (stem + ".savt")).string(), audio);

      SampleRecord rec;
      rec.video_id = video_id;
      rec.frame_index = f;
      rec.image_path = "frames/" + stem + ".png";
      rec.mask_path = "masks/" + stem + ".png";
      rec.audio_path = "audio/" + stem + ".savt";
      rec.category = category_name(sounding_cls);
      const int64_t which = v < n_train ? 0 : (v < n_train + n_val ? 1 : 2);
      manifests[static_cast<size_t>(which)].samples.push_back(std::move(rec));
    }
  }

  save_manifests(out_dir, manifests);
  return report;
}

}  // namespace avseg
