#pragma once

#include <string>

#include "avseg/ops.hpp"
#include "avseg/params.hpp"

namespace avseg {

// Per-block image encoder adapter: a squeeze-excite style channel gate
// (global average pool -> shrink -> rectifier -> expand -> sigmoid, applied
// multiplicatively) followed by a spatial branch that halves the grid with a
// stride-2 3x3 convolution and restores it with a 2x2 stride-2 transposed
// convolution. The transposed-convolution weights and the expand bias start
// at zero, so a freshly built adapter is exactly the zero map.
template <typename T>
class ImageEncoderAdapter {
 public:
  ImageEncoderAdapter(ParamStore<T>& store, const std::string& prefix,
                      int64_t channels, int64_t bottleneck)
      : channels_(channels), bottleneck_(bottleneck) {
    shrink_w_ = &store.create(prefix + ".shrink.weight", {channels, bottleneck},
                              true, Init::kXavierUniform);
    shrink_b_ = &store.create(prefix + ".shrink.bias", {bottleneck}, true, Init::kZeros);
    expand_w_ = &store.create(prefix + ".expand.weight", {bottleneck, channels},
                              true, Init::kXavierUniform);
    expand_b_ = &store.create(prefix + ".expand.bias", {channels}, true, Init::kZeros);
    down_w_ = &store.create(prefix + ".down.weight", {9 * channels, channels},
                            true, Init::kXavierUniform);
    down_b_ = &store.create(prefix + ".down.bias", {channels}, true, Init::kZeros);
    up_w_ = &store.create(prefix + ".up.weight", {channels, 4 * channels}, true,
                          Init::kZeros);
    up_b_ = &store.create(prefix + ".up.bias", {4 * channels}, true, Init::kZeros);
  }

  int64_t channels() const { return channels_; }
  int64_t bottleneck() const { return bottleneck_; }

  // x [H,W,C] -> x * broadcast(sigmoid(expand(relu(shrink(GAP(x))))))
  Var<T> channel_gate(Graph<T>& g, Var<T> x) const {
    const auto& X = x.value();
    detail::require<T>(X.rank() == 3 && X.dim(2) == channels_,
                       "channel_gate: expects [H,W,C]");
    const int64_t h = X.dim(0), w = X.dim(1);
    Var<T> flat = reshape(g, x, {h * w, channels_});
    Var<T> pooled = reshape(g, gap_rows(g, flat), {1, channels_});
    Var<T> hid = relu(g, linear(g, pooled, g.param(*shrink_w_), g.param(*shrink_b_)));
    Var<T> gate = sigmoid(g, linear(g, hid, g.param(*expand_w_), g.param(*expand_b_)));
    Var<T> gated = mul_rowvec(g, flat, reshape(g, gate, {channels_}));
    return reshape(g, gated, {h, w, channels_});
  }

  // x [H,W,C] -> up(down(x)), shape preserved; even grid sides required.
  Var<T> spatial_transform(Graph<T>& g, Var<T> x) const {
    const auto& X = x.value();
    detail::require<T>(X.rank() == 3 && X.dim(2) == channels_,
                       "spatial_transform: expects [H,W,C]");
    const int64_t h = X.dim(0), w = X.dim(1);
    if (h % 2 != 0 || w % 2 != 0) {
      throw ShapeError("spatial_transform: token grid side must be even, got " +
                       std::to_string(h) + "x" + std::to_string(w));
    }
    Var<T> col = im2col(g, x, 3, 2, 1);  // [(H/2)*(W/2), 9C]
    Var<T> down = linear(g, col, g.param(*down_w_), g.param(*down_b_));
    Var<T> up = linear(g, down, g.param(*up_w_), g.param(*up_b_));  // [(H/2)*(W/2), 4C]
    // Non-overlapping k=2 s=2 transposed convolution == depth-to-space.
    Var<T> blocks = reshape(g, up, {h / 2, w / 2, 2, 2, channels_});
    Var<T> spread = permute(g, blocks, {0, 2, 1, 3, 4});  // [H/2, 2, W/2, 2, C]
    return reshape(g, spread, {h, w, channels_});
  }

  Var<T> forward(Graph<T>& g, Var<T> x) const {
    return spatial_transform(g, channel_gate(g, x));
  }

 private:
  int64_t channels_;
  int64_t bottleneck_;
  Parameter<T>*shrink_w_, *shrink_b_, *expand_w_, *expand_b_;
  Parameter<T>*down_w_, *down_b_, *up_w_, *up_b_;
};

}  // namespace avseg
