#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "avseg/config.hpp"
#include "avseg/image_adapter.hpp"
#include "avseg/ops.hpp"
#include "avseg/params.hpp"

namespace avseg {

// Resamples a [2S-1, head_dim] relative-position table to [2*target-1,
// head_dim] by per-column linear interpolation with endpoints fixed
// (align-corners). Identity (bit-exact) when the sizes already match.
template <typename T>
Tensor<T> interpolate_rel_pos(const Tensor<T>& table, int64_t target_side) {
  if (table.rank() != 2) throw ShapeError("interpolate_rel_pos: expects [L, dh]");
  if (target_side < 1) throw ShapeError("interpolate_rel_pos: target_side must be >= 1");
  const int64_t len = table.dim(0), dh = table.dim(1);
  const int64_t out_len = 2 * target_side - 1;
  if (out_len == len) return table;
  const auto samples = linear_samples_align_corners(len, out_len);
  Tensor<T> out({out_len, dh});
  for (int64_t i = 0; i < out_len; ++i) {
    const auto& s = samples[static_cast<size_t>(i)];
    for (int64_t d = 0; d < dh; ++d) {
      out(i, d) = lerp_val(table(s.i0, d), table(s.i1, d), s.frac);
    }
  }
  return out;
}

// Multi-head attention over row-token matrices. Used with rel-pos tables in
// the encoder and without them in the decoder.
template <typename T>
class MultiheadAttention {
 public:
  MultiheadAttention(ParamStore<T>& store, const std::string& prefix,
                     int64_t width, int64_t heads, bool trainable)
      : width_(width), heads_(heads), head_dim_(width / heads) {
    const Init wi = trainable ? Init::kXavierUniform : Init::kNormal;
    const double arg = trainable ? 0.0 : 0.02;
    wq_ = &store.create(prefix + ".q.weight", {width, width}, trainable, wi, arg);
    bq_ = &store.create(prefix + ".q.bias", {width}, trainable, Init::kZeros);
    wk_ = &store.create(prefix + ".k.weight", {width, width}, trainable, wi, arg);
    bk_ = &store.create(prefix + ".k.bias", {width}, trainable, Init::kZeros);
    wv_ = &store.create(prefix + ".v.weight", {width, width}, trainable, wi, arg);
    bv_ = &store.create(prefix + ".v.bias", {width}, trainable, Init::kZeros);
    wo_ = &store.create(prefix + ".proj.weight", {width, width}, trainable, wi, arg);
    bo_ = &store.create(prefix + ".proj.bias", {width}, trainable, Init::kZeros);
  }

  // xq [Tq,C], xk/xv [Tk,C]. When rel-pos vars are valid, adds the decomposed
  // per-axis bias (self-attention on a square side x side token grid).
  Var<T> forward(Graph<T>& g, Var<T> xq, Var<T> xk, Var<T> xv,
                 Var<T> rel_h = {}, Var<T> rel_w = {}, int64_t side = 0) const {
    const int64_t tq = xq.value().dim(0);
    const int64_t tk = xk.value().dim(0);
    Var<T> q = heads_split(g, linear(g, xq, g.param(*wq_), g.param(*bq_)), tq);
    Var<T> k = heads_split(g, linear(g, xk, g.param(*wk_), g.param(*bk_)), tk);
    Var<T> v = heads_split(g, linear(g, xv, g.param(*wv_), g.param(*bv_)), tk);
    const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(head_dim_)));
    Var<T> scores = bmm(g, scale(g, q, inv_sqrt), k, false, true);  // [nh,Tq,Tk]
    if (rel_h) {
      scores = add(g, scores, rel_pos_bias(g, q, rel_h, rel_w, side));
    }
    Var<T> attn = reshape(
        g, softmax_rows(g, reshape(g, scores, {heads_ * tq, tk})), {heads_, tq, tk});
    Var<T> ctx = bmm(g, attn, v);                        // [nh,Tq,dh]
    Var<T> merged = reshape(g, permute(g, ctx, {1, 0, 2}), {tq, width_});
    return linear(g, merged, g.param(*wo_), g.param(*bo_));
  }

 private:
  Var<T> heads_split(Graph<T>& g, Var<T> x, int64_t t) const {
    return permute(g, reshape(g, x, {t, heads_, head_dim_}), {1, 0, 2});
  }

  int64_t width_, heads_, head_dim_;
  Parameter<T>*wq_, *bq_, *wk_, *bk_, *wv_, *bv_, *wo_, *bo_;
};

// Adapter-augmented transformer block:
//   x'  = x + broadcast(inject)
//   x_a = MHSA(LN(x')) + x'
//   out = MLP(LN(x_a)) + Adapter(LN(x_a)) + x_a
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock(ParamStore<T>& store, const std::string& prefix,
                   const ModelConfig& cfg)
      : channels_(cfg.embed_dim),
        side_(cfg.grid_side()),
        attn_(store, prefix + ".attn", cfg.embed_dim, cfg.num_heads, false),
        adapter_(store, prefix + ".adapter", cfg.embed_dim, cfg.bottleneck_dim()) {
    const int64_t c = cfg.embed_dim;
    const int64_t hidden = static_cast<int64_t>(cfg.mlp_ratio * static_cast<double>(c));
    ln1_g_ = &store.create(prefix + ".ln1.gamma", {c}, false, Init::kOnes);
    ln1_b_ = &store.create(prefix + ".ln1.beta", {c}, false, Init::kZeros);
    ln2_g_ = &store.create(prefix + ".ln2.gamma", {c}, false, Init::kOnes);
    ln2_b_ = &store.create(prefix + ".ln2.beta", {c}, false, Init::kZeros);
    mlp_w1_ = &store.create(prefix + ".mlp.fc1.weight", {c, hidden}, false,
                            Init::kNormal, 0.02);
    mlp_b1_ = &store.create(prefix + ".mlp.fc1.bias", {hidden}, false, Init::kZeros);
    mlp_w2_ = &store.create(prefix + ".mlp.fc2.weight", {hidden, c}, false,
                            Init::kNormal, 0.02);
    mlp_b2_ = &store.create(prefix + ".mlp.fc2.bias", {c}, false, Init::kZeros);
    rel_h_ = &store.create(prefix + ".rel_pos_h", {2 * side_ - 1, cfg.head_dim()},
                           false, Init::kNormal, 0.02);
    rel_w_ = &store.create(prefix + ".rel_pos_w", {2 * side_ - 1, cfg.head_dim()},
                           false, Init::kNormal, 0.02);
  }

  // x [T,C] on an h x w token grid; inject broadcast-added to every token
  // before the block when valid.
  Var<T> forward(Graph<T>& g, Var<T> x, int64_t h, int64_t w, Var<T> inject,
                 bool use_adapter) const {
    Var<T> xin = inject ? add_rowvec(g, x, inject) : x;
    Var<T> h1 = layernorm(g, xin, g.param(*ln1_g_), g.param(*ln1_b_));
    auto [rh, rw] = rel_pos_vars(g, h);
    Var<T> xa = add(g, attn_.forward(g, h1, h1, h1, rh, rw, h), xin);
    Var<T> h2 = layernorm(g, xa, g.param(*ln2_g_), g.param(*ln2_b_));
    Var<T> mlp = linear(g, gelu(g, linear(g, h2, g.param(*mlp_w1_), g.param(*mlp_b1_))),
                        g.param(*mlp_w2_), g.param(*mlp_b2_));
    Var<T> out = add(g, mlp, xa);
    if (use_adapter) {
      Var<T> spatial = reshape(g, h2, {h, w, channels_});
      Var<T> ad = reshape(g, adapter_.forward(g, spatial), {h * w, channels_});
      out = add(g, out, ad);
    }
    check_finite(out.value(), "transformer block output");
    return out;
  }

  const ImageEncoderAdapter<T>& adapter() const { return adapter_; }
  ImageEncoderAdapter<T>& adapter() { return adapter_; }

 private:
  // Parameter tables when the runtime grid matches the build grid, otherwise
  // an interpolated constant (tables are frozen).
  std::pair<Var<T>, Var<T>> rel_pos_vars(Graph<T>& g, int64_t side) const {
    if (side == side_) return {g.param(*rel_h_), g.param(*rel_w_)};
    return {g.input(interpolate_rel_pos(rel_h_->value, side)),
            g.input(interpolate_rel_pos(rel_w_->value, side))};
  }

  int64_t channels_;
  int64_t side_;
  MultiheadAttention<T> attn_;
  ImageEncoderAdapter<T> adapter_;
  Parameter<T>*ln1_g_, *ln1_b_, *ln2_g_, *ln2_b_;
  Parameter<T>*mlp_w1_, *mlp_b1_, *mlp_w2_, *mlp_b2_;
  Parameter<T>*rel_h_, *rel_w_;
};

// Patch embedding, N adapter-augmented blocks, and the neck projection from
// encoder width C to prompt width P.
template <typename T>
class ImageEncoder {
 public:
  ImageEncoder(ParamStore<T>& store, const ModelConfig& cfg) : cfg_(cfg) {
    const int64_t c = cfg.embed_dim;
    const int64_t pp3 = cfg.patch_size * cfg.patch_size * 3;
    patch_w_ = &store.create("encoder.patch_embed.weight", {pp3, c}, false,
                             Init::kNormal, 0.02);
    patch_b_ = &store.create("encoder.patch_embed.bias", {c}, false, Init::kZeros);
    blocks_.reserve(static_cast<size_t>(cfg.num_blocks));
    for (int64_t i = 0; i < cfg.num_blocks; ++i) {
      blocks_.emplace_back(store, "encoder.blocks." + std::to_string(i), cfg);
    }
    neck_w_ = &store.create("encoder.neck.proj.weight", {c, cfg.prompt_dim}, true,
                            Init::kXavierUniform);
    neck_b_ = &store.create("encoder.neck.proj.bias", {cfg.prompt_dim}, true,
                            Init::kZeros);
    neck_g_ = &store.create("encoder.neck.norm.gamma", {cfg.prompt_dim}, true,
                            Init::kOnes);
    neck_beta_ = &store.create("encoder.neck.norm.beta", {cfg.prompt_dim}, true,
                               Init::kZeros);
  }

  // image [3,R,R] -> TokenMap [R/p, R/p, C]
  Var<T> patch_embed(Graph<T>& g, Var<T> image) const {
    const auto& im = image.value();
    if (im.rank() != 3 || im.dim(0) != 3 || im.dim(1) != cfg_.input_resolution ||
        im.dim(2) != cfg_.input_resolution) {
      throw ShapeError("patch_embed: expected image [3," +
                       std::to_string(cfg_.input_resolution) + "," +
                       std::to_string(cfg_.input_resolution) + "], got " +
                       shape_str(im.shape()));
    }
    const int64_t side = cfg_.grid_side();
    Var<T> hwc = permute(g, image, {1, 2, 0});
    Var<T> col = im2col(g, hwc, cfg_.patch_size, cfg_.patch_size, 0);
    Var<T> tok = linear(g, col, g.param(*patch_w_), g.param(*patch_b_));
    return reshape(g, tok, {side, side, cfg_.embed_dim});
  }

  // image [3,R,R] + N per-block injections [C] -> ImageEmbedding [P,H,W].
  // With use_adapters=false and no injections this is the adapter-free
  // reference path of the same encoder.
  Var<T> forward(Graph<T>& g, Var<T> image, const std::vector<Var<T>>& injections,
                 bool use_adapters = true) const {
    if (!injections.empty() &&
        injections.size() != static_cast<size_t>(cfg_.num_blocks)) {
      throw ShapeError("encoder forward: expected " +
                       std::to_string(cfg_.num_blocks) + " injections, got " +
                       std::to_string(injections.size()));
    }
    const int64_t side = cfg_.grid_side();
    Var<T> x = reshape(g, patch_embed(g, image), {side * side, cfg_.embed_dim});
    for (size_t i = 0; i < blocks_.size(); ++i) {
      Var<T> inject = injections.empty() ? Var<T>{} : injections[i];
      x = blocks_[i].forward(g, x, side, side, inject, use_adapters);
    }
    Var<T> y = linear(g, x, g.param(*neck_w_), g.param(*neck_b_));
    y = layernorm(g, y, g.param(*neck_g_), g.param(*neck_beta_));
    return permute(g, reshape(g, y, {side, side, cfg_.prompt_dim}), {2, 0, 1});
  }

  std::vector<TransformerBlock<T>>& blocks() { return blocks_; }
  const std::vector<TransformerBlock<T>>& blocks() const { return blocks_; }

 private:
  ModelConfig cfg_;
  Parameter<T>*patch_w_, *patch_b_;
  std::vector<TransformerBlock<T>> blocks_;
  Parameter<T>*neck_w_, *neck_b_, *neck_g_, *neck_beta_;
};

}  // namespace avseg
