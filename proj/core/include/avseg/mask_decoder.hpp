#pragma once

#include <string>
#include <vector>

#include "avseg/backbone.hpp"
#include "avseg/config.hpp"
#include "avseg/ops.hpp"
#include "avseg/params.hpp"

namespace avseg {

// Lightweight two-way-attention mask decoder. A learnable output token is
// stacked with the single audio-derived sparse prompt token; two rounds of
// bidirectional cross-attention mix tokens and image embedding, the image
// path is upscaled 4x by two non-overlapping transposed convolutions, and a
// hypernetwork MLP turns the output token into per-channel mask weights.
template <typename T>
class MaskDecoder {
 public:
  MaskDecoder(ParamStore<T>& store, const ModelConfig& cfg)
      : cfg_(cfg), side_(cfg.grid_side()) {
    const int64_t p = cfg.prompt_dim;
    const int64_t hidden = 2 * p;
    output_token_ = &store.create("decoder.output_token", {1, p}, true,
                                  Init::kNormal, 0.02);
    pos_embed_ = &store.create("decoder.pos_embed", {side_ * side_, p}, true,
                               Init::kNormal, 0.02);
    for (int64_t i = 0; i < kNumLayers; ++i) {
      const std::string pre = "decoder.layers." + std::to_string(i);
      layers_.push_back(Layer{
          MultiheadAttention<T>(store, pre + ".self_attn", p, cfg.num_heads, true),
          norm(store, pre + ".norm1", p),
          MultiheadAttention<T>(store, pre + ".token_to_image", p, cfg.num_heads, true),
          norm(store, pre + ".norm2", p),
          &store.create(pre + ".mlp.fc1.weight", {p, hidden}, true, Init::kXavierUniform),
          &store.create(pre + ".mlp.fc1.bias", {hidden}, true, Init::kZeros),
          &store.create(pre + ".mlp.fc2.weight", {hidden, p}, true, Init::kXavierUniform),
          &store.create(pre + ".mlp.fc2.bias", {p}, true, Init::kZeros),
          norm(store, pre + ".norm3", p),
          MultiheadAttention<T>(store, pre + ".image_to_token", p, cfg.num_heads, true),
          norm(store, pre + ".norm4", p),
      });
    }
    final_attn_ = std::make_unique<MultiheadAttention<T>>(
        store, "decoder.final_token_to_image", p, cfg.num_heads, true);
    final_norm_ = norm(store, "decoder.final_norm", p);
    up1_w_ = &store.create("decoder.upscale.tconv1.weight", {p, (p / 2) * 4}, true,
                           Init::kXavierUniform);
    up1_b_ = &store.create("decoder.upscale.tconv1.bias", {(p / 2) * 4}, true,
                           Init::kZeros);
    up_norm_ = norm(store, "decoder.upscale.norm", p / 2);
    up2_w_ = &store.create("decoder.upscale.tconv2.weight", {p / 2, (p / 4) * 4},
                           true, Init::kXavierUniform);
    up2_b_ = &store.create("decoder.upscale.tconv2.bias", {(p / 4) * 4}, true,
                           Init::kZeros);
    hyper_w1_ = &store.create("decoder.hyper.fc1.weight", {p, p}, true,
                              Init::kXavierUniform);
    hyper_b1_ = &store.create("decoder.hyper.fc1.bias", {p}, true, Init::kZeros);
    hyper_w2_ = &store.create("decoder.hyper.fc2.weight", {p, p}, true,
                              Init::kXavierUniform);
    hyper_b2_ = &store.create("decoder.hyper.fc2.bias", {p}, true, Init::kZeros);
    hyper_w3_ = &store.create("decoder.hyper.fc3.weight", {p, p / 4}, true,
                              Init::kXavierUniform);
    hyper_b3_ = &store.create("decoder.hyper.fc3.bias", {p / 4}, true, Init::kZeros);
  }

  // embedding [P,H,W], prompt [1,P] -> mask logits [1, 4H, 4W]
  Var<T> decode(Graph<T>& g, Var<T> embedding, Var<T> prompt) const {
    const auto& E = embedding.value();
    const int64_t p = cfg_.prompt_dim;
    if (E.rank() != 3 || E.dim(0) != p) {
      throw ShapeError("decode: embedding width does not match prompt_dim, got " +
                       shape_str(E.shape()));
    }
    if (prompt.value().rank() != 2 || prompt.value().dim(0) != 1 ||
        prompt.value().dim(1) != p) {
      throw ShapeError("decode: prompt must be [1," + std::to_string(p) + "], got " +
                       shape_str(prompt.value().shape()));
    }
    const int64_t h = E.dim(1), w = E.dim(2), t = h * w;
    if (pos_embed_->value.dim(0) != t) {
      throw ShapeError("decode: embedding grid does not match decoder build grid");
    }
    Var<T> img = reshape(g, permute(g, embedding, {1, 2, 0}), {t, p});
    img = add(g, img, g.param(*pos_embed_));
    Var<T> tokens = concat_rows(g, g.param(*output_token_), prompt);  // [2,P]
    for (const Layer& L : layers_) {
      tokens = ln(g, L.norm1, add(g, tokens, L.self_attn.forward(g, tokens, tokens, tokens)));
      tokens = ln(g, L.norm2, add(g, tokens, L.token_to_image.forward(g, tokens, img, img)));
      Var<T> mlp = linear(
          g, relu(g, linear(g, tokens, g.param(*L.mlp_w1), g.param(*L.mlp_b1))),
          g.param(*L.mlp_w2), g.param(*L.mlp_b2));
      tokens = ln(g, L.norm3, add(g, tokens, mlp));
      img = ln(g, L.norm4, add(g, img, L.image_to_token.forward(g, img, tokens, tokens)));
    }
    tokens = ln(g, final_norm_,
                add(g, tokens, final_attn_->forward(g, tokens, img, img)));
    Var<T> out_tok = slice_rows(g, tokens, 0, 1);  // [1,P]

    // 4x upscale: two non-overlapping transposed convolutions (k2 s2).
    Var<T> u1 = linear(g, img, g.param(*up1_w_), g.param(*up1_b_));
    Var<T> f1 = depth_to_space(g, u1, h, w, p / 2);               // [2H*2W, P/2]
    f1 = gelu(g, ln(g, up_norm_, f1));
    Var<T> u2 = linear(g, f1, g.param(*up2_w_), g.param(*up2_b_));
    Var<T> feat = gelu(g, depth_to_space(g, u2, 2 * h, 2 * w, p / 4));  // [4H*4W, P/4]

    Var<T> hyp = relu(g, linear(g, out_tok, g.param(*hyper_w1_), g.param(*hyper_b1_)));
    hyp = relu(g, linear(g, hyp, g.param(*hyper_w2_), g.param(*hyper_b2_)));
    hyp = linear(g, hyp, g.param(*hyper_w3_), g.param(*hyper_b3_));  // [1, P/4]

    Var<T> logits = matmul2(g, hyp, feat, false, true);  // [1, 4H*4W]
    logits = reshape(g, logits, {1, 4 * h, 4 * w});
    check_finite(logits.value(), "decoder logits");
    return logits;
  }

 private:
  static constexpr int64_t kNumLayers = 2;

  struct Norm {
    Parameter<T>*g, *b;
  };

  struct Layer {
    MultiheadAttention<T> self_attn;
    Norm norm1;
    MultiheadAttention<T> token_to_image;
    Norm norm2;
    Parameter<T>*mlp_w1, *mlp_b1, *mlp_w2, *mlp_b2;
    Norm norm3;
    MultiheadAttention<T> image_to_token;
    Norm norm4;
  };

  static Norm norm(ParamStore<T>& store, const std::string& prefix, int64_t c) {
    return Norm{&store.create(prefix + ".gamma", {c}, true, Init::kOnes),
                &store.create(prefix + ".beta", {c}, true, Init::kZeros)};
  }

  static Var<T> ln(Graph<T>& g, const Norm& n, Var<T> x) {
    return layernorm(g, x, g.param(*n.g), g.param(*n.b));
  }

  // [H*W, C*4] -> [2H*2W, C]: the 2x2 sub-pixel layout of a k2 s2 transposed
  // convolution with non-overlapping taps.
  static Var<T> depth_to_space(Graph<T>& g, Var<T> x, int64_t h, int64_t w,
                               int64_t c) {
    Var<T> blocks = reshape(g, x, {h, w, 2, 2, c});
    Var<T> spread = permute(g, blocks, {0, 2, 1, 3, 4});
    return reshape(g, spread, {2 * h * 2 * w, c});
  }

  ModelConfig cfg_;
  int64_t side_;
  Parameter<T>*output_token_, *pos_embed_;
  std::vector<Layer> layers_;
  std::unique_ptr<MultiheadAttention<T>> final_attn_;
  Norm final_norm_;
  Parameter<T>*up1_w_, *up1_b_;
  Norm up_norm_;
  Parameter<T>*up2_w_, *up2_b_;
  Parameter<T>*hyper_w1_, *hyper_b1_, *hyper_w2_, *hyper_b2_, *hyper_w3_, *hyper_b3_;
};

// Maps decoder-resolution logits back to the pre-resize image geometry:
// bilinear to the padded square then a top-left crop for zero-padded samples,
// or a direct bilinear resize to the original size otherwise (mirroring
// resize_with_rule).
template <typename T>
Var<T> upscale_to_input(Graph<T>& g, Var<T> logits, int64_t padded_size,
                        int64_t orig_h, int64_t orig_w) {
  const auto& L = logits.value();
  if (L.rank() != 3 || L.dim(0) != 1 || L.dim(1) != L.dim(2)) {
    throw ShapeError("upscale_to_input: expects square logits [1,S,S], got " +
                     shape_str(L.shape()));
  }
  if (padded_size < 1 || orig_h < 1 || orig_w < 1) {
    throw ShapeError("upscale_to_input: sizes must be positive");
  }
  Var<T> flat = reshape(g, logits, {L.dim(1), L.dim(2)});
  if (orig_h < padded_size && orig_w < padded_size) {
    // Zero-pad branch: the sample was placed top-left on a padded canvas.
    Var<T> up = bilinear_resize(g, flat, padded_size, padded_size);
    return crop2d(g, up, orig_h, orig_w);
  }
  return bilinear_resize(g, flat, orig_h, orig_w);
}

}  // namespace avseg
