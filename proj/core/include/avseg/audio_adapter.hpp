#pragma once

#include <string>
#include <vector>

#include "avseg/config.hpp"
#include "avseg/ops.hpp"
#include "avseg/params.hpp"

namespace avseg {

// Per-block audio injections plus the sparse prompt token.
template <typename T>
struct InjectionBundleVars {
  std::vector<Var<T>> injections;  // a_1..a_N, each [C]
  Var<T> prompt;                   // [1, P]
};

// Residual audio encoder adapter stack. The raw audio feature is projected to
// encoder width, then run through N chained PEs (2-layer MLP + residual):
//   a_0 = 0,  a_i = PE_i(F_A + a_{i-1})
// Each a_i is injected into encoder block i; the prompt is projected from a_N
// (prompt_mode=last) or from sum_i a_i (prompt_mode=sum). PE second layers
// start at zero, so a freshly built stack has a_i = i * F_A.
template <typename T>
class AudioAdapterStack {
 public:
  AudioAdapterStack(ParamStore<T>& store, const ModelConfig& cfg) : cfg_(cfg) {
    const int64_t c = cfg.embed_dim;
    const int64_t h = c / 2;  // PE hidden width
    in_w_ = &store.create("audio.input_proj.weight", {cfg.audio_dim, c}, true,
                          Init::kNormal, 0.02);
    in_b_ = &store.create("audio.input_proj.bias", {c}, true, Init::kZeros);
    pes_.reserve(static_cast<size_t>(cfg.num_blocks));
    for (int64_t i = 0; i < cfg.num_blocks; ++i) {
      const std::string p = "audio.pe." + std::to_string(i);
      Pe pe;
      pe.w1 = &store.create(p + ".fc1.weight", {c, h}, true, Init::kXavierUniform);
      pe.b1 = &store.create(p + ".fc1.bias", {h}, true, Init::kZeros);
      pe.w2 = &store.create(p + ".fc2.weight", {h, c}, true, Init::kZeros);
      pe.b2 = &store.create(p + ".fc2.bias", {c}, true, Init::kZeros);
      pes_.push_back(pe);
    }
    prompt_w1_ = &store.create("audio.prompt_proj.fc1.weight", {c, c}, true,
                               Init::kXavierUniform);
    prompt_b1_ = &store.create("audio.prompt_proj.fc1.bias", {c}, true, Init::kZeros);
    prompt_w2_ = &store.create("audio.prompt_proj.fc2.weight", {c, cfg.prompt_dim},
                               true, Init::kXavierUniform);
    prompt_b2_ = &store.create("audio.prompt_proj.fc2.bias", {cfg.prompt_dim}, true,
                               Init::kZeros);
  }

  int64_t depth() const { return cfg_.num_blocks; }

  // f [1,C] -> MLP(f) + f
  Var<T> pe_forward(Graph<T>& g, int64_t i, Var<T> f) const {
    const Pe& pe = pes_[static_cast<size_t>(i)];
    Var<T> hid = relu(g, linear(g, f, g.param(*pe.w1), g.param(*pe.b1)));
    Var<T> out = linear(g, hid, g.param(*pe.w2), g.param(*pe.b2));
    return add(g, out, f);
  }

  // source [1,C] -> sparse prompt token [1,P] (2-layer MLP)
  Var<T> project_prompt(Graph<T>& g, Var<T> source) const {
    detail::require<T>(source.value().rank() == 2 && source.value().dim(0) == 1 &&
                           source.value().dim(1) == cfg_.embed_dim,
                       "project_prompt: expects [1,C]");
    Var<T> hid = relu(g, linear(g, source, g.param(*prompt_w1_), g.param(*prompt_b1_)));
    return linear(g, hid, g.param(*prompt_w2_), g.param(*prompt_b2_));
  }

  // f_raw [D_a] -> N injections + prompt.
  InjectionBundleVars<T> stack_forward(Graph<T>& g, Var<T> f_raw) const {
    detail::require<T>(f_raw.value().rank() == 1 &&
                           f_raw.value().dim(0) == cfg_.audio_dim,
                       "stack_forward: expects audio feature [D_a]");
    Var<T> fa = linear(g, reshape(g, f_raw, {1, cfg_.audio_dim}), g.param(*in_w_),
                       g.param(*in_b_));  // [1,C]
    InjectionBundleVars<T> out;
    std::vector<Var<T>> stages;  // a_i as [1,C]
    Var<T> prev{};
    for (int64_t i = 0; i < cfg_.num_blocks; ++i) {
      Var<T> s = prev ? add(g, fa, prev) : fa;
      Var<T> a = pe_forward(g, i, s);
      stages.push_back(a);
      out.injections.push_back(reshape(g, a, {cfg_.embed_dim}));
      prev = a;
    }
    Var<T> source =
        cfg_.prompt_mode == PromptMode::kLast ? stages.back() : sum_vars(g, stages);
    out.prompt = project_prompt(g, source);
    return out;
  }

  // Test hook: clears the PE MLPs entirely (both layers), which makes the
  // stack's zero-init unrolling a_i = i * F_A hold exactly.
  void zero_pe_mlps() {
    for (auto& pe : pes_) {
      pe.w1->value.fill(T(0));
      pe.b1->value.fill(T(0));
      pe.w2->value.fill(T(0));
      pe.b2->value.fill(T(0));
    }
  }

 private:
  struct Pe {
    Parameter<T>*w1, *b1, *w2, *b2;
  };

  ModelConfig cfg_;
  Parameter<T>*in_w_, *in_b_;
  std::vector<Pe> pes_;
  Parameter<T>*prompt_w1_, *prompt_b1_, *prompt_w2_, *prompt_b2_;
};

}  // namespace avseg
