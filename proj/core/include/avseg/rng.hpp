#pragma once

#include <cmath>
#include <random>

#include "avseg/tensor.hpp"

namespace avseg {

using Rng = std::mt19937_64;

template <typename T>
void fill_normal(Tensor<T>& t, Rng& gen, double stddev, double mean = 0.0) {
  std::normal_distribution<double> dist(mean, stddev);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(dist(gen));
}

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& gen, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(dist(gen));
}

// Glorot bound from the leading/trailing dims; weight layout is [in, out].
template <typename T>
void fill_xavier_uniform(Tensor<T>& t, Rng& gen) {
  double fan_in = 1.0, fan_out = 1.0;
  if (t.rank() >= 2) {
    fan_in = static_cast<double>(t.dim(0));
    fan_out = static_cast<double>(t.dim(t.rank() - 1));
  } else if (t.rank() == 1) {
    fan_in = fan_out = static_cast<double>(t.dim(0));
  }
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  fill_uniform(t, gen, -bound, bound);
}

}  // namespace avseg
