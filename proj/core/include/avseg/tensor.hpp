#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "avseg/errors.hpp"

namespace avseg {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major n-dimensional array. The universal value currency: float
// in the production 32-bit mode, double in gradient-check mode.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), T(0)) {}

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  template <typename... Ix>
  T& operator()(Ix... ix) {
    return data_[static_cast<size_t>(flat_index(ix...))];
  }
  template <typename... Ix>
  const T& operator()(Ix... ix) const {
    return data_[static_cast<size_t>(flat_index(ix...))];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

 private:
  template <typename... Ix>
  int64_t flat_index(Ix... ix) const {
    const int64_t idx[] = {static_cast<int64_t>(ix)...};
    int64_t flat = 0;
    for (size_t d = 0; d < sizeof...(Ix); ++d) flat = flat * shape_[d] + idx[d];
    return flat;
  }

  static size_t checked_numel(const Shape& s) {
    for (int64_t d : s) {
      if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
    }
    return static_cast<size_t>(shape_numel(s));
  }

  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
void check_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite values in ") + what);
  }
}

// ---- dense kernels (Eigen-backed) ------------------------------------------

template <typename T>
using EigenMatRM =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C (+)= op_a(A) * op_b(B) with optional transposes; raw row-major buffers.
template <typename T>
void matmul_raw(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n,
                bool ta, bool tb, bool accumulate) {
  using Map = Eigen::Map<const EigenMatRM<T>>;
  using MapMut = Eigen::Map<EigenMatRM<T>>;
  Map A(a, ta ? k : m, ta ? m : k);
  Map B(b, tb ? n : k, tb ? k : n);
  MapMut C(c, m, n);
  if (!ta && !tb) {
    if (accumulate) C.noalias() += A * B; else C.noalias() = A * B;
  } else if (ta && !tb) {
    if (accumulate) C.noalias() += A.transpose() * B; else C.noalias() = A.transpose() * B;
  } else if (!ta && tb) {
    if (accumulate) C.noalias() += A * B.transpose(); else C.noalias() = A * B.transpose();
  } else {
    if (accumulate) C.noalias() += A.transpose() * B.transpose(); else C.noalias() = A.transpose() * B.transpose();
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool ta = false,
                 bool tb = false) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const int64_t m = ta ? a.dim(1) : a.dim(0);
  const int64_t k = ta ? a.dim(0) : a.dim(1);
  const int64_t kb = tb ? b.dim(1) : b.dim(0);
  const int64_t n = tb ? b.dim(0) : b.dim(1);
  if (k != kb) {
    throw ShapeError("matmul inner dims disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tensor<T> c({m, n});
  matmul_raw(a.data(), b.data(), c.data(), m, k, n, ta, tb, false);
  return c;
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.numel() != src.numel()) throw ShapeError("add_inplace size mismatch");
  T* d = dst.data();
  const T* s = src.data();
  for (int64_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

template <typename T>
void axpy_inplace(Tensor<T>& dst, T alpha, const Tensor<T>& src) {
  if (dst.numel() != src.numel()) throw ShapeError("axpy_inplace size mismatch");
  T* d = dst.data();
  const T* s = src.data();
  for (int64_t i = 0; i < dst.numel(); ++i) d[i] += alpha * s[i];
}

template <typename T>
void scale_inplace(Tensor<T>& t, T alpha) {
  for (int64_t i = 0; i < t.numel(); ++i) t[i] *= alpha;
}

// ---- 1-D linear resampling --------------------------------------------------

// One output sample expressed as lerp(in[i0], in[i1], frac). The lerp form
// a + f*(b-a) preserves constants bit-exactly.
struct LinSample {
  int64_t i0 = 0;
  int64_t i1 = 0;
  double frac = 0.0;
};

// Half-pixel convention (image resizing): src = (i + 0.5) * in/out - 0.5.
inline std::vector<LinSample> linear_samples_half_pixel(int64_t in_len,
                                                        int64_t out_len) {
  std::vector<LinSample> s(static_cast<size_t>(out_len));
  const double scale = static_cast<double>(in_len) / static_cast<double>(out_len);
  for (int64_t i = 0; i < out_len; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    const double cap = static_cast<double>(in_len - 1);
    if (src > cap) src = cap;
    int64_t i0 = static_cast<int64_t>(std::floor(src));
    if (i0 > in_len - 1) i0 = in_len - 1;
    int64_t i1 = std::min<int64_t>(i0 + 1, in_len - 1);
    s[static_cast<size_t>(i)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return s;
}

// Align-corners convention (relative-position tables): endpoints map to
// endpoints, src = i * (in-1)/(out-1).
inline std::vector<LinSample> linear_samples_align_corners(int64_t in_len,
                                                           int64_t out_len) {
  std::vector<LinSample> s(static_cast<size_t>(out_len));
  for (int64_t i = 0; i < out_len; ++i) {
    double src = 0.0;
    if (out_len > 1) {
      src = static_cast<double>(i) * static_cast<double>(in_len - 1) /
            static_cast<double>(out_len - 1);
    }
    int64_t i0 = static_cast<int64_t>(std::floor(src));
    if (i0 > in_len - 1) i0 = in_len - 1;
    int64_t i1 = std::min<int64_t>(i0 + 1, in_len - 1);
    s[static_cast<size_t>(i)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return s;
}

template <typename T>
inline T lerp_val(T a, T b, double f) {
  return a + static_cast<T>(f) * (b - a);
}

// Bilinear 2-D resize, half-pixel convention, edge clamp. Identity when the
// sizes already match (bit-exact no-op).
template <typename T>
Tensor<T> resize_bilinear_2d(const Tensor<T>& x, int64_t oh, int64_t ow) {
  if (x.rank() != 2) throw ShapeError("resize_bilinear_2d expects rank-2 input");
  const int64_t h = x.dim(0), w = x.dim(1);
  if (h == oh && w == ow) return x;
  const auto ys = linear_samples_half_pixel(h, oh);
  const auto xs = linear_samples_half_pixel(w, ow);
  Tensor<T> out({oh, ow});
  for (int64_t i = 0; i < oh; ++i) {
    const auto& sy = ys[static_cast<size_t>(i)];
    for (int64_t j = 0; j < ow; ++j) {
      const auto& sx = xs[static_cast<size_t>(j)];
      const T top = lerp_val(x(sy.i0, sx.i0), x(sy.i0, sx.i1), sx.frac);
      const T bot = lerp_val(x(sy.i1, sx.i0), x(sy.i1, sx.i1), sx.frac);
      out(i, j) = lerp_val(top, bot, sy.frac);
    }
  }
  return out;
}

template <typename T>
Tensor<T> resize_nearest_2d(const Tensor<T>& x, int64_t oh, int64_t ow) {
  if (x.rank() != 2) throw ShapeError("resize_nearest_2d expects rank-2 input");
  const int64_t h = x.dim(0), w = x.dim(1);
  if (h == oh && w == ow) return x;
  Tensor<T> out({oh, ow});
  for (int64_t i = 0; i < oh; ++i) {
    int64_t si = static_cast<int64_t>((static_cast<double>(i) + 0.5) * h / oh);
    si = std::min<int64_t>(std::max<int64_t>(si, 0), h - 1);
    for (int64_t j = 0; j < ow; ++j) {
      int64_t sj = static_cast<int64_t>((static_cast<double>(j) + 0.5) * w / ow);
      sj = std::min<int64_t>(std::max<int64_t>(sj, 0), w - 1);
      out(i, j) = x(si, sj);
    }
  }
  return out;
}

}  // namespace avseg
