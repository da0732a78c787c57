#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "avseg/graph.hpp"

// Differentiable op library. Every op appends one node to the tape; the
// backward lambda accumulates into parent gradients (+=), so fan-out is
// handled by construction. Shapes are validated at op construction.

namespace avseg {

namespace detail {

template <typename T>
inline void require(bool cond, const char* msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace detail

// ---- elementwise ------------------------------------------------------------

template <typename T>
Var<T> add(Graph<T>& g, Var<T> a, Var<T> b) {
  detail::require<T>(a.value().same_shape(b.value()), "add: shape mismatch");
  Tensor<T> y = a.value();
  add_inplace(y, b.value());
  Node<T>& n = g.make(std::move(y), {a.node, b.node});
  if (n.requires_grad) {
    Node<T>*an = a.node, *bn = b.node;
    n.backward = [an, bn](Node<T>& self) {
      if (an->requires_grad) add_inplace(an->ensure_grad(), self.grad);
      if (bn->requires_grad) add_inplace(bn->ensure_grad(), self.grad);
    };
  }
  return {&n};
}

template <typename T>
Var<T> sub(Graph<T>& g, Var<T> a, Var<T> b) {
  detail::require<T>(a.value().same_shape(b.value()), "sub: shape mismatch");
  Tensor<T> y = a.value();
  axpy_inplace(y, T(-1), b.value());
  Node<T>& n = g.make(std::move(y), {a.node, b.node});
  if (n.requires_grad) {
    Node<T>*an = a.node, *bn = b.node;
    n.backward = [an, bn](Node<T>& self) {
      if (an->requires_grad) add_inplace(an->ensure_grad(), self.grad);
      if (bn->requires_grad) axpy_inplace(bn->ensure_grad(), T(-1), self.grad);
    };
  }
  return {&n};
}

template <typename T>
Var<T> scale(Graph<T>& g, Var<T> a, T s) {
  Tensor<T> y = a.value();
  scale_inplace(y, s);
  Node<T>& n = g.make(std::move(y), {a.node});
  if (n.requires_grad) {
    Node<T>* an = a.node;
    n.backward = [an, s](Node<T>& self) {
      if (an->requires_grad) axpy_inplace(an->ensure_grad(), s, self.grad);
    };
  }
  return {&n};
}

template <typename T>
Var<T> hadamard(Graph<T>& g, Var<T> a, Var<T> b) {
  detail::require<T>(a.value().same_shape(b.value()), "hadamard: shape mismatch");
  Tensor<T> y = a.value();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] *= b.value()[i];
  Node<T>& n = g.make(std::move(y), {a.node, b.node});
  if (n.requires_grad) {
    Node<T>*an = a.node, *bn = b.node;
    n.backward = [an, bn](Node<T>& self) {
      const int64_t m = self.grad.numel();
      if (an->requires_grad) {
        Tensor<T>& da = an->ensure_grad();
        for (int64_t i = 0; i < m; ++i) da[i] += self.grad[i] * bn->value()[i];
      }
      if (bn->requires_grad) {
        Tensor<T>& db = bn->ensure_grad();
        for (int64_t i = 0; i < m; ++i) db[i] += self.grad[i] * an->value()[i];
      }
    };
  }
  return {&n};
}

// x [M,N] + v [N], broadcast over rows.
template <typename T>
Var<T> add_rowvec(Graph<T>& g, Var<T> x, Var<T> v) {
  detail::require<T>(x.value().rank() == 2 && v.value().rank() == 1 &&
                         x.value().dim(1) == v.value().dim(0),
                     "add_rowvec: expects [M,N] + [N]");
  const int64_t m = x.value().dim(0), c = x.value().dim(1);
  Tensor<T> y = x.value();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < c; ++j) y(i, j) += v.value()[j];
  }
  Node<T>& n = g.make(std::move(y), {x.node, v.node});
  if (n.requires_grad) {
    Node<T>*xn = x.node, *vn = v.node;
    n.backward = [xn, vn, m, c](Node<T>& self) {
      if (xn->requires_grad) add_inplace(xn->ensure_grad(), self.grad);
      if (vn->requires_grad) {
        Tensor<T>& dv = vn->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < c; ++j) dv[j] += self.grad(i, j);
        }
      }
    };
  }
  return {&n};
}

// x [M,N] * v [N], broadcast over rows (channel gating).
template <typename T>
Var<T> mul_rowvec(Graph<T>& g, Var<T> x, Var<T> v) {
  detail::require<T>(x.value().rank() == 2 && v.value().rank() == 1 &&
                         x.value().dim(1) == v.value().dim(0),
                     "mul_rowvec: expects [M,N] * [N]");
  const int64_t m = x.value().dim(0), c = x.value().dim(1);
  Tensor<T> y = x.value();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < c; ++j) y(i, j) *= v.value()[j];
  }
  Node<T>& n = g.make(std::move(y), {x.node, v.node});
  if (n.requires_grad) {
    Node<T>*xn = x.node, *vn = v.node;
    n.backward = [xn, vn, m, c](Node<T>& self) {
      if (xn->requires_grad) {
        Tensor<T>& dx = xn->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < c; ++j) dx(i, j) += self.grad(i, j) * vn->value()[j];
        }
      }
      if (vn->requires_grad) {
        Tensor<T>& dv = vn->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < c; ++j) dv[j] += self.grad(i, j) * xn->value()(i, j);
        }
      }
    };
  }
  return {&n};
}

// ---- linear algebra ---------------------------------------------------------

template <typename T>
Var<T> matmul2(Graph<T>& g, Var<T> a, Var<T> b, bool ta = false, bool tb = false) {
  Tensor<T> y = matmul(a.value(), b.value(), ta, tb);
  Node<T>& n = g.make(std::move(y), {a.node, b.node});
  if (n.requires_grad) {
    Node<T>*an = a.node, *bn = b.node;
    n.backward = [an, bn, ta, tb](Node<T>& self) {
      const Tensor<T>& dy = self.grad;
      if (an->requires_grad) {
        Tensor<T>& da = an->ensure_grad();
        if (!ta && !tb) {
          matmul_raw(dy.data(), bn->value().data(), da.data(), da.dim(0), dy.dim(1), da.dim(1), false, true, true);
        } else if (!ta && tb) {
          matmul_raw(dy.data(), bn->value().data(), da.data(), da.dim(0), dy.dim(1), da.dim(1), false, false, true);
        } else if (ta && !tb) {
          // a stored [K,M]; da = b . dy^T
          matmul_raw(bn->value().data(), dy.data(), da.data(), da.dim(0), dy.dim(1), da.dim(1), false, true, true);
        } else {
          // da = b^T . dy^T
          matmul_raw(bn->value().data(), dy.data(), da.data(), da.dim(0), dy.dim(1), da.dim(1), true, true, true);
        }
      }
      if (bn->requires_grad) {
        Tensor<T>& db = bn->ensure_grad();
        if (!ta && !tb) {
          matmul_raw(an->value().data(), dy.data(), db.data(), db.dim(0), dy.dim(0), db.dim(1), true, false, true);
        } else if (!ta && tb) {
          // b stored [N,K]; db = dy^T . a
          matmul_raw(dy.data(), an->value().data(), db.data(), db.dim(0), dy.dim(0), db.dim(1), true, false, true);
        } else if (ta && !tb) {
          // a stored [K,M]; db = a . dy
          matmul_raw(an->value().data(), dy.data(), db.data(), db.dim(0), dy.dim(0), db.dim(1), false, false, true);
        } else {
          // db = dy^T . a^T
          matmul_raw(dy.data(), an->value().data(), db.data(), db.dim(0), dy.dim(0), db.dim(1), true, true, true);
        }
      }
    };
  }
  return {&n};
}

// y = x . w (+ b). Weight layout [in, out].
template <typename T>
Var<T> linear(Graph<T>& g, Var<T> x, Var<T> w, Var<T> b = {}) {
  Tensor<T> y = matmul(x.value(), w.value());
  const int64_t m = y.dim(0), nout = y.dim(1);
  if (b) {
    detail::require<T>(b.value().rank() == 1 && b.value().dim(0) == nout,
                       "linear: bias width mismatch");
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < nout; ++j) y(i, j) += b.value()[j];
    }
  }
  Node<T>& n = g.make(std::move(y), {x.node, w.node, b.node});
  if (n.requires_grad) {
    Node<T>*xn = x.node, *wn = w.node, *bn = b.node;
    n.backward = [xn, wn, bn, m, nout](Node<T>& self) {
      const Tensor<T>& dy = self.grad;
      if (xn->requires_grad) {
        Tensor<T>& dx = xn->ensure_grad();
        matmul_raw(dy.data(), wn->value().data(), dx.data(), m, nout, dx.dim(1), false, true, true);
      }
      if (wn->requires_grad) {
        Tensor<T>& dw = wn->ensure_grad();
        matmul_raw(xn->value().data(), dy.data(), dw.data(), dw.dim(0), m, nout, true, false, true);
      }
      if (bn && bn->requires_grad) {
        Tensor<T>& db = bn->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < nout; ++j) db[j] += dy(i, j);
        }
      }
    };
  }
  return {&n};
}

// Batched matmul over leading dim: [B,M,K] x [B,K,N] -> [B,M,N].
template <typename T>
Var<T> bmm(Graph<T>& g, Var<T> a, Var<T> b, bool ta = false, bool tb = false) {
  const auto& A = a.value();
  const auto& B = b.value();
  detail::require<T>(A.rank() == 3 && B.rank() == 3 && A.dim(0) == B.dim(0),
                     "bmm: expects [B,M,K] x [B,K,N]");
  const int64_t nb = A.dim(0);
  const int64_t m = ta ? A.dim(2) : A.dim(1);
  const int64_t k = ta ? A.dim(1) : A.dim(2);
  const int64_t kb = tb ? B.dim(2) : B.dim(1);
  const int64_t nn = tb ? B.dim(1) : B.dim(2);
  detail::require<T>(k == kb, "bmm: inner dims disagree");
  Tensor<T> y({nb, m, nn});
  const int64_t sa = A.dim(1) * A.dim(2), sb = B.dim(1) * B.dim(2), sy = m * nn;
  for (int64_t i = 0; i < nb; ++i) {
    matmul_raw(A.data() + i * sa, B.data() + i * sb, y.data() + i * sy, m, k, nn, ta, tb, false);
  }
  Node<T>& n = g.make(std::move(y), {a.node, b.node});
  if (n.requires_grad) {
    Node<T>*an = a.node, *bn = b.node;
    n.backward = [an, bn, ta, tb, nb, m, k, nn, sa, sb, sy](Node<T>& self) {
      for (int64_t i = 0; i < nb; ++i) {
        const T* dy = self.grad.data() + i * sy;
        const T* av = an->value().data() + i * sa;
        const T* bv = bn->value().data() + i * sb;
        if (an->requires_grad) {
          T* da = an->ensure_grad().data() + i * sa;
          if (!ta && !tb) matmul_raw(dy, bv, da, m, nn, k, false, true, true);
          else if (!ta && tb) matmul_raw(dy, bv, da, m, nn, k, false, false, true);
          else if (ta && !tb) matmul_raw(bv, dy, da, k, nn, m, false, true, true);
          else matmul_raw(bv, dy, da, k, nn, m, true, true, true);
        }
        if (bn->requires_grad) {
          T* db = bn->ensure_grad().data() + i * sb;
          if (!ta && !tb) matmul_raw(av, dy, db, k, m, nn, true, false, true);
          else if (!ta && tb) matmul_raw(dy, av, db, nn, m, k, true, false, true);
          else if (ta && !tb) matmul_raw(av, dy, db, k, m, nn, false, false, true);
          else matmul_raw(dy, av, db, nn, m, k, true, true, true);
        }
      }
    };
  }
  return {&n};
}

// ---- activations ------------------------------------------------------------

template <typename T>
Var<T> relu(Graph<T>& g, Var<T> x) {
  Tensor<T> y = x.value();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = y[i] > T(0) ? y[i] : T(0);
  Node<T>& n = g.make(std::move(y), {x.node});
  if (n.requires_grad) {
    Node<T>* xn = x.node;
    n.backward = [xn](Node<T>& self) {
      if (!xn->requires_grad) return;
      Tensor<T>& dx = xn->ensure_grad();
      for (int64_t i = 0; i < dx.numel(); ++i) {
        if (xn->value()[i] > T(0)) dx[i] += self.grad[i];
      }
    };
  }
  return {&n};
}

template <typename T>
Var<T> gelu(Graph<T>& g, Var<T> x) {
  Tensor<T> y = x.value();
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double v = static_cast<double>(y[i]);
    y[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))));
  }
  Node<T>& n = g.make(std::move(y), {x.node});
  if (n.requires_grad) {
    Node<T>* xn = x.node;
    n.backward = [xn](Node<T>& self) {
      if (!xn->requires_grad) return;
      Tensor<T>& dx = xn->ensure_grad();
      constexpr double inv_sqrt_2pi = 0.3989422804014327;
      for (int64_t i = 0; i < dx.numel(); ++i) {
        const double v = static_cast<double>(xn->value()[i]);
        const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        dx[i] += self.grad[i] * static_cast<T>(cdf + v * pdf);
      }
    };
  }
  return {&n};
}

template <typename T>
Var<T> sigmoid(Graph<T>& g, Var<T> x) {
  Tensor<T> y = x.value();
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double v = static_cast<double>(y[i]);
    y[i] = static_cast<T>(1.0 / (1.0 + std::exp(-v)));
  }
  Node<T>& n = g.make(std::move(y), {x.node});
  if (n.requires_grad) {
    Node<T>* xn = x.node;
    n.backward = [xn](Node<T>& self) {
      if (!xn->requires_grad) return;
      Tensor<T>& dx = xn->ensure_grad();
      for (int64_t i = 0; i < dx.numel(); ++i) {
        const T s = self.owned[i];
        dx[i] += self.grad[i] * s * (T(1) - s);
      }
    };
  }
  return {&n};
}

// ---- normalization / softmax -------------------------------------------------

// LayerNorm over the last dim of [M,N] with learnable gamma/beta.
template <typename T>
Var<T> layernorm(Graph<T>& g, Var<T> x, Var<T> gamma, Var<T> beta,
                 T eps = T(1e-5)) {
  const auto& X = x.value();
  detail::require<T>(X.rank() == 2, "layernorm: expects [M,N]");
  const int64_t m = X.dim(0), c = X.dim(1);
  detail::require<T>(gamma.value().numel() == c && beta.value().numel() == c,
                     "layernorm: gamma/beta width mismatch");
  Tensor<T> y({m, c});
  Tensor<T> xhat({m, c});
  std::vector<T> inv_std(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    T mu = 0;
    for (int64_t j = 0; j < c; ++j) mu += X(i, j);
    mu /= static_cast<T>(c);
    T var = 0;
    for (int64_t j = 0; j < c; ++j) {
      const T d = X(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<T>(c);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = inv;
    for (int64_t j = 0; j < c; ++j) {
      const T xh = (X(i, j) - mu) * inv;
      xhat(i, j) = xh;
      y(i, j) = gamma.value()[j] * xh + beta.value()[j];
    }
  }
  Node<T>& n = g.make(std::move(y), {x.node, gamma.node, beta.node});
  if (n.requires_grad) {
    Node<T>*xn = x.node, *gn = gamma.node, *bn = beta.node;
    n.backward = [xn, gn, bn, m, c, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)](Node<T>& self) {
      const Tensor<T>& dy = self.grad;
      if (gn->requires_grad) {
        Tensor<T>& dg = gn->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < c; ++j) dg[j] += dy(i, j) * xhat(i, j);
        }
      }
      if (bn->requires_grad) {
        Tensor<T>& db = bn->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < c; ++j) db[j] += dy(i, j);
        }
      }
      if (xn->requires_grad) {
        Tensor<T>& dx = xn->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
          T mean_dxhat = 0, mean_dxhat_xhat = 0;
          for (int64_t j = 0; j < c; ++j) {
            const T dxh = dy(i, j) * gn->value()[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat(i, j);
          }
          mean_dxhat /= static_cast<T>(c);
          mean_dxhat_xhat /= static_cast<T>(c);
          const T inv = inv_std[static_cast<size_t>(i)];
          for (int64_t j = 0; j < c; ++j) {
            const T dxh = dy(i, j) * gn->value()[j];
            dx(i, j) += inv * (dxh - mean_dxhat - xhat(i, j) * mean_dxhat_xhat);
          }
        }
      }
    };
  }
  return {&n};
}

// Row-wise softmax on [M,N] with max subtraction.
template <typename T>
Var<T> softmax_rows(Graph<T>& g, Var<T> x) {
  const auto& X = x.value();
  detail::require<T>(X.rank() == 2, "softmax_rows: expects [M,N]");
  const int64_t m = X.dim(0), c = X.dim(1);
  Tensor<T> y({m, c});
  for (int64_t i = 0; i < m; ++i) {
    T mx = X(i, 0);
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, X(i, j));
    T sum = 0;
    for (int64_t j = 0; j < c; ++j) {
      const T e = std::exp(X(i, j) - mx);
      y(i, j) = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j < c; ++j) y(i, j) *= inv;
  }
  Node<T>& n = g.make(std::move(y), {x.node});
  if (n.requires_grad) {
    Node<T>* xn = x.node;
    n.backward = [xn, m, c](Node<T>& self) {
      if (!xn->requires_grad) return;
      Tensor<T>& dx = xn->ensure_grad();
      for (int64_t i = 0; i < m; ++i) {
        T dot = 0;
        for (int64_t j = 0; j < c; ++j) dot += self.grad(i, j) * self.owned(i, j);
        for (int64_t j = 0; j < c; ++j) {
          dx(i, j) += self.owned(i, j) * (self.grad(i, j) - dot);
        }
      }
    };
  }
  return {&n};
}

// Global average pool over rows: [M,N] -> [N].
template <typename T>
Var<T> gap_rows(Graph<T>& g, Var<T> x) {
  const auto& X = x.value();
  detail::require<T>(X.rank() == 2, "gap_rows: expects [M,N]");
  const int64_t m = X.dim(0), c = X.dim(1);
  Tensor<T> y({c});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < c; ++j) y[j] += X(i, j);
  }
  scale_inplace(y, T(1) / static_cast<T>(m));
  Node<T>& n = g.make(std::move(y), {x.node});
  if (n.requires_grad) {
    Node<T>* xn = x.node;
    n.backward = [xn, m, c](Node<T>& self) {
      if (!xn->requires_grad) return;
      Tensor<T>& dx = xn->ensure_grad();
      const T inv = T(1) / static_cast<T>(m);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < c; ++j) dx(i, j) += self.grad[j] * inv;
      }
    };
  }
  return {&n};
}

// ---- layout -----------------------------------------------------------------

template <typename T>
Var<T> reshape(Graph<T>& g, Var<T> x, Shape shape) {
  detail::require<T>(shape_numel(shape) == x.value().numel(),
                     "reshape: element count mismatch");
  Tensor<T> y(std::move(shape), x.value().vec());
  Node<T>& n = g.make(std::move(y), {x.node});
  if (n.requires_grad) {
    Node<T>* xn = x.node;
    n.backward = [xn](Node<T>& self) {
      if (!xn->requires_grad) return;
      Tensor<T>& dx = xn->ensure_grad();
      for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += self.grad[i];
    };
  }
  return {&n};
}

namespace detail {

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int64_t d = static_cast<int64_t>(s.size()) - 1; d >= 0; --d) {
    st[static_cast<size_t>(d)] = acc;
    acc *= s[static_cast<size_t>(d)];
  }
  return st;
}

// Map from output flat index to input flat index for a permutation.
inline std::vector<int64_t> permute_index_map(const Shape& in_shape,
                                              const std::vector<int64_t>& dims) {
  Shape out_shape(dims.size());
  for (size_t d = 0; d < dims.size(); ++d) {
    out_shape[d] = in_shape[static_cast<size_t>(dims[d])];
  }
  const auto in_st = row_major_strides(in_shape);
  const auto out_st = row_major_strides(out_shape);
  const int64_t n = shape_numel(out_shape);
  std::vector<int64_t> map(static_cast<size_t>(n));
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t rem = flat, in_flat = 0;
    for (size_t d = 0; d < dims.size(); ++d) {
      const int64_t idx = rem / out_st[d];
      rem -= idx * out_st[d];
      in_flat += idx * in_st[static_cast<size_t>(dims[d])];
    }
    map[static_cast<size_t>(flat)] = in_flat;
  }
  return map;
}

}  // namespace detail

template <typename T>
Var<T> permute(Graph<T>& g, Var<T> x, std::vector<int64_t> dims) {
  const auto& X = x.value();
  detail::require<T>(static_cast<int64_t>(dims.size()) == X.rank(),
                     "permute: dims rank mismatch");
  Shape out_shape(dims.size());
  for (size_t d = 0; d < dims.size(); ++d) {
    out_shape[d] = X.dim(dims[d]);
  }
  auto map = detail::permute_index_map(X.shape(), dims);
  Tensor<T> y(out_shape);
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = X[map[static_cast<size_t>(i)]];
  Node<T>& n = g.make(std::move(y), {x.node});
  if (n.requires_grad) {
    Node<T>* xn = x.node;
    n.backward = [xn, map = std::move(map)](Node<T>& self) {
      if (!xn->requires_grad) return;
      Tensor<T>& dx = xn->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i) {
        dx[map[static_cast<size_t>(i)]] += self.grad[i];
      }
    };
  }
  return {&n};
}

template <typename T>
Var<T> slice_rows(Graph<T>& g, Var<T> x, int64_t start, int64_t count) {
  const auto& X = x.value();
  detail::require<T>(X.rank() == 2 && start >= 0 && count >= 1 &&
                         start + count <= X.dim(0),
                     "slice_rows: range out of bounds");
  const int64_t c = X.dim(1);
  Tensor<T> y({count, c});
  std::copy(X.data() + start * c, X.data() + (start + count) * c, y.data());
  Node<T>& n = g.make(std::move(y), {x.node});
  if (n.requires_grad) {
    Node<T>* xn = x.node;
    n.backward = [xn, start, count, c](Node<T>& self) {
      if (!xn->requires_grad) return;
      Tensor<T>& dx = xn->ensure_grad();
      for (int64_t i = 0; i < count * c; ++i) dx[start * c + i] += self.grad[i];
    };
  }
  return {&n};
}

template <typename T>
Var<T> concat_rows(Graph<T>& g, Var<T> a, Var<T> b) {
  const auto& A = a.value();
  const auto& B = b.value();
  detail::require<T>(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(1),
                     "concat_rows: column mismatch");
  const int64_t ma = A.dim(0), mb = B.dim(0), c = A.dim(1);
  Tensor<T> y({ma + mb, c});
  std::copy(A.data(), A.data() + ma * c, y.data());
  std::copy(B.data(), B.data() + mb * c, y.data() + ma * c);
  Node<T>& n = g.make(std::move(y), {a.node, b.node});
  if (n.requires_grad) {
    Node<T>*an = a.node, *bn = b.node;
    n.backward = [an, bn, ma, mb, c](Node<T>& self) {
      if (an->requires_grad) {
        Tensor<T>& da = an->ensure_grad();
        for (int64_t i = 0; i < ma * c; ++i) da[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        Tensor<T>& db = bn->ensure_grad();
        for (int64_t i = 0; i < mb * c; ++i) db[i] += self.grad[ma * c + i];
      }
    };
  }
  return {&n};
}

// ---- convolution support ------------------------------------------------------

// Unfold [H,W,C] into [oH*oW, k*k*C] patches (kernel k, stride s, zero pad p).
// Column order within a patch: (ki, kj, c) row-major.
template <typename T>
Var<T> im2col(Graph<T>& g, Var<T> x, int64_t k, int64_t s, int64_t p) {
  const auto& X = x.value();
  detail::require<T>(X.rank() == 3, "im2col: expects [H,W,C]");
  const int64_t h = X.dim(0), w = X.dim(1), c = X.dim(2);
  detail::require<T>(h + 2 * p >= k && w + 2 * p >= k, "im2col: kernel larger than padded input");
  const int64_t oh = (h + 2 * p - k) / s + 1;
  const int64_t ow = (w + 2 * p - k) / s + 1;
  Tensor<T> y({oh * ow, k * k * c});
  for (int64_t oi = 0; oi < oh; ++oi) {
    for (int64_t oj = 0; oj < ow; ++oj) {
      T* row = y.data() + (oi * ow + oj) * k * k * c;
      for (int64_t ki = 0; ki < k; ++ki) {
        const int64_t ii = oi * s - p + ki;
        for (int64_t kj = 0; kj < k; ++kj) {
          const int64_t jj = oj * s - p + kj;
          T* dst = row + (ki * k + kj) * c;
          if (ii >= 0 && ii < h && jj >= 0 && jj < w) {
            const T* src = X.data() + (ii * w + jj) * c;
            std::copy(src, src + c, dst);
          }
        }
      }
    }
  }
  Node<T>& n = g.make(std::move(y), {x.node});
  if (n.requires_grad) {
    Node<T>* xn = x.node;
    n.backward = [xn, h, w, c, k, s, p, oh, ow](Node<T>& self) {
      if (!xn->requires_grad) return;
      Tensor<T>& dx = xn->ensure_grad();
      for (int64_t oi = 0; oi < oh; ++oi) {
        for (int64_t oj = 0; oj < ow; ++oj) {
          const T* row = self.grad.data() + (oi * ow + oj) * k * k * c;
          for (int64_t ki = 0; ki < k; ++ki) {
            const int64_t ii = oi * s - p + ki;
            if (ii < 0 || ii >= h) continue;
            for (int64_t kj = 0; kj < k; ++kj) {
              const int64_t jj = oj * s - p + kj;
              if (jj < 0 || jj >= w) continue;
              const T* src = row + (ki * k + kj) * c;
              T* dst = dx.data() + (ii * w + jj) * c;
              for (int64_t cc = 0; cc < c; ++cc) dst[cc] += src[cc];
            }
          }
        }
      }
    };
  }
  return {&n};
}

// ---- attention support --------------------------------------------------------

// Decomposed per-axis relative position bias (tables shared across heads):
// bias[h,(r1,c1),(r2,c2)] = q[h,(r1,c1)].rh[r1-r2+S-1] + q[h,(r1,c1)].rw[c1-c2+S-1]
template <typename T>
Var<T> rel_pos_bias(Graph<T>& g, Var<T> q, Var<T> rh, Var<T> rw, int64_t side) {
  const auto& Q = q.value();
  detail::require<T>(Q.rank() == 3 && Q.dim(1) == side * side,
                     "rel_pos_bias: q must be [nh, S*S, dh]");
  const int64_t nh = Q.dim(0), t = Q.dim(1), dh = Q.dim(2);
  detail::require<T>(rh.value().rank() == 2 && rh.value().dim(0) == 2 * side - 1 &&
                         rh.value().dim(1) == dh,
                     "rel_pos_bias: rh must be [2S-1, dh]");
  detail::require<T>(rw.value().same_shape(rh.value()), "rel_pos_bias: rw/rh shape mismatch");
  Tensor<T> bias({nh, t, t});
  // qdot_h[h,i,r2], qdot_w[h,i,c2]
  Tensor<T> qdh({nh, t, side});
  Tensor<T> qdw({nh, t, side});
  for (int64_t hh = 0; hh < nh; ++hh) {
    for (int64_t i = 0; i < t; ++i) {
      const int64_t r1 = i / side, c1 = i % side;
      const T* qp = Q.data() + (hh * t + i) * dh;
      for (int64_t r2 = 0; r2 < side; ++r2) {
        const T* rp = rh.value().data() + (r1 - r2 + side - 1) * dh;
        T dot = 0;
        for (int64_t d = 0; d < dh; ++d) dot += qp[d] * rp[d];
        qdh(hh, i, r2) = dot;
      }
      for (int64_t c2 = 0; c2 < side; ++c2) {
        const T* rp = rw.value().data() + (c1 - c2 + side - 1) * dh;
        T dot = 0;
        for (int64_t d = 0; d < dh; ++d) dot += qp[d] * rp[d];
        qdw(hh, i, c2) = dot;
      }
      T* bp = bias.data() + (hh * t + i) * t;
      for (int64_t r2 = 0; r2 < side; ++r2) {
        for (int64_t c2 = 0; c2 < side; ++c2) {
          bp[r2 * side + c2] = qdh(hh, i, r2) + qdw(hh, i, c2);
        }
      }
    }
  }
  Node<T>& n = g.make(std::move(bias), {q.node, rh.node, rw.node});
  if (n.requires_grad) {
    Node<T>*qn = q.node, *rhn = rh.node, *rwn = rw.node;
    n.backward = [qn, rhn, rwn, nh, t, dh, side](Node<T>& self) {
      for (int64_t hh = 0; hh < nh; ++hh) {
        for (int64_t i = 0; i < t; ++i) {
          const int64_t r1 = i / side, c1 = i % side;
          const T* db = self.grad.data() + (hh * t + i) * t;
          const T* qp = qn->value().data() + (hh * t + i) * dh;
          for (int64_t r2 = 0; r2 < side; ++r2) {
            T da = 0;
            for (int64_t c2 = 0; c2 < side; ++c2) da += db[r2 * side + c2];
            const int64_t row = r1 - r2 + side - 1;
            if (qn->requires_grad) {
              T* dq = qn->ensure_grad().data() + (hh * t + i) * dh;
              const T* rp = rhn->value().data() + row * dh;
              for (int64_t d = 0; d < dh; ++d) dq[d] += da * rp[d];
            }
            if (rhn->requires_grad) {
              T* dr = rhn->ensure_grad().data() + row * dh;
              for (int64_t d = 0; d < dh; ++d) dr[d] += da * qp[d];
            }
          }
          for (int64_t c2 = 0; c2 < side; ++c2) {
            T dbw = 0;
            for (int64_t r2 = 0; r2 < side; ++r2) dbw += db[r2 * side + c2];
            const int64_t row = c1 - c2 + side - 1;
            if (qn->requires_grad) {
              T* dq = qn->ensure_grad().data() + (hh * t + i) * dh;
              const T* rp = rwn->value().data() + row * dh;
              for (int64_t d = 0; d < dh; ++d) dq[d] += dbw * rp[d];
            }
            if (rwn->requires_grad) {
              T* dr = rwn->ensure_grad().data() + row * dh;
              for (int64_t d = 0; d < dh; ++d) dr[d] += dbw * qp[d];
            }
          }
        }
      }
    };
  }
  return {&n};
}

// ---- resizing ---------------------------------------------------------------

// Differentiable bilinear resize of [H,W] (half-pixel convention, edge clamp).
template <typename T>
Var<T> bilinear_resize(Graph<T>& g, Var<T> x, int64_t oh, int64_t ow) {
  const auto& X = x.value();
  detail::require<T>(X.rank() == 2 && oh >= 1 && ow >= 1,
                     "bilinear_resize: expects [H,W] and positive target");
  const int64_t h = X.dim(0), w = X.dim(1);
  Tensor<T> y = resize_bilinear_2d(X, oh, ow);
  Node<T>& n = g.make(std::move(y), {x.node});
  if (n.requires_grad) {
    Node<T>* xn = x.node;
    n.backward = [xn, h, w, oh, ow](Node<T>& self) {
      if (!xn->requires_grad) return;
      Tensor<T>& dx = xn->ensure_grad();
      if (h == oh && w == ow) {
        add_inplace(dx, self.grad);
        return;
      }
      const auto ys = linear_samples_half_pixel(h, oh);
      const auto xs = linear_samples_half_pixel(w, ow);
      for (int64_t i = 0; i < oh; ++i) {
        const auto& sy = ys[static_cast<size_t>(i)];
        const T fy = static_cast<T>(sy.frac);
        for (int64_t j = 0; j < ow; ++j) {
          const auto& sx = xs[static_cast<size_t>(j)];
          const T fx = static_cast<T>(sx.frac);
          const T d = self.grad(i, j);
          dx(sy.i0, sx.i0) += d * (T(1) - fy) * (T(1) - fx);
          dx(sy.i0, sx.i1) += d * (T(1) - fy) * fx;
          dx(sy.i1, sx.i0) += d * fy * (T(1) - fx);
          dx(sy.i1, sx.i1) += d * fy * fx;
        }
      }
    };
  }
  return {&n};
}

// Top-left crop of [H,W] to [h0,w0].
template <typename T>
Var<T> crop2d(Graph<T>& g, Var<T> x, int64_t h0, int64_t w0) {
  const auto& X = x.value();
  detail::require<T>(X.rank() == 2 && h0 >= 1 && w0 >= 1 && h0 <= X.dim(0) &&
                         w0 <= X.dim(1),
                     "crop2d: crop larger than input");
  const int64_t w = X.dim(1);
  Tensor<T> y({h0, w0});
  for (int64_t i = 0; i < h0; ++i) {
    std::copy(X.data() + i * w, X.data() + i * w + w0, y.data() + i * w0);
  }
  Node<T>& n = g.make(std::move(y), {x.node});
  if (n.requires_grad) {
    Node<T>* xn = x.node;
    n.backward = [xn, h0, w0, w](Node<T>& self) {
      if (!xn->requires_grad) return;
      Tensor<T>& dx = xn->ensure_grad();
      for (int64_t i = 0; i < h0; ++i) {
        for (int64_t j = 0; j < w0; ++j) dx[i * w + j] += self.grad(i, j);
      }
    };
  }
  return {&n};
}

// ---- reductions / losses ------------------------------------------------------

// Weighted sum against a fixed tensor; scalar output.
template <typename T>
Var<T> dot_const(Graph<T>& g, Var<T> x, Tensor<T> wts) {
  detail::require<T>(x.value().numel() == wts.numel(), "dot_const: size mismatch");
  T acc = 0;
  for (int64_t i = 0; i < wts.numel(); ++i) acc += x.value()[i] * wts[i];
  Node<T>& n = g.make(Tensor<T>({1}, {acc}), {x.node});
  if (n.requires_grad) {
    Node<T>* xn = x.node;
    n.backward = [xn, wts = std::move(wts)](Node<T>& self) {
      if (!xn->requires_grad) return;
      Tensor<T>& dx = xn->ensure_grad();
      for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += self.grad[0] * wts[i];
    };
  }
  return {&n};
}

namespace detail {

template <typename T>
void require_binary_mask(const Tensor<T>& gt, const char* who) {
  for (int64_t i = 0; i < gt.numel(); ++i) {
    if (gt[i] != T(0) && gt[i] != T(1)) {
      throw ValueError(std::string(who) + ": ground truth is not binary");
    }
  }
}

}  // namespace detail

// Numerically stable logit-domain binary cross-entropy, mean over pixels.
template <typename T>
Var<T> bce_with_logits_mean(Graph<T>& g, Var<T> logits, Tensor<T> gt) {
  detail::require<T>(logits.value().numel() == gt.numel() &&
                         logits.value().shape() == gt.shape(),
                     "bce: shape mismatch between logits and ground truth");
  detail::require_binary_mask(gt, "bce");
  const int64_t n_px = gt.numel();
  T acc = 0;
  for (int64_t i = 0; i < n_px; ++i) {
    const T z = logits.value()[i];
    const T y = gt[i];
    acc += std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  acc /= static_cast<T>(n_px);
  Node<T>& n = g.make(Tensor<T>({1}, {acc}), {logits.node});
  if (n.requires_grad) {
    Node<T>* ln = logits.node;
    n.backward = [ln, gt = std::move(gt), n_px](Node<T>& self) {
      if (!ln->requires_grad) return;
      Tensor<T>& dz = ln->ensure_grad();
      const T s = self.grad[0] / static_cast<T>(n_px);
      for (int64_t i = 0; i < n_px; ++i) {
        const double z = static_cast<double>(ln->value()[i]);
        const T sig = static_cast<T>(1.0 / (1.0 + std::exp(-z)));
        dz[i] += s * (sig - gt[i]);
      }
    };
  }
  return {&n};
}

// Soft IoU loss 1 - (sum(p*g)+eps)/(sum(p)+sum(g)-sum(p*g)+eps) on
// probabilities in [0,1] against a binary mask.
template <typename T>
Var<T> soft_iou_loss(Graph<T>& g, Var<T> probs, Tensor<T> gt, T eps = T(1e-6)) {
  detail::require<T>(probs.value().numel() == gt.numel() &&
                         probs.value().shape() == gt.shape(),
                     "iou: shape mismatch between probabilities and ground truth");
  detail::require_binary_mask(gt, "iou");
  const int64_t n_px = gt.numel();
  for (int64_t i = 0; i < n_px; ++i) {
    const T p = probs.value()[i];
    if (p < T(0) || p > T(1)) {
      throw ValueError("iou: prediction outside [0,1]");
    }
  }
  T inter = 0, psum = 0, gsum = 0;
  for (int64_t i = 0; i < n_px; ++i) {
    inter += probs.value()[i] * gt[i];
    psum += probs.value()[i];
    gsum += gt[i];
  }
  const T uni = psum + gsum - inter;
  const T loss = T(1) - (inter + eps) / (uni + eps);
  Node<T>& n = g.make(Tensor<T>({1}, {loss}), {probs.node});
  if (n.requires_grad) {
    Node<T>* pn = probs.node;
    n.backward = [pn, gt = std::move(gt), inter, uni, eps, n_px](Node<T>& self) {
      if (!pn->requires_grad) return;
      Tensor<T>& dp = pn->ensure_grad();
      const T d = uni + eps;
      const T num = inter + eps;
      const T s = self.grad[0];
      for (int64_t i = 0; i < n_px; ++i) {
        const T gk = gt[i];
        dp[i] += s * (-(gk * d - num * (T(1) - gk)) / (d * d));
      }
    };
  }
  return {&n};
}

template <typename T>
Var<T> sum_vars(Graph<T>& g, const std::vector<Var<T>>& vs) {
  detail::require<T>(!vs.empty(), "sum_vars: empty input");
  Var<T> acc = vs[0];
  for (size_t i = 1; i < vs.size(); ++i) acc = add(g, acc, vs[i]);
  return acc;
}

}  // namespace avseg
