#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "dynedit/tensor.hpp"

namespace dynedit {

namespace detail {

inline Shape row_strides(const Shape& s) {
  Shape st(s.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (size_t i = 0; i < n; ++i) {
    std::int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    std::int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    DYN_CHECK(da == db || da == 1 || db == 1,
              "shapes not broadcastable: " << shape_str(a) << " vs " << shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` viewed as shape `out` (0 on broadcast axes).
inline Shape broadcast_strides(const Shape& s, const Shape& out) {
  Shape st = row_strides(s);
  Shape r(out.size(), 0);
  size_t off = out.size() - s.size();
  for (size_t i = 0; i < s.size(); ++i)
    r[off + i] = (s[i] == 1 && out[off + i] != 1) ? 0 : st[i];
  return r;
}

template <class S, class F>
std::vector<S> elementwise_binary(const Tensor<S>& a, const Tensor<S>& b, const Shape& out, F f) {
  const auto& av = a.data();
  const auto& bv = b.data();
  std::int64_t n = shape_numel(out);
  std::vector<S> r(static_cast<size_t>(n));
  if (a.shape() == b.shape()) {
    for (std::int64_t i = 0; i < n; ++i) r[i] = f(av[i], bv[i]);
    return r;
  }
  if (b.numel() == 1) {
    S bs = bv[0];
    for (std::int64_t i = 0; i < n; ++i) r[i] = f(av[i % av.size()], bs);
    if (a.numel() == n) return r;
  }
  Shape sa = broadcast_strides(a.shape(), out);
  Shape sb = broadcast_strides(b.shape(), out);
  Shape so = row_strides(out);
  size_t nd = out.size();
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t rem = i, oa = 0, ob = 0;
    for (size_t d = 0; d < nd; ++d) {
      std::int64_t idx = rem / so[d];
      rem -= idx * so[d];
      oa += idx * sa[d];
      ob += idx * sb[d];
    }
    r[i] = f(av[static_cast<size_t>(oa)], bv[static_cast<size_t>(ob)]);
  }
  return r;
}

}  // namespace detail

template <class S>
Tensor<S> reduce_to(const Tensor<S>& g, const Shape& target);

// ---- elementwise arithmetic -------------------------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  Shape out = detail::broadcast_shape(a.shape(), b.shape());
  auto v = detail::elementwise_binary(a, b, out, [](S x, S y) { return x + y; });
  return make_op<S>(out, std::move(v), {a, b},
                    [as = a.shape(), bs = b.shape()](const Tensor<S>& g, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{reduce_to(g, as), reduce_to(g, bs)};
                    });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  Shape out = detail::broadcast_shape(a.shape(), b.shape());
  auto v = detail::elementwise_binary(a, b, out, [](S x, S y) { return x - y; });
  return make_op<S>(out, std::move(v), {a, b},
                    [as = a.shape(), bs = b.shape()](const Tensor<S>& g, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{reduce_to(g, as), reduce_to(neg(g), bs)};
                    });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  Shape out = detail::broadcast_shape(a.shape(), b.shape());
  auto v = detail::elementwise_binary(a, b, out, [](S x, S y) { return x * y; });
  return make_op<S>(out, std::move(v), {a, b}, [a, b](const Tensor<S>& g, const Tensor<S>&) {
    return std::vector<Tensor<S>>{reduce_to(mul(g, b), a.shape()), reduce_to(mul(g, a), b.shape())};
  });
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  std::vector<S> v(a.data());
  for (auto& x : v) x *= c;
  return make_op<S>(a.shape(), std::move(v), {a}, [c](const Tensor<S>& g, const Tensor<S>&) {
    return std::vector<Tensor<S>>{scale(g, c)};
  });
}

template <class S>
Tensor<S> neg(const Tensor<S>& a) {
  return scale(a, S(-1));
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  std::vector<S> v(a.data());
  for (auto& x : v) x += c;
  return make_op<S>(a.shape(), std::move(v), {a},
                    [](const Tensor<S>& g, const Tensor<S>&) { return std::vector<Tensor<S>>{g}; });
}

// ---- unary functions --------------------------------------------------------

template <class S>
Tensor<S> pow_scalar(const Tensor<S>& a, S e) {
  std::vector<S> v(a.data());
  long ie = std::lround(static_cast<double>(e));
  bool integral = std::abs(static_cast<double>(e) - static_cast<double>(ie)) < 1e-12 &&
                  ie >= -4 && ie <= 8;
  if (integral) {
    for (auto& x : v) {
      S base = x, r = S(1);
      long k = ie < 0 ? -ie : ie;
      for (long i = 0; i < k; ++i) r *= base;
      x = ie < 0 ? S(1) / r : r;
    }
  } else {
    for (auto& x : v) x = std::pow(x, e);
  }
  return make_op<S>(a.shape(), std::move(v), {a}, [a, e](const Tensor<S>& g, const Tensor<S>&) {
    return std::vector<Tensor<S>>{scale(mul(g, pow_scalar(a, e - S(1))), e)};
  });
}

template <class S>
Tensor<S> exp(const Tensor<S>& a) {
  std::vector<S> v(a.data());
  for (auto& x : v) x = std::exp(x);
  return make_op<S>(a.shape(), std::move(v), {a}, [](const Tensor<S>& g, const Tensor<S>& self) {
    return std::vector<Tensor<S>>{mul(g, self)};
  });
}

template <class S>
Tensor<S> log(const Tensor<S>& a) {
  std::vector<S> v(a.data());
  for (auto& x : v) x = std::log(x);
  return make_op<S>(a.shape(), std::move(v), {a}, [a](const Tensor<S>& g, const Tensor<S>&) {
    return std::vector<Tensor<S>>{mul(g, pow_scalar(a, S(-1)))};
  });
}

template <class S>
Tensor<S> sqrt(const Tensor<S>& a) {
  std::vector<S> v(a.data());
  for (auto& x : v) x = std::sqrt(x);
  return make_op<S>(a.shape(), std::move(v), {a}, [](const Tensor<S>& g, const Tensor<S>& self) {
    return std::vector<Tensor<S>>{scale(mul(g, pow_scalar(self, S(-1))), S(0.5))};
  });
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  std::vector<S> v(a.data());
  for (auto& x : v) {
    if (x >= 0) {
      x = S(1) / (S(1) + std::exp(-x));
    } else {
      S e = std::exp(x);
      x = e / (S(1) + e);
    }
  }
  return make_op<S>(a.shape(), std::move(v), {a}, [](const Tensor<S>& g, const Tensor<S>& self) {
    return std::vector<Tensor<S>>{mul(g, sub(self, mul(self, self)))};
  });
}

template <class S>
Tensor<S> tanh(const Tensor<S>& a) {
  std::vector<S> v(a.data());
  for (auto& x : v) x = std::tanh(x);
  return make_op<S>(a.shape(), std::move(v), {a}, [](const Tensor<S>& g, const Tensor<S>& self) {
    return std::vector<Tensor<S>>{mul(g, sub(Tensor<S>::scalar(S(1)), mul(self, self)))};
  });
}

// Gradient w.r.t. the pre-activation uses the sign mask of the saved input;
// the mask itself is treated as constant.
template <class S>
Tensor<S> leaky_relu(const Tensor<S>& a, S slope) {
  std::vector<S> v(a.data());
  for (auto& x : v) x = x > S(0) ? x : slope * x;
  return make_op<S>(a.shape(), std::move(v), {a}, [a, slope](const Tensor<S>& g, const Tensor<S>&) {
    const auto& av = a.data();
    std::vector<S> m(av.size());
    for (size_t i = 0; i < av.size(); ++i) m[i] = av[i] > S(0) ? S(1) : slope;
    return std::vector<Tensor<S>>{mul(g, Tensor<S>(a.shape(), std::move(m)))};
  });
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
  return leaky_relu(a, S(0));
}

template <class S>
Tensor<S> detach(const Tensor<S>& a) {
  return Tensor<S>(a.shape(), a.data());
}

// ---- shape ops --------------------------------------------------------------

template <class S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  // one -1 may stand for the inferred dimension
  std::int64_t known = 1;
  int infer = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      DYN_CHECK(infer < 0, "reshape with multiple -1");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) shape[static_cast<size_t>(infer)] = a.numel() / known;
  DYN_CHECK(shape_numel(shape) == a.numel(),
            "reshape " << shape_str(a.shape()) << " -> " << shape_str(shape));
  return make_op<S>(shape, a.data(), {a},
                    [as = a.shape()](const Tensor<S>& g, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{reshape(g, as)};
                    });
}

template <class S>
Tensor<S> expand(const Tensor<S>& a, const Shape& out) {
  if (a.shape() == out) return a;
  Shape sa = detail::broadcast_strides(a.shape(), out);
  Shape so = detail::row_strides(out);
  std::int64_t n = shape_numel(out);
  const auto& av = a.data();
  std::vector<S> v(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t rem = i, oa = 0;
    for (size_t d = 0; d < out.size(); ++d) {
      std::int64_t idx = rem / so[d];
      rem -= idx * so[d];
      oa += idx * sa[d];
    }
    v[static_cast<size_t>(i)] = av[static_cast<size_t>(oa)];
  }
  return make_op<S>(out, std::move(v), {a},
                    [as = a.shape()](const Tensor<S>& g, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{reduce_to(g, as)};
                    });
}

// Sum over the listed axes (all axes when empty).
template <class S>
Tensor<S> sum(const Tensor<S>& a, std::vector<int> axes = {}, bool keepdim = false) {
  size_t nd = a.shape().size();
  std::vector<char> red(nd, 0);
  if (axes.empty()) {
    std::fill(red.begin(), red.end(), 1);
  } else {
    for (int ax : axes) {
      if (ax < 0) ax += static_cast<int>(nd);
      DYN_CHECK(ax >= 0 && ax < static_cast<int>(nd), "sum axis out of range");
      red[static_cast<size_t>(ax)] = 1;
    }
  }
  Shape keep_shape(nd);
  Shape out_shape;
  for (size_t i = 0; i < nd; ++i) {
    keep_shape[i] = red[i] ? 1 : a.shape()[i];
    if (!red[i]) out_shape.push_back(a.shape()[i]);
  }
  const Shape& rshape = keepdim ? keep_shape : out_shape;

  Shape sa = detail::row_strides(a.shape());
  Shape sk = detail::broadcast_strides(keep_shape, a.shape());
  std::vector<S> v(static_cast<size_t>(shape_numel(keep_shape)), S(0));
  const auto& av = a.data();
  std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t rem = i, off = 0;
    for (size_t d = 0; d < nd; ++d) {
      std::int64_t idx = rem / sa[d];
      rem -= idx * sa[d];
      off += idx * sk[d];
    }
    v[static_cast<size_t>(off)] += av[static_cast<size_t>(i)];
  }
  return make_op<S>(rshape, std::move(v), {a},
                    [as = a.shape(), keep_shape](const Tensor<S>& g, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{expand(reshape(g, keep_shape), as)};
                    });
}

template <class S>
Tensor<S> mean(const Tensor<S>& a, std::vector<int> axes = {}, bool keepdim = false) {
  Tensor<S> s = sum(a, axes, keepdim);
  return scale(s, static_cast<S>(static_cast<double>(s.numel()) / static_cast<double>(a.numel())));
}

// Sums g down to `target` (the reverse of broadcasting).
template <class S>
Tensor<S> reduce_to(const Tensor<S>& g, const Shape& target) {
  if (g.shape() == target) return g;
  size_t gd = g.shape().size(), td = target.size();
  std::vector<int> axes;
  for (size_t i = 0; i < gd; ++i) {
    std::int64_t tdim = i < gd - td ? 1 : target[i - (gd - td)];
    if (tdim == 1 && g.shape()[i] != 1) axes.push_back(static_cast<int>(i));
  }
  Tensor<S> r = axes.empty() ? g : sum(g, axes, /*keepdim=*/true);
  return reshape(r, target);
}

template <class S>
Tensor<S> slice(const Tensor<S>& a, int axis, std::int64_t start, std::int64_t len);

template <class S>
Tensor<S> pad_slice(const Tensor<S>& g, int axis, std::int64_t start, std::int64_t full) {
  Shape out = g.shape();
  size_t ax = static_cast<size_t>(axis);
  std::int64_t len = out[ax];
  out[ax] = full;
  std::int64_t outer = 1, inner = 1;
  for (size_t i = 0; i < ax; ++i) outer *= out[i];
  for (size_t i = ax + 1; i < out.size(); ++i) inner *= out[i];
  std::vector<S> v(static_cast<size_t>(shape_numel(out)), S(0));
  const auto& gv = g.data();
  for (std::int64_t o = 0; o < outer; ++o)
    std::memcpy(v.data() + (o * full + start) * inner, gv.data() + o * len * inner,
                static_cast<size_t>(len * inner) * sizeof(S));
  return make_op<S>(out, std::move(v), {g},
                    [axis, start, len](const Tensor<S>& u, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{slice(u, axis, start, len)};
                    });
}

template <class S>
Tensor<S> slice(const Tensor<S>& a, int axis, std::int64_t start, std::int64_t len) {
  size_t ax = static_cast<size_t>(axis);
  DYN_CHECK(ax < a.shape().size() && start >= 0 && start + len <= a.shape()[ax],
            "slice out of range on axis " << axis);
  Shape out = a.shape();
  out[ax] = len;
  std::int64_t outer = 1, inner = 1;
  for (size_t i = 0; i < ax; ++i) outer *= a.shape()[i];
  for (size_t i = ax + 1; i < a.shape().size(); ++i) inner *= a.shape()[i];
  std::int64_t full = a.shape()[ax];
  std::vector<S> v(static_cast<size_t>(shape_numel(out)));
  const auto& av = a.data();
  for (std::int64_t o = 0; o < outer; ++o)
    std::memcpy(v.data() + o * len * inner, av.data() + (o * full + start) * inner,
                static_cast<size_t>(len * inner) * sizeof(S));
  return make_op<S>(out, std::move(v), {a},
                    [axis, start, full](const Tensor<S>& g, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{pad_slice(g, axis, start, full)};
                    });
}

template <class S>
Tensor<S> concat(const std::vector<Tensor<S>>& xs, int axis) {
  DYN_CHECK(!xs.empty(), "concat of nothing");
  size_t ax = static_cast<size_t>(axis);
  Shape out = xs[0].shape();
  std::int64_t total = 0;
  for (const auto& x : xs) {
    DYN_CHECK(x.shape().size() == out.size(), "concat rank mismatch");
    total += x.shape()[ax];
  }
  out[ax] = total;
  std::int64_t outer = 1, inner = 1;
  for (size_t i = 0; i < ax; ++i) outer *= out[i];
  for (size_t i = ax + 1; i < out.size(); ++i) inner *= out[i];
  std::vector<S> v(static_cast<size_t>(shape_numel(out)));
  std::int64_t off = 0;
  for (const auto& x : xs) {
    std::int64_t len = x.shape()[ax];
    const auto& xv = x.data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(v.data() + (o * total + off) * inner, xv.data() + o * len * inner,
                  static_cast<size_t>(len * inner) * sizeof(S));
    off += len;
  }
  std::vector<std::int64_t> lens;
  for (const auto& x : xs) lens.push_back(x.shape()[ax]);
  return make_op<S>(out, std::move(v), xs, [axis, lens](const Tensor<S>& g, const Tensor<S>&) {
    std::vector<Tensor<S>> r;
    std::int64_t off = 0;
    for (auto len : lens) {
      r.push_back(slice(g, axis, off, len));
      off += len;
    }
    return r;
  });
}

// ---- matmul -----------------------------------------------------------------

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, bool ta = false, bool tb = false) {
  DYN_CHECK(a.ndim() == 2 && b.ndim() == 2, "matmul expects rank-2 tensors");
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  std::int64_t m = ta ? a.dim(1) : a.dim(0);
  std::int64_t k = ta ? a.dim(0) : a.dim(1);
  std::int64_t kb = tb ? b.dim(1) : b.dim(0);
  std::int64_t n = tb ? b.dim(0) : b.dim(1);
  DYN_CHECK(k == kb, "matmul inner dims " << k << " vs " << kb);
  std::vector<S> v(static_cast<size_t>(m * n));
  CMap ma(a.data().data(), a.dim(0), a.dim(1));
  CMap mb(b.data().data(), b.dim(0), b.dim(1));
  Eigen::Map<Mat> mv(v.data(), m, n);
  if (!ta && !tb)
    mv.noalias() = ma * mb;
  else if (ta && !tb)
    mv.noalias() = ma.transpose() * mb;
  else if (!ta && tb)
    mv.noalias() = ma * mb.transpose();
  else
    mv.noalias() = ma.transpose() * mb.transpose();
  return make_op<S>({m, n}, std::move(v), {a, b},
                    [a, b, ta, tb](const Tensor<S>& g, const Tensor<S>&) {
                      Tensor<S> da = ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb);
                      Tensor<S> db = tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false);
                      return std::vector<Tensor<S>>{da, db};
                    });
}

// ---- convolution family -----------------------------------------------------
//
// conv2d, its input-gradient and its weight-gradient are three bilinear maps
// of one trilinear form, so each one's backward is expressed with the other
// two. That closure property gives exact higher-order derivatives.

namespace detail {

template <class S>
void im2col(const S* x, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t Ho,
            std::int64_t Wo, S* cols) {
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t i = 0; i < kh; ++i) {
      for (std::int64_t j = 0; j < kw; ++j) {
        S* dst = cols + ((c * kh + i) * kw + j) * Ho * Wo;
        for (std::int64_t ho = 0; ho < Ho; ++ho) {
          std::int64_t h = ho * stride - pad + i;
          if (h < 0 || h >= H) {
            std::fill(dst + ho * Wo, dst + (ho + 1) * Wo, S(0));
            continue;
          }
          const S* src = x + (c * H + h) * W;
          if (stride == 1) {
            for (std::int64_t wo = 0; wo < Wo; ++wo) {
              std::int64_t w = wo - pad + j;
              dst[ho * Wo + wo] = (w >= 0 && w < W) ? src[w] : S(0);
            }
          } else {
            for (std::int64_t wo = 0; wo < Wo; ++wo) {
              std::int64_t w = wo * stride - pad + j;
              dst[ho * Wo + wo] = (w >= 0 && w < W) ? src[w] : S(0);
            }
          }
        }
      }
    }
  }
}

template <class S>
void col2im_add(const S* cols, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh,
                std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t Ho,
                std::int64_t Wo, S* x) {
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t i = 0; i < kh; ++i) {
      for (std::int64_t j = 0; j < kw; ++j) {
        const S* src = cols + ((c * kh + i) * kw + j) * Ho * Wo;
        for (std::int64_t ho = 0; ho < Ho; ++ho) {
          std::int64_t h = ho * stride - pad + i;
          if (h < 0 || h >= H) continue;
          S* dst = x + (c * H + h) * W;
          for (std::int64_t wo = 0; wo < Wo; ++wo) {
            std::int64_t w = wo * stride - pad + j;
            if (w >= 0 && w < W) dst[w] += src[ho * Wo + wo];
          }
        }
      }
    }
  }
}

inline std::int64_t conv_out(std::int64_t in, std::int64_t k, std::int64_t stride,
                             std::int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

template <class S>
Tensor<S> conv2d_dx(const Tensor<S>& gy, const Tensor<S>& w, std::int64_t stride, std::int64_t pad,
                    std::int64_t H, std::int64_t W);
template <class S>
Tensor<S> conv2d_dw(const Tensor<S>& x, const Tensor<S>& gy, std::int64_t stride, std::int64_t pad,
                    std::int64_t kh, std::int64_t kw);

// x: (N,Ci,H,W), w: (Co,Ci,kh,kw) -> (N,Co,Ho,Wo)
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, std::int64_t stride = 1,
                 std::int64_t pad = 0) {
  DYN_CHECK(x.ndim() == 4 && w.ndim() == 4, "conv2d expects 4-d input and kernel");
  DYN_CHECK(x.dim(1) == w.dim(1),
            "conv2d channel mismatch: " << x.dim(1) << " vs kernel " << w.dim(1));
  std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  std::int64_t Ho = detail::conv_out(H, kh, stride, pad), Wo = detail::conv_out(W, kw, stride, pad);
  DYN_CHECK(Ho > 0 && Wo > 0, "conv2d output would be empty");
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<S> v(static_cast<size_t>(N * Co * Ho * Wo));
  std::vector<S> cols(static_cast<size_t>(C * kh * kw * Ho * Wo));
  Eigen::Map<const Mat> mw(w.data().data(), Co, C * kh * kw);
  for (std::int64_t n = 0; n < N; ++n) {
    detail::im2col(x.data().data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo,
                   cols.data());
    Eigen::Map<const Mat> mc(cols.data(), C * kh * kw, Ho * Wo);
    Eigen::Map<Mat> mv(v.data() + n * Co * Ho * Wo, Co, Ho * Wo);
    mv.noalias() = mw * mc;
  }
  return make_op<S>({N, Co, Ho, Wo}, std::move(v), {x, w},
                    [x, w, stride, pad, H, W, kh, kw](const Tensor<S>& g, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{conv2d_dx(g, w, stride, pad, H, W),
                                                    conv2d_dw(x, g, stride, pad, kh, kw)};
                    });
}

// gy: (N,Co,Ho,Wo), w: (Co,Ci,kh,kw) -> (N,Ci,H,W)
template <class S>
Tensor<S> conv2d_dx(const Tensor<S>& gy, const Tensor<S>& w, std::int64_t stride, std::int64_t pad,
                    std::int64_t H, std::int64_t W) {
  std::int64_t N = gy.dim(0), Co = gy.dim(1), Ho = gy.dim(2), Wo = gy.dim(3);
  std::int64_t C = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  DYN_CHECK(w.dim(0) == Co, "conv2d_dx kernel/output channel mismatch");
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<S> v(static_cast<size_t>(N * C * H * W), S(0));
  std::vector<S> cols(static_cast<size_t>(C * kh * kw * Ho * Wo));
  Eigen::Map<const Mat> mw(w.data().data(), Co, C * kh * kw);
  for (std::int64_t n = 0; n < N; ++n) {
    Eigen::Map<const Mat> mg(gy.data().data() + n * Co * Ho * Wo, Co, Ho * Wo);
    Eigen::Map<Mat> mc(cols.data(), C * kh * kw, Ho * Wo);
    mc.noalias() = mw.transpose() * mg;
    detail::col2im_add(cols.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                       v.data() + n * C * H * W);
  }
  return make_op<S>({N, C, H, W}, std::move(v), {gy, w},
                    [gy, w, stride, pad, kh, kw](const Tensor<S>& u, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{conv2d(u, w, stride, pad),
                                                    conv2d_dw(u, gy, stride, pad, kh, kw)};
                    });
}

// x: (N,Ci,H,W), gy: (N,Co,Ho,Wo) -> (Co,Ci,kh,kw)
template <class S>
Tensor<S> conv2d_dw(const Tensor<S>& x, const Tensor<S>& gy, std::int64_t stride, std::int64_t pad,
                    std::int64_t kh, std::int64_t kw) {
  std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::int64_t Co = gy.dim(1), Ho = gy.dim(2), Wo = gy.dim(3);
  DYN_CHECK(gy.dim(0) == N, "conv2d_dw batch mismatch");
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<S> v(static_cast<size_t>(Co * C * kh * kw), S(0));
  std::vector<S> cols(static_cast<size_t>(C * kh * kw * Ho * Wo));
  Eigen::Map<Mat> mv(v.data(), Co, C * kh * kw);
  for (std::int64_t n = 0; n < N; ++n) {
    detail::im2col(x.data().data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo,
                   cols.data());
    Eigen::Map<const Mat> mc(cols.data(), C * kh * kw, Ho * Wo);
    Eigen::Map<const Mat> mg(gy.data().data() + n * Co * Ho * Wo, Co, Ho * Wo);
    mv.noalias() += mg * mc.transpose();
  }
  return make_op<S>({Co, C, kh, kw}, std::move(v), {x, gy},
                    [x, gy, stride, pad, kh, kw, H, W](const Tensor<S>& u, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{conv2d_dx(gy, u, stride, pad, H, W),
                                                    conv2d(x, u, stride, pad)};
                    });
}

// ---- resampling -------------------------------------------------------------

template <class S>
Tensor<S> downsum2x(const Tensor<S>& a);

template <class S>
Tensor<S> upsample2x(const Tensor<S>& a) {
  DYN_CHECK(a.ndim() == 4, "upsample2x expects 4-d");
  std::int64_t N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  std::vector<S> v(static_cast<size_t>(N * C * 4 * H * W));
  const auto& av = a.data();
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const S* src = av.data() + nc * H * W;
    S* dst = v.data() + nc * 4 * H * W;
    for (std::int64_t h = 0; h < H; ++h) {
      for (std::int64_t w = 0; w < W; ++w) {
        S x = src[h * W + w];
        std::int64_t o = (2 * h) * 2 * W + 2 * w;
        dst[o] = x;
        dst[o + 1] = x;
        dst[o + 2 * W] = x;
        dst[o + 2 * W + 1] = x;
      }
    }
  }
  return make_op<S>({N, C, 2 * H, 2 * W}, std::move(v), {a},
                    [](const Tensor<S>& g, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{downsum2x(g)};
                    });
}

template <class S>
Tensor<S> downsum2x(const Tensor<S>& a) {
  DYN_CHECK(a.ndim() == 4 && a.dim(2) % 2 == 0 && a.dim(3) % 2 == 0, "downsum2x expects even dims");
  std::int64_t N = a.dim(0), C = a.dim(1), H = a.dim(2) / 2, W = a.dim(3) / 2;
  std::vector<S> v(static_cast<size_t>(N * C * H * W));
  const auto& av = a.data();
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const S* src = av.data() + nc * 4 * H * W;
    S* dst = v.data() + nc * H * W;
    for (std::int64_t h = 0; h < H; ++h)
      for (std::int64_t w = 0; w < W; ++w) {
        std::int64_t o = (2 * h) * 2 * W + 2 * w;
        dst[h * W + w] = src[o] + src[o + 1] + src[o + 2 * W] + src[o + 2 * W + 1];
      }
  }
  return make_op<S>({N, C, H, W}, std::move(v), {a}, [](const Tensor<S>& g, const Tensor<S>&) {
    return std::vector<Tensor<S>>{upsample2x(g)};
  });
}

// Per-channel 3x3 box sum with zero padding; self-adjoint.
template <class S>
Tensor<S> boxsum3x3(const Tensor<S>& a) {
  DYN_CHECK(a.ndim() == 4, "boxsum3x3 expects 4-d");
  std::int64_t N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  std::vector<S> v(static_cast<size_t>(a.numel()), S(0));
  const auto& av = a.data();
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const S* src = av.data() + nc * H * W;
    S* dst = v.data() + nc * H * W;
    for (std::int64_t h = 0; h < H; ++h) {
      std::int64_t h0 = std::max<std::int64_t>(0, h - 1), h1 = std::min(H - 1, h + 1);
      for (std::int64_t w = 0; w < W; ++w) {
        std::int64_t w0 = std::max<std::int64_t>(0, w - 1), w1 = std::min(W - 1, w + 1);
        S acc = S(0);
        for (std::int64_t i = h0; i <= h1; ++i)
          for (std::int64_t j = w0; j <= w1; ++j) acc += src[i * W + j];
        dst[h * W + w] = acc;
      }
    }
  }
  return make_op<S>(a.shape(), std::move(v), {a}, [](const Tensor<S>& g, const Tensor<S>&) {
    return std::vector<Tensor<S>>{boxsum3x3(g)};
  });
}

// ---- embedding --------------------------------------------------------------

template <class S>
Tensor<S> embedding_scatter(const Tensor<S>& g, const std::vector<std::int64_t>& ids,
                            std::int64_t vocab);

// table: (V,D), ids laid out as (N,T) -> (N,T,D)
template <class S>
Tensor<S> embedding(const Tensor<S>& table, const std::vector<std::int64_t>& ids, std::int64_t N,
                    std::int64_t T) {
  DYN_CHECK(table.ndim() == 2, "embedding table must be 2-d");
  DYN_CHECK(static_cast<std::int64_t>(ids.size()) == N * T, "embedding ids size mismatch");
  std::int64_t V = table.dim(0), D = table.dim(1);
  std::vector<S> v(static_cast<size_t>(N * T * D));
  const auto& tv = table.data();
  for (std::int64_t i = 0; i < N * T; ++i) {
    std::int64_t id = ids[static_cast<size_t>(i)];
    DYN_CHECK(id >= 0 && id < V, "embedding id " << id << " out of range");
    std::memcpy(v.data() + i * D, tv.data() + id * D, static_cast<size_t>(D) * sizeof(S));
  }
  return make_op<S>({N, T, D}, std::move(v), {table},
                    [ids, V](const Tensor<S>& g, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{embedding_scatter(g, ids, V)};
                    });
}

template <class S>
Tensor<S> embedding_scatter(const Tensor<S>& g, const std::vector<std::int64_t>& ids,
                            std::int64_t vocab) {
  std::int64_t D = g.dim(g.ndim() - 1);
  std::int64_t rows = g.numel() / D;
  std::vector<S> v(static_cast<size_t>(vocab * D), S(0));
  const auto& gv = g.data();
  for (std::int64_t i = 0; i < rows; ++i) {
    S* dst = v.data() + ids[static_cast<size_t>(i)] * D;
    const S* src = gv.data() + i * D;
    for (std::int64_t d = 0; d < D; ++d) dst[d] += src[d];
  }
  std::int64_t N = rows, T = 1;
  if (g.ndim() == 3) {
    N = g.dim(0);
    T = g.dim(1);
  }
  return make_op<S>({vocab, D}, std::move(v), {g},
                    [ids, N, T, gs = g.shape()](const Tensor<S>& u, const Tensor<S>&) {
                      return std::vector<Tensor<S>>{reshape(embedding(u, ids, N, T), gs)};
                    });
}

// ---- non-differentiable helpers ----------------------------------------------

// Row-wise max over the last axis, detached (used as a constant shift).
template <class S>
Tensor<S> rowmax_detached(const Tensor<S>& a) {
  DYN_CHECK(a.ndim() == 2, "rowmax expects rank-2");
  std::int64_t R = a.dim(0), C = a.dim(1);
  std::vector<S> v(static_cast<size_t>(R));
  const auto& av = a.data();
  for (std::int64_t r = 0; r < R; ++r) {
    S m = av[r * C];
    for (std::int64_t c = 1; c < C; ++c) m = std::max(m, av[r * C + c]);
    v[static_cast<size_t>(r)] = m;
  }
  return Tensor<S>({R, 1}, std::move(v));
}

template <class S>
Tensor<S> ones_like(const Tensor<S>& a) {
  return Tensor<S>::full(a.shape(), S(1));
}

// ---- operators ---------------------------------------------------------------

template <class S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, b);
}
template <class S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) {
  return sub(a, b);
}
template <class S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) {
  return mul(a, b);
}
template <class S>
Tensor<S> operator*(const Tensor<S>& a, S c) {
  return scale(a, c);
}
template <class S>
Tensor<S> operator-(const Tensor<S>& a) {
  return neg(a);
}

}  // namespace dynedit
