#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dynedit/ops.hpp"
#include "dynedit/rng.hpp"

namespace dynedit {

template <class S>
using ParamList = std::vector<std::pair<std::string, Tensor<S>>>;

namespace init {

template <class S>
Tensor<S> gaussian(Rng& rng, const Shape& shape, double sigma) {
  std::vector<S> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<S>(rng.gaussian(0.0, sigma));
  return Tensor<S>(shape, std::move(v), /*requires_grad=*/true);
}

// Orthogonal rows (out x in, out <= in) via Gram-Schmidt on a gaussian draw;
// falls back to plain gaussian columns when out > in.
template <class S>
Tensor<S> orthogonal(Rng& rng, std::int64_t out, std::int64_t in, double gain = 1.0) {
  std::int64_t r = std::min(out, in), c = std::max(out, in);
  std::vector<std::vector<double>> q(static_cast<size_t>(r),
                                     std::vector<double>(static_cast<size_t>(c)));
  for (auto& row : q)
    for (auto& x : row) x = rng.gaussian(0.0, 1.0);
  for (std::int64_t i = 0; i < r; ++i) {
    for (std::int64_t j = 0; j < i; ++j) {
      double d = 0;
      for (std::int64_t k = 0; k < c; ++k) d += q[i][k] * q[j][k];
      for (std::int64_t k = 0; k < c; ++k) q[i][k] -= d * q[j][k];
    }
    double n = 0;
    for (std::int64_t k = 0; k < c; ++k) n += q[i][k] * q[i][k];
    n = std::sqrt(std::max(n, 1e-12));
    for (std::int64_t k = 0; k < c; ++k) q[i][k] /= n;
  }
  std::vector<S> v(static_cast<size_t>(out * in));
  for (std::int64_t i = 0; i < out; ++i)
    for (std::int64_t j = 0; j < in; ++j) {
      double x = out <= in ? q[static_cast<size_t>(i)][static_cast<size_t>(j)]
                           : q[static_cast<size_t>(j)][static_cast<size_t>(i)];
      v[static_cast<size_t>(i * in + j)] = static_cast<S>(gain * x);
    }
  return Tensor<S>({out, in}, std::move(v), /*requires_grad=*/true);
}

template <class S>
Tensor<S> constant(const Shape& shape, S value) {
  return Tensor<S>(shape, std::vector<S>(static_cast<size_t>(shape_numel(shape)), value),
                   /*requires_grad=*/true);
}

// Conv weight (cout, cin, k, k) with orthogonal rows over the flattened
// (cin*k*k) fan-in.
template <class S>
Tensor<S> orthogonal_conv(Rng& rng, std::int64_t cout, std::int64_t cin, std::int64_t k,
                          double gain = 1.0) {
  Tensor<S> m = orthogonal<S>(rng, cout, cin * k * k, gain);
  std::vector<S> v(m.data().begin(), m.data().end());
  return Tensor<S>({cout, cin, k, k}, std::move(v), /*requires_grad=*/true);
}

}  // namespace init

// ---- layers -------------------------------------------------------------

template <class S>
struct Linear {
  Tensor<S> w, b;
  bool has_bias = true;

  Linear() = default;
  Linear(Rng& rng, std::int64_t in, std::int64_t out, bool bias = true, double gain = 1.0)
      : w(init::orthogonal<S>(rng, out, in, gain)),
        b(init::constant<S>({out}, S(0))),
        has_bias(bias) {}

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> y = matmul(x, w, false, true);
    return has_bias ? add(y, b) : y;
  }
  void params(ParamList<S>& out, const std::string& p) const {
    out.emplace_back(p + ".w", w);
    if (has_bias) out.emplace_back(p + ".b", b);
  }
};

template <class S>
struct Conv2d {
  Tensor<S> w, b;
  std::int64_t stride = 1, pad = 0;
  bool has_bias = true;

  Conv2d() = default;
  Conv2d(Rng& rng, std::int64_t cin, std::int64_t cout, std::int64_t k, std::int64_t stride_,
         std::int64_t pad_, bool bias = true, double sigma = 0.02)
      : w(init::gaussian<S>(rng, {cout, cin, k, k}, sigma)),
        b(init::constant<S>({cout}, S(0))),
        stride(stride_),
        pad(pad_),
        has_bias(bias) {}

  static Conv2d ortho(Rng& rng, std::int64_t cin, std::int64_t cout, std::int64_t k,
                      std::int64_t stride_, std::int64_t pad_, double gain = 1.0) {
    Conv2d c;
    c.w = init::orthogonal_conv<S>(rng, cout, cin, k, gain);
    c.b = init::constant<S>({cout}, S(0));
    c.stride = stride_;
    c.pad = pad_;
    return c;
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> y = conv2d(x, w, stride, pad);
    return has_bias ? add(y, reshape(b, {1, b.dim(0), 1, 1})) : y;
  }
  void params(ParamList<S>& out, const std::string& p) const {
    out.emplace_back(p + ".w", w);
    if (has_bias) out.emplace_back(p + ".b", b);
  }
};

template <class S>
struct EmbeddingTable {
  Tensor<S> table;

  EmbeddingTable() = default;
  EmbeddingTable(Rng& rng, std::int64_t vocab, std::int64_t dim, double sigma = 0.1)
      : table(init::gaussian<S>(rng, {vocab, dim}, sigma)) {}

  Tensor<S> forward(const std::vector<std::int64_t>& ids, std::int64_t N, std::int64_t T) const {
    return embedding(table, ids, N, T);
  }
  void params(ParamList<S>& out, const std::string& p) const {
    out.emplace_back(p + ".table", table);
  }
};

// Bidirectional vanilla tanh RNN. Hidden states are zeroed at padded
// positions (mask is 1 for real tokens), so the reverse pass effectively
// starts at each sequence's true last token.
template <class S>
struct BiRnn {
  Linear<S> fwd_x, fwd_h, bwd_x, bwd_h;
  std::int64_t hidden = 0;

  BiRnn() = default;
  BiRnn(Rng& rng, std::int64_t in, std::int64_t hidden_)
      : fwd_x(rng, in, hidden_),
        fwd_h(rng, hidden_, hidden_, /*bias=*/false),
        bwd_x(rng, in, hidden_),
        bwd_h(rng, hidden_, hidden_, /*bias=*/false),
        hidden(hidden_) {}

  // x: (N,T,D), mask: (N,T) of 0/1 -> word states (N,T,2*hidden)
  Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& mask) const {
    std::int64_t N = x.dim(0), T = x.dim(1), D = x.dim(2);
    auto step_mask = [&](std::int64_t t) {
      return reshape(slice(mask, 1, t, 1), Shape{N, 1});
    };
    auto step_in = [&](std::int64_t t) { return reshape(slice(x, 1, t, 1), Shape{N, D}); };

    std::vector<Tensor<S>> hs_f(static_cast<size_t>(T)), hs_b(static_cast<size_t>(T));
    Tensor<S> h = Tensor<S>::zeros({N, hidden});
    for (std::int64_t t = 0; t < T; ++t) {
      h = mul(tanh(add(fwd_x.forward(step_in(t)), fwd_h.forward(h))), step_mask(t));
      hs_f[static_cast<size_t>(t)] = reshape(h, {N, 1, hidden});
    }
    h = Tensor<S>::zeros({N, hidden});
    for (std::int64_t t = T - 1; t >= 0; --t) {
      h = mul(tanh(add(bwd_x.forward(step_in(t)), bwd_h.forward(h))), step_mask(t));
      hs_b[static_cast<size_t>(t)] = reshape(h, {N, 1, hidden});
    }
    std::vector<Tensor<S>> per_t;
    per_t.reserve(static_cast<size_t>(T));
    for (std::int64_t t = 0; t < T; ++t)
      per_t.push_back(concat<S>({hs_f[static_cast<size_t>(t)], hs_b[static_cast<size_t>(t)]}, 2));
    return concat(per_t, 1);
  }
  void params(ParamList<S>& out, const std::string& p) const {
    fwd_x.params(out, p + ".fwd_x");
    fwd_h.params(out, p + ".fwd_h");
    bwd_x.params(out, p + ".bwd_x");
    bwd_h.params(out, p + ".bwd_h");
  }
};

// Per-sample, per-channel normalization over spatial dims with learned scale
// and shift.
template <class S>
struct InstanceNorm {
  Tensor<S> gamma, beta;

  InstanceNorm() = default;
  explicit InstanceNorm(std::int64_t channels)
      : gamma(init::constant<S>({channels}, S(1))), beta(init::constant<S>({channels}, S(0))) {}

  Tensor<S> forward(const Tensor<S>& x) const {
    std::int64_t C = x.dim(1);
    Tensor<S> mu = mean(x, {2, 3}, /*keepdim=*/true);
    Tensor<S> d = sub(x, mu);
    Tensor<S> var = mean(mul(d, d), {2, 3}, /*keepdim=*/true);
    Tensor<S> y = mul(d, pow_scalar(add_scalar(var, S(1e-5)), S(-0.5)));
    return add(mul(y, reshape(gamma, {1, C, 1, 1})), reshape(beta, {1, C, 1, 1}));
  }
  void params(ParamList<S>& out, const std::string& p) const {
    out.emplace_back(p + ".gamma", gamma);
    out.emplace_back(p + ".beta", beta);
  }
};

// L2-normalize rows of a (N,D) matrix.
template <class S>
Tensor<S> l2_normalize_rows(const Tensor<S>& x, S eps = S(1e-8)) {
  Tensor<S> n = sqrt(add_scalar(sum(mul(x, x), {1}, /*keepdim=*/true), eps));
  return mul(x, pow_scalar(n, S(-1)));
}

// ---- optimizer ------------------------------------------------------------

template <class S>
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<S> params, double lr, double beta1, double beta2, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (auto& [name, t] : params_) {
      m_.emplace_back(t.data().size(), 0.0);
      v_.emplace_back(t.data().size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  void step() {
    ++t_;
    double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& t = params_[i].second;
      const auto& g = t.grad();
      if (g.empty()) continue;
      auto& data = t.mutable_data();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < data.size(); ++j) {
        double gj = static_cast<double>(g[j]);
        m[j] = b1_ * m[j] + (1.0 - b1_) * gj;
        v[j] = b2_ * v[j] + (1.0 - b2_) * gj * gj;
        double mh = m[j] / c1, vh = v[j] / c2;
        data[j] -= static_cast<S>(lr_ * mh / (std::sqrt(vh) + eps_));
      }
    }
  }

  const ParamList<S>& params() const { return params_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  // Flat optimizer state for checkpointing: step count plus per-parameter
  // first/second moment vectors in registration order.
  std::int64_t step_count() const { return t_; }
  const std::vector<std::vector<double>>& moment1() const { return m_; }
  const std::vector<std::vector<double>>& moment2() const { return v_; }
  void restore(std::int64_t t, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v) {
    DYN_CHECK(m.size() == params_.size() && v.size() == params_.size(),
              "optimizer state has wrong parameter count");
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  ParamList<S> params_;
  double lr_ = 1e-4, b1_ = 0.0, b2_ = 0.9, eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace dynedit
