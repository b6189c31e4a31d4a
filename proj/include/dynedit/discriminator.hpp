#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dynedit/nn.hpp"
#include "dynedit/ops.hpp"
#include "dynedit/rng.hpp"
#include "dynedit/serialize.hpp"

namespace dynedit {

struct DiscriminatorConfig {
  std::int64_t image_size = 64;
  std::vector<std::int64_t> channels = {64, 128, 256, 512};  // one stride-2 stage each
  std::int64_t text_dim = 128;
  std::int64_t proj_dim = 128;  // sentence projection replicated over the 4x4 grid
  double k = 2.0;               // gradient-penalty coefficient
  std::int64_t p = 6;           // gradient-penalty exponent

  void validate() const {
    DYN_CHECK(k > 0.0 && p >= 1, "penalty coefficients must satisfy k>0, p>=1");
    std::int64_t b = image_size;
    for (size_t i = 0; i < channels.size(); ++i) {
      DYN_CHECK(b % 2 == 0, "image size not divisible by 2^levels");
      b /= 2;
    }
    DYN_CHECK(b == 4, "discriminator must bottom out at 4x4");
  }
};

inline nlohmann::json discriminator_config_json(const DiscriminatorConfig& cfg) {
  return {{"image_size", cfg.image_size}, {"channels", cfg.channels},
          {"text_dim", cfg.text_dim},     {"proj_dim", cfg.proj_dim},
          {"k", cfg.k},                   {"p", cfg.p}};
}

inline DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.image_size = j.at("image_size");
  c.channels = j.at("channels").get<std::vector<std::int64_t>>();
  c.text_dim = j.at("text_dim");
  c.proj_dim = j.at("proj_dim");
  c.k = j.at("k");
  c.p = j.at("p");
  return c;
}

// Conditional critic: stride-2 conv stack to 4x4, sentence embedding projected
// and replicated over the grid, two final convolutions to one scalar per
// sample. No normalization layers — the gradient penalty regularizes instead.
template <class S>
struct Discriminator {
  DiscriminatorConfig cfg;
  std::vector<Conv2d<S>> convs;
  Linear<S> proj;
  Conv2d<S> joint1, joint2;

  Discriminator() = default;
  Discriminator(Rng& rng, DiscriminatorConfig c) : cfg(std::move(c)) {
    cfg.validate();
    std::int64_t in = 3;
    for (std::int64_t out : cfg.channels) {
      convs.push_back(Conv2d<S>::ortho(rng, in, out, 4, 2, 1));
      in = out;
    }
    proj = Linear<S>(rng, cfg.text_dim, cfg.proj_dim);
    joint1 = Conv2d<S>::ortho(rng, in + cfg.proj_dim, in, 3, 1, 1);
    joint2 = Conv2d<S>::ortho(rng, in, 1, 4, 1, 0);
  }

  // (N,1) logits, differentiable w.r.t. both image and sentence embedding.
  Tensor<S> discriminate(const Tensor<S>& x, const Tensor<S>& e) const {
    DYN_CHECK(x.ndim() == 4 && x.dim(1) == 3 && x.dim(2) == cfg.image_size &&
                  x.dim(3) == cfg.image_size,
              "image must be (N,3,size,size)");
    DYN_CHECK(e.ndim() == 2 && e.dim(0) == x.dim(0) && e.dim(1) == cfg.text_dim,
              "sentence embedding must be (N,text_dim)");
    Tensor<S> h = x;
    for (const auto& c : convs) h = leaky_relu(c.forward(h), S(0.2));
    std::int64_t n = h.dim(0);
    Tensor<S> pe = expand(reshape(proj.forward(e), {n, cfg.proj_dim, 1, 1}),
                          {n, cfg.proj_dim, h.dim(2), h.dim(3)});
    h = leaky_relu(joint1.forward(concat<S>({h, pe}, 1)), S(0.2));
    return reshape(joint2.forward(h), {n, 1});
  }

  ParamList<S> params() const {
    ParamList<S> out;
    for (size_t i = 0; i < convs.size(); ++i)
      convs[i].params(out, "discriminator.s" + std::to_string(i));
    proj.params(out, "discriminator.proj");
    joint1.params(out, "discriminator.joint1");
    joint2.params(out, "discriminator.joint2");
    return out;
  }
};

}  // namespace dynedit
