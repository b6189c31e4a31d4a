#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

#include "dynedit/discriminator.hpp"
#include "dynedit/generator.hpp"
#include "dynedit/ops.hpp"
#include "dynedit/textenc.hpp"

namespace dynedit {

// Adversarial objective:
//   L_D = E[relu(1 - D(x,e))] + 1/2 E[relu(1 + D(G(x,ê),ê))]
//       + 1/2 E[relu(1 + D(x,ê))] + k E[(||grad_x D|| + ||grad_e D||)^p]
//   L_G = -E[D(G(x,ê),ê)] + l1 E[||G(x,ê) - x||_2] - l2 E[S(G(x,ê),ê)]
// The hinge form is the negated-min identity: -min(0, -1+a) = relu(1-a).
// The penalty is evaluated on matched real pairs only.

// ---- tensor-level terms (exercised directly by the oracle tests) -----------

template <class S>
Tensor<S> hinge_d(const Tensor<S>& d_real, const Tensor<S>& d_fake, const Tensor<S>& d_mis) {
  Tensor<S> real = mean(relu(add_scalar(neg(d_real), S(1))));
  Tensor<S> fake = mean(relu(add_scalar(d_fake, S(1))));
  Tensor<S> mis = mean(relu(add_scalar(d_mis, S(1))));
  return add(real, scale(add(fake, mis), S(0.5)));
}

// Per-sample Euclidean norm over every element, divided by the spatial pixel
// count H*W, batch-averaged. The divisor keeps the weighting comparable
// across image sizes.
template <class S>
Tensor<S> recon_norm(const Tensor<S>& fake, const Tensor<S>& x) {
  Tensor<S> d = sub(fake, x);
  Tensor<S> n = sqrt(add_scalar(sum(mul(d, d), {1, 2, 3}), S(1e-12)));
  return scale(mean(n), S(1) / static_cast<S>(x.dim(2) * x.dim(3)));
}

// Matching-aware gradient penalty on matched real pairs. `d` is any callable
// producing (N,1) logits; gradients are taken w.r.t. fresh input leaves so the
// penalty itself stays differentiable in D's parameters.
template <class S, class DFn>
Tensor<S> magp(DFn&& d, const Tensor<S>& x, const Tensor<S>& e, double k, std::int64_t p) {
  Tensor<S> xi(x.shape(), std::vector<S>(x.data()), /*requires_grad=*/true);
  Tensor<S> ei(e.shape(), std::vector<S>(e.data()), /*requires_grad=*/true);
  Tensor<S> s = sum(d(xi, ei));
  // A critic that ignores an input leaves it unreachable; that gradient is zero.
  // If the output ignores both inputs there is no graph to walk at all.
  std::vector<Tensor<S>> grads(2);
  if (s.requires_grad()) grads = grad_of(s, {xi, ei}, /*create_graph=*/true);
  Tensor<S> gx = grads[0].defined() ? grads[0] : Tensor<S>::zeros(x.shape());
  Tensor<S> ge = grads[1].defined() ? grads[1] : Tensor<S>::zeros(e.shape());
  for (S v : gx.data()) DYN_CHECK(std::isfinite(v), "non-finite penalty gradient");
  for (S v : ge.data()) DYN_CHECK(std::isfinite(v), "non-finite penalty gradient");
  Tensor<S> nx = sqrt(add_scalar(sum(mul(gx, gx), {1, 2, 3}), S(1e-12)));
  Tensor<S> ne = sqrt(add_scalar(sum(mul(ge, ge), {1}), S(1e-12)));
  return scale(mean(pow_scalar(add(nx, ne), static_cast<S>(p))), static_cast<S>(k));
}

// ---- full objectives ---------------------------------------------------------

template <class S>
struct TrainBatch {
  Tensor<S> x;      // source images (N,3,H,W)
  Tensor<S> e;      // embeddings of the sources' own captions (N,D)
  Tensor<S> e_hat;  // embeddings of captions from other records (N,D)
};

struct DLossParts {
  double total = 0, hinge = 0, penalty = 0;
};

// One discriminator objective evaluation; the generator runs detached.
template <class S>
DLossParts d_loss(const Generator<S>& g, const Discriminator<S>& d, const TrainBatch<S>& b,
                  Tensor<S>& out) {
  Tensor<S> fake;
  {
    GradGuard off(false);
    fake = g.generate(b.x, b.e_hat);
  }
  Tensor<S> hinge = hinge_d(d.discriminate(b.x, b.e), d.discriminate(fake, b.e_hat),
                            d.discriminate(b.x, b.e_hat));
  Tensor<S> pen = magp([&](const Tensor<S>& xi, const Tensor<S>& ei) {
    return d.discriminate(xi, ei);
  }, b.x, b.e, d.cfg.k, d.cfg.p);
  out = add(hinge, pen);
  DLossParts parts;
  parts.hinge = static_cast<double>(hinge.item());
  parts.penalty = static_cast<double>(pen.item());
  parts.total = static_cast<double>(out.item());
  DYN_CHECK(std::isfinite(parts.total), "discriminator loss diverged");
  return parts;
}

struct GLossParts {
  double total = 0, adv = 0, recon = 0, sim = 0;
};

// One generator objective evaluation; D and S parameters are held frozen by
// the caller (their requires_grad flags), only G's parameters receive grads.
template <class S>
GLossParts g_loss(const Generator<S>& g, const Discriminator<S>& d,
                  const text::SimilarityModel<S>& s, const TrainBatch<S>& b, double lambda1,
                  double lambda2, Tensor<S>& out) {
  Tensor<S> fake = g.generate(b.x, b.e_hat);
  Tensor<S> adv = neg(mean(d.discriminate(fake, b.e_hat)));
  Tensor<S> rec = recon_norm(fake, b.x);
  Tensor<S> sim = mean(sum(mul(s.embed_images(fake), b.e_hat), {1}));
  out = add(adv, sub(scale(rec, static_cast<S>(lambda1)), scale(sim, static_cast<S>(lambda2))));
  GLossParts parts;
  parts.adv = static_cast<double>(adv.item());
  parts.recon = static_cast<double>(rec.item());
  parts.sim = static_cast<double>(sim.item());
  parts.total = static_cast<double>(out.item());
  DYN_CHECK(std::isfinite(parts.total), "generator loss diverged");
  return parts;
}

}  // namespace dynedit
