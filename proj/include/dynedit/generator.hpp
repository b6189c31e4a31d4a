#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dynedit/nn.hpp"
#include "dynedit/ops.hpp"
#include "dynedit/rng.hpp"
#include "dynedit/serialize.hpp"

namespace dynedit {

// Editing generator: a source-image encoder feeds three consumers — a
// semantic decoder (spatial editing cues), a composition predictor (per-block
// per-channel mixing weights), and a target decoder whose blocks fuse a
// channel-wise text affine with a pixel-wise spatial affine, the latter
// modulated by text-conditioned dynamic convolutions over the semantic maps.
struct GeneratorConfig {
  std::int64_t image_size = 64;
  std::int64_t levels = 4;  // stride-2 encoder stages; bottleneck is size/2^levels
  std::vector<std::int64_t> channels = {64, 128, 256, 512};  // encoder width per stage
  std::int64_t text_dim = 128;
  std::int64_t heads = 8;          // dynamic-conv kernels per block
  std::int64_t head_channels = 8;  // output channels per kernel
  std::int64_t comp_dim = 128;     // visual/text feature width in the composition predictor
  std::int64_t comp_hidden = 256;
  std::int64_t affine_hidden = 256;  // hidden width of the text-affine MLPs
  std::int64_t affine_pairs = 1;     // fused affine applications per decoder block

  // Ablation switches.
  bool use_comp_pred = true;
  double fixed_alpha = 0.5;  // mixing weight when the predictor is disabled
  bool use_c_affine = true;
  bool use_s_affine = true;
  bool use_dcblock = true;  // false: text-independent convolution over semantic maps
  bool use_semantic_decoder = true;  // false: encoder maps feed the dynamic queries

  std::int64_t stem_width() const { return channels.empty() ? 0 : channels[0] / 2; }
  // Decoder block n runs at width matching the encoder map of equal resolution.
  std::int64_t decoder_width(std::int64_t n) const {
    return n + 1 < levels ? channels[static_cast<size_t>(levels - 2 - n)] : stem_width();
  }
  std::int64_t alpha_total() const {
    std::int64_t t = 0;
    for (std::int64_t n = 0; n < levels; ++n) t += decoder_width(n);
    return t;
  }

  void validate() const {
    DYN_CHECK(levels >= 1 && static_cast<std::int64_t>(channels.size()) == levels,
              "channel list length must equal level count");
    std::int64_t b = image_size;
    for (std::int64_t i = 0; i < levels; ++i) {
      DYN_CHECK(b % 2 == 0, "image size not divisible by 2^levels");
      b /= 2;
    }
    DYN_CHECK(b == 4, "bottleneck must be 4x4");
    DYN_CHECK(channels[0] % 2 == 0, "first encoder width must be even");
    DYN_CHECK(heads >= 1 && head_channels >= 1 && text_dim >= 1, "bad width");
    DYN_CHECK(affine_pairs >= 1, "at least one affine application per block");
    DYN_CHECK(use_c_affine || use_s_affine, "at least one affine path must stay enabled");
  }
};

inline nlohmann::json generator_config_json(const GeneratorConfig& cfg) {
  return {{"image_size", cfg.image_size},
          {"levels", cfg.levels},
          {"channels", cfg.channels},
          {"text_dim", cfg.text_dim},
          {"heads", cfg.heads},
          {"head_channels", cfg.head_channels},
          {"comp_dim", cfg.comp_dim},
          {"comp_hidden", cfg.comp_hidden},
          {"affine_hidden", cfg.affine_hidden},
          {"affine_pairs", cfg.affine_pairs},
          {"use_comp_pred", cfg.use_comp_pred},
          {"fixed_alpha", cfg.fixed_alpha},
          {"use_c_affine", cfg.use_c_affine},
          {"use_s_affine", cfg.use_s_affine},
          {"use_dcblock", cfg.use_dcblock},
          {"use_semantic_decoder", cfg.use_semantic_decoder}};
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.image_size = j.at("image_size");
  c.levels = j.at("levels");
  c.channels = j.at("channels").get<std::vector<std::int64_t>>();
  c.text_dim = j.at("text_dim");
  c.heads = j.at("heads");
  c.head_channels = j.at("head_channels");
  c.comp_dim = j.at("comp_dim");
  c.comp_hidden = j.at("comp_hidden");
  c.affine_hidden = j.at("affine_hidden");
  c.affine_pairs = j.at("affine_pairs");
  c.use_comp_pred = j.at("use_comp_pred");
  c.fixed_alpha = j.at("fixed_alpha");
  c.use_c_affine = j.at("use_c_affine");
  c.use_s_affine = j.at("use_s_affine");
  c.use_dcblock = j.at("use_dcblock");
  c.use_semantic_decoder = j.at("use_semantic_decoder");
  return c;
}

// ---- text-conditioned channel affine (gamma_c * x + theta_c) --------------
//
// Two one-hidden-layer MLPs on the sentence vector produce one gamma and one
// theta per channel. Final layers start near the identity (gamma 1, theta 0)
// with tiny random weights so every parameter still draws gradient at init.
template <class S>
struct CAffine {
  Linear<S> g1, g2, t1, t2;

  CAffine() = default;
  CAffine(Rng& rng, std::int64_t text_dim, std::int64_t ch, std::int64_t hidden) {
    g1 = Linear<S>(rng, text_dim, hidden);
    g2 = Linear<S>(rng, hidden, ch);
    g2.w = init::gaussian<S>(rng, {ch, hidden}, 1e-3);
    for (auto& v : g2.b.mutable_data()) v = S(1);
    t1 = Linear<S>(rng, text_dim, hidden);
    t2 = Linear<S>(rng, hidden, ch);
    t2.w = init::gaussian<S>(rng, {ch, hidden}, 1e-3);
  }

  Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& t) const {
    std::int64_t n = x.dim(0), c = x.dim(1);
    Tensor<S> gm = reshape(g2.forward(leaky_relu(g1.forward(t), S(0.2))), {n, c, 1, 1});
    Tensor<S> th = reshape(t2.forward(leaky_relu(t1.forward(t), S(0.2))), {n, c, 1, 1});
    return add(mul(x, gm), th);
  }
  void params(ParamList<S>& out, const std::string& p) const {
    g1.params(out, p + ".g1");
    g2.params(out, p + ".g2");
    t1.params(out, p + ".t1");
    t2.params(out, p + ".t2");
  }
};

// ---- spatial affine (gamma_hw * x + theta_hw) ------------------------------
//
// Two convolutions map the queried feature f to one gamma and one theta per
// pixel, broadcast over channels. Same near-identity start as CAffine.
template <class S>
struct SAffine {
  Conv2d<S> cg, ct;

  SAffine() = default;
  SAffine(Rng& rng, std::int64_t f_channels) {
    cg = Conv2d<S>(rng, f_channels, 1, 3, 1, 1, true, 1e-3);
    for (auto& v : cg.b.mutable_data()) v = S(1);
    ct = Conv2d<S>(rng, f_channels, 1, 3, 1, 1, true, 1e-3);
  }

  Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& f) const {
    return add(mul(x, cg.forward(f)), ct.forward(f));
  }
  void params(ParamList<S>& out, const std::string& p) const {
    cg.params(out, p + ".cg");
    ct.params(out, p + ".ct");
  }
};

// ---- dynamic convolution query ---------------------------------------------
//
// Each of `heads` kernels is modulated per input channel by phi, omega from
// the sentence vector: Mod(k) = phi_ci * k + omega_ci, shared across the k*k
// taps. conv(s, Mod(k)) decomposes exactly into conv(s * phi, k) plus the
// omega-weighted window sum of s, which keeps the kernel batch-independent.
template <class S>
struct DcQuery {
  Tensor<S> base;  // (heads*m, cin, k, k)
  Linear<S> p1, p2, o1, o2;
  std::int64_t heads = 0, m = 0, cin = 0, ksize = 3;

  DcQuery() = default;
  DcQuery(Rng& rng, std::int64_t cin_, std::int64_t text_dim, std::int64_t heads_,
          std::int64_t m_, std::int64_t hidden, std::int64_t ksize_ = 3)
      : heads(heads_), m(m_), cin(cin_), ksize(ksize_) {
    DYN_CHECK(ksize == 1 || ksize == 3, "dynamic conv supports 1x1 or 3x3 kernels");
    base = init::orthogonal_conv<S>(rng, heads * m, cin, ksize);
    p1 = Linear<S>(rng, text_dim, hidden);
    p2 = Linear<S>(rng, hidden, heads * cin);
    p2.w = init::gaussian<S>(rng, {heads * cin, hidden}, 1e-3);
    for (auto& v : p2.b.mutable_data()) v = S(1);
    o1 = Linear<S>(rng, text_dim, hidden);
    o2 = Linear<S>(rng, hidden, heads * cin);
    o2.w = init::gaussian<S>(rng, {heads * cin, hidden}, 1e-3);
  }

  // Per-sample modulation coefficients, each (N, heads*cin).
  std::pair<Tensor<S>, Tensor<S>> modulation(const Tensor<S>& t) const {
    Tensor<S> phi = p2.forward(leaky_relu(p1.forward(t), S(0.2)));
    Tensor<S> omg = o2.forward(leaky_relu(o1.forward(t), S(0.2)));
    return {phi, omg};
  }

  // Queried feature (N, heads*m, H, W); optionally the per-head channel-mean
  // response maps (N, heads, H, W).
  Tensor<S> forward(const Tensor<S>& s, const Tensor<S>& t, Tensor<S>* attn = nullptr) const {
    std::int64_t n = s.dim(0);
    auto [phi, omg] = modulation(t);
    Tensor<S> win = ksize == 3 ? boxsum3x3(s) : s;
    std::vector<Tensor<S>> outs, means;
    outs.reserve(static_cast<size_t>(heads));
    std::int64_t pad = ksize / 2;
    for (std::int64_t h = 0; h < heads; ++h) {
      Tensor<S> ph = reshape(slice(phi, 1, h * cin, cin), {n, cin, 1, 1});
      Tensor<S> oh = reshape(slice(omg, 1, h * cin, cin), {n, cin, 1, 1});
      Tensor<S> kh = slice(base, 0, h * m, m);
      Tensor<S> head = conv2d(mul(s, ph), kh, 1, pad);
      head = add(head, sum(mul(win, oh), {1}, true));
      if (attn) means.push_back(mean(head, {1}, true));
      outs.push_back(head);
    }
    if (attn) *attn = concat(means, 1);
    return concat(outs, 1);
  }

  // Text-independent replacement used by the ordinary-conv ablation.
  Tensor<S> forward_static(const Tensor<S>& s, Tensor<S>* attn = nullptr) const {
    Tensor<S> out = conv2d(s, base, 1, ksize / 2);
    if (attn) {
      std::vector<Tensor<S>> means;
      for (std::int64_t h = 0; h < heads; ++h)
        means.push_back(mean(slice(out, 1, h * m, m), {1}, true));
      *attn = concat(means, 1);
    }
    return out;
  }

  void params(ParamList<S>& out, const std::string& p, bool text_paths) const {
    out.emplace_back(p + ".base", base);
    if (!text_paths) return;
    p1.params(out, p + ".p1");
    p2.params(out, p + ".p2");
    o1.params(out, p + ".o1");
    o2.params(out, p + ".o2");
  }
};

// ---- decoder building blocks -----------------------------------------------

// Upsample, concat the matching encoder skip, merge with a 1x1 conv, then a
// 3x3 conv. The semantic decoder normalizes; the target decoder relies on its
// affine fusion instead.
template <class S>
struct UpBlock {
  Conv2d<S> merge, conv;
  InstanceNorm<S> norm;

  UpBlock() = default;
  UpBlock(Rng& rng, std::int64_t in_ch, std::int64_t skip_ch, std::int64_t out_ch)
      : merge(Conv2d<S>::ortho(rng, in_ch + skip_ch, out_ch, 1, 1, 0)),
        conv(Conv2d<S>::ortho(rng, out_ch, out_ch, 3, 1, 1)),
        norm(out_ch) {}

  Tensor<S> forward(const Tensor<S>& state, const Tensor<S>& skip) const {
    Tensor<S> x = merge.forward(concat<S>({upsample2x(state), skip}, 1));
    return leaky_relu(norm.forward(conv.forward(x)), S(0.2));
  }
  void params(ParamList<S>& out, const std::string& p) const {
    merge.params(out, p + ".merge");
    conv.params(out, p + ".conv");
    norm.params(out, p + ".norm");
  }
};

template <class S>
struct DeBlock {
  Conv2d<S> merge, conv;
  std::vector<CAffine<S>> ca;
  std::vector<SAffine<S>> sa;
  DcQuery<S> dc;
  bool has_c = true, has_s = true, dynamic = true;

  DeBlock() = default;
  DeBlock(Rng& rng, const GeneratorConfig& cfg, std::int64_t in_ch, std::int64_t skip_ch,
          std::int64_t out_ch, std::int64_t sem_ch)
      : merge(Conv2d<S>::ortho(rng, in_ch + skip_ch, out_ch, 1, 1, 0)),
        conv(Conv2d<S>::ortho(rng, out_ch, out_ch, 3, 1, 1)),
        has_c(cfg.use_c_affine),
        has_s(cfg.use_s_affine),
        dynamic(cfg.use_dcblock) {
    for (std::int64_t i = 0; i < cfg.affine_pairs; ++i) {
      if (has_c) ca.emplace_back(rng, cfg.text_dim, out_ch, cfg.affine_hidden);
      if (has_s) sa.emplace_back(rng, cfg.heads * cfg.head_channels);
    }
    if (has_s)
      dc = DcQuery<S>(rng, sem_ch, cfg.text_dim, cfg.heads, cfg.head_channels, cfg.affine_hidden);
  }

  // alpha: (N, out_ch) mixing weights; sem: semantic map at the output resolution.
  Tensor<S> forward(const Tensor<S>& state, const Tensor<S>& skip, const Tensor<S>& t,
                    const Tensor<S>& sem, const Tensor<S>& alpha, Tensor<S>* attn = nullptr) const {
    Tensor<S> x = conv.forward(merge.forward(concat<S>({upsample2x(state), skip}, 1)));
    Tensor<S> f;
    if (has_s) f = dynamic ? dc.forward(sem, t, attn) : dc.forward_static(sem, attn);
    std::int64_t n = x.dim(0), c = x.dim(1);
    for (size_t i = 0; i < static_cast<size_t>(std::max(ca.size(), sa.size())); ++i) {
      Tensor<S> fused;
      if (has_c && has_s) {
        Tensor<S> a = ca[i].forward(x, t), b = sa[i].forward(x, f);
        Tensor<S> al = reshape(alpha, {n, c, 1, 1});
        fused = add(mul(a, al), sub(b, mul(b, al)));
      } else {
        fused = has_c ? ca[i].forward(x, t) : sa[i].forward(x, f);
      }
      x = leaky_relu(fused, S(0.2));
    }
    return x;
  }
  void params(ParamList<S>& out, const std::string& p) const {
    merge.params(out, p + ".merge");
    conv.params(out, p + ".conv");
    for (size_t i = 0; i < ca.size(); ++i) ca[i].params(out, p + ".ca" + std::to_string(i));
    for (size_t i = 0; i < sa.size(); ++i) sa[i].params(out, p + ".sa" + std::to_string(i));
    if (has_s) dc.params(out, p + ".dc", dynamic);
  }
};

// ---- composition predictor --------------------------------------------------
//
// Pools a visual code V from the bottleneck, maps the sentence to T, crosses
// them through a joint MLP into V', T', then predicts one sigmoid weight per
// decoder channel from (V, T, V'-T', V'*T'). Zeroing the final MLP gives the
// neutral alpha = 0.5 everywhere.
template <class S>
struct CompPred {
  Conv2d<S> va, vb;
  Linear<S> t1, t2, j1, j2, f1, f2;
  std::int64_t comp_dim = 0;

  CompPred() = default;
  CompPred(Rng& rng, std::int64_t feat_ch, const GeneratorConfig& cfg)
      : va(Conv2d<S>::ortho(rng, feat_ch, cfg.comp_dim, 3, 1, 1)),
        vb(Conv2d<S>::ortho(rng, cfg.comp_dim, cfg.comp_dim, 3, 1, 1)),
        t1(rng, cfg.text_dim, cfg.comp_hidden),
        t2(rng, cfg.comp_hidden, cfg.comp_dim),
        j1(rng, 2 * cfg.comp_dim, cfg.comp_hidden),
        j2(rng, cfg.comp_hidden, 2 * cfg.comp_dim),
        f1(rng, 4 * cfg.comp_dim, cfg.comp_hidden),
        f2(rng, cfg.comp_hidden, cfg.alpha_total()),
        comp_dim(cfg.comp_dim) {}

  // (N, alpha_total) in (0,1).
  Tensor<S> forward(const Tensor<S>& feat4, const Tensor<S>& t) const {
    std::int64_t n = feat4.dim(0);
    Tensor<S> v = leaky_relu(vb.forward(leaky_relu(va.forward(feat4), S(0.2))), S(0.2));
    v = reshape(mean(v, {2, 3}, false), {n, comp_dim});
    Tensor<S> tt = t2.forward(leaky_relu(t1.forward(t), S(0.2)));
    Tensor<S> vt = j2.forward(leaky_relu(j1.forward(concat<S>({v, tt}, 1)), S(0.2)));
    Tensor<S> vp = slice(vt, 1, 0, comp_dim), tp = slice(vt, 1, comp_dim, comp_dim);
    Tensor<S> z = concat<S>({v, tt, sub(vp, tp), mul(vp, tp)}, 1);
    return sigmoid(f2.forward(leaky_relu(f1.forward(z), S(0.2))));
  }
  void params(ParamList<S>& out, const std::string& p) const {
    va.params(out, p + ".va");
    vb.params(out, p + ".vb");
    t1.params(out, p + ".t1");
    t2.params(out, p + ".t2");
    j1.params(out, p + ".j1");
    j2.params(out, p + ".j2");
    f1.params(out, p + ".f1");
    f2.params(out, p + ".f2");
  }
};

// ---- generator ---------------------------------------------------------------

template <class S>
struct Generator {
  GeneratorConfig cfg;
  Conv2d<S> stem;
  InstanceNorm<S> stem_norm;
  std::vector<Conv2d<S>> enc;
  std::vector<InstanceNorm<S>> enc_norm;
  Conv2d<S> sem_init;
  InstanceNorm<S> sem_init_norm;
  std::vector<UpBlock<S>> sem;
  CompPred<S> comp;
  Conv2d<S> dec_init;
  std::vector<DeBlock<S>> dec;
  Conv2d<S> to_rgb;

  Generator() = default;
  Generator(Rng& rng, GeneratorConfig c) : cfg(std::move(c)) {
    cfg.validate();
    std::int64_t sw = cfg.stem_width();
    stem = Conv2d<S>::ortho(rng, 3, sw, 3, 1, 1);
    stem_norm = InstanceNorm<S>(sw);
    std::int64_t in = sw;
    for (std::int64_t i = 0; i < cfg.levels; ++i) {
      std::int64_t out = cfg.channels[static_cast<size_t>(i)];
      enc.push_back(Conv2d<S>::ortho(rng, in, out, 4, 2, 1));
      enc_norm.emplace_back(out);
      in = out;
    }
    std::int64_t bott = cfg.channels.back();
    if (cfg.use_semantic_decoder) {
      sem_init = Conv2d<S>::ortho(rng, bott, bott, 3, 1, 1);
      sem_init_norm = InstanceNorm<S>(bott);
      std::int64_t s_in = bott;
      for (std::int64_t n = 0; n < cfg.levels; ++n) {
        std::int64_t out = cfg.decoder_width(n);
        std::int64_t skip = n + 1 < cfg.levels ? cfg.channels[static_cast<size_t>(cfg.levels - 2 - n)]
                                               : sw;
        sem.emplace_back(rng, s_in, skip, out);
        s_in = out;
      }
    }
    if (cfg.use_comp_pred && cfg.use_c_affine && cfg.use_s_affine)
      comp = CompPred<S>(rng, bott, cfg);
    dec_init = Conv2d<S>::ortho(rng, bott, bott, 3, 1, 1);
    std::int64_t d_in = bott;
    for (std::int64_t n = 0; n < cfg.levels; ++n) {
      std::int64_t out = cfg.decoder_width(n);
      std::int64_t skip = n + 1 < cfg.levels ? cfg.channels[static_cast<size_t>(cfg.levels - 2 - n)]
                                             : sw;
      dec.emplace_back(rng, cfg, d_in, skip, out, out);
      d_in = out;
    }
    to_rgb = Conv2d<S>::ortho(rng, d_in, 3, 3, 1, 1);
  }

  // Feature pyramid: maps[0] at input resolution, maps[i] at size/2^i; the
  // last entry is the 4x4 bottleneck.
  std::vector<Tensor<S>> encode_source(const Tensor<S>& x) const {
    DYN_CHECK(x.ndim() == 4 && x.dim(1) == 3 && x.dim(2) == cfg.image_size &&
                  x.dim(3) == cfg.image_size,
              "source image must be (N,3,size,size)");
    std::vector<Tensor<S>> maps;
    maps.push_back(leaky_relu(stem_norm.forward(stem.forward(x)), S(0.2)));
    for (size_t i = 0; i < enc.size(); ++i)
      maps.push_back(leaky_relu(enc_norm[i].forward(enc[i].forward(maps.back())), S(0.2)));
    return maps;
  }

  // Semantic maps, one per resolution from the bottleneck up to full size
  // (levels+1 entries); decoder block n consumes entry n+1.
  std::vector<Tensor<S>> semantic_decode(const std::vector<Tensor<S>>& pyr) const {
    std::vector<Tensor<S>> maps;
    if (!cfg.use_semantic_decoder) {
      for (std::int64_t i = cfg.levels; i >= 0; --i) maps.push_back(pyr[static_cast<size_t>(i)]);
      return maps;
    }
    maps.push_back(leaky_relu(sem_init_norm.forward(sem_init.forward(pyr.back())), S(0.2)));
    for (std::int64_t n = 0; n < cfg.levels; ++n)
      maps.push_back(sem[static_cast<size_t>(n)].forward(
          maps.back(), pyr[static_cast<size_t>(cfg.levels - 1 - n)]));
    return maps;
  }

  // One (N, width) alpha vector per decoder block.
  std::vector<Tensor<S>> comp_alphas(const Tensor<S>& feat4, const Tensor<S>& t) const {
    std::vector<Tensor<S>> alphas;
    std::int64_t n = feat4.dim(0);
    if (cfg.use_comp_pred && cfg.use_c_affine && cfg.use_s_affine) {
      Tensor<S> all = comp.forward(feat4, t);
      std::int64_t off = 0;
      for (std::int64_t b = 0; b < cfg.levels; ++b) {
        std::int64_t w = cfg.decoder_width(b);
        alphas.push_back(slice(all, 1, off, w));
        off += w;
      }
    } else {
      for (std::int64_t b = 0; b < cfg.levels; ++b)
        alphas.push_back(Tensor<S>::full({n, cfg.decoder_width(b)}, S(cfg.fixed_alpha)));
    }
    return alphas;
  }

  // Edited image in [-1,1], same shape as x. attn, when requested, receives
  // the per-head response maps of the last decoder block (N, heads, size, size).
  Tensor<S> generate(const Tensor<S>& x, const Tensor<S>& t, Tensor<S>* attn = nullptr) const {
    DYN_CHECK(t.ndim() == 2 && t.dim(0) == x.dim(0) && t.dim(1) == cfg.text_dim,
              "sentence embedding must be (N,text_dim)");
    std::vector<Tensor<S>> pyr = encode_source(x);
    std::vector<Tensor<S>> sems = semantic_decode(pyr);
    std::vector<Tensor<S>> alphas = comp_alphas(pyr.back(), t);
    Tensor<S> state = leaky_relu(dec_init.forward(pyr.back()), S(0.2));
    for (std::int64_t n = 0; n < cfg.levels; ++n) {
      Tensor<S>* want = (attn && n + 1 == cfg.levels) ? attn : nullptr;
      state = dec[static_cast<size_t>(n)].forward(state, pyr[static_cast<size_t>(cfg.levels - 1 - n)],
                                                  t, sems[static_cast<size_t>(n + 1)],
                                                  alphas[static_cast<size_t>(n)], want);
    }
    return tanh(to_rgb.forward(state));
  }

  ParamList<S> params() const {
    ParamList<S> out;
    stem.params(out, "generator.enc.stem");
    stem_norm.params(out, "generator.enc.stem_norm");
    for (size_t i = 0; i < enc.size(); ++i) {
      enc[i].params(out, "generator.enc.s" + std::to_string(i));
      enc_norm[i].params(out, "generator.enc.n" + std::to_string(i));
    }
    if (cfg.use_semantic_decoder) {
      sem_init.params(out, "generator.sem.init");
      sem_init_norm.params(out, "generator.sem.init_norm");
      for (size_t i = 0; i < sem.size(); ++i)
        sem[i].params(out, "generator.sem.up" + std::to_string(i));
    }
    if (cfg.use_comp_pred && cfg.use_c_affine && cfg.use_s_affine)
      comp.params(out, "generator.comp");
    dec_init.params(out, "generator.dec.init");
    for (size_t i = 0; i < dec.size(); ++i) dec[i].params(out, "generator.dec.b" + std::to_string(i));
    to_rgb.params(out, "generator.dec.to_rgb");
    return out;
  }

  nlohmann::json config_json() const { return generator_config_json(cfg); }
  static GeneratorConfig config_from_json(const nlohmann::json& j) {
    return generator_config_from_json(j);
  }
};

}  // namespace dynedit
