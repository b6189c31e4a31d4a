#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dynedit/nn.hpp"
#include "dynedit/serialize.hpp"

namespace dynedit::text {

// ---- vocabulary -------------------------------------------------------------
//
// Ids are contiguous from 0. Id 0 is padding, id 1 the unknown token; real
// words follow in sorted order so vocabulary construction is deterministic.
// File format: one token per line, line number = id.
class Vocab {
 public:
  static constexpr std::int64_t kPad = 0, kUnk = 1;

  static Vocab build(const std::vector<std::string>& captions);
  static Vocab from_tokens(std::vector<std::string> tokens);
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  std::int64_t id(const std::string& token) const;  // kUnk when missing
  bool contains(const std::string& token) const;
  const std::string& token(std::int64_t id) const;
  std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int64_t> ids_;
};

// Right-pads with the padding id to exactly max_len. Unknown words map to the
// unknown id and are reported through `unknown` (and a stderr warning) —
// callers in training treat that as data corruption.
std::vector<std::int64_t> tokenize(const std::string& caption, const Vocab& vocab, int max_len,
                                   int* unknown = nullptr);
std::string detokenize(const std::vector<std::int64_t>& ids, const Vocab& vocab);

// ---- encoders ---------------------------------------------------------------

template <class S>
struct TextEncoder {
  EmbeddingTable<S> emb;
  BiRnn<S> rnn;
  Linear<S> sent;

  TextEncoder() = default;
  TextEncoder(Rng& rng, std::int64_t vocab, std::int64_t dim)
      : emb(rng, vocab, dim), rnn(rng, dim, dim), sent(rng, 2 * dim, dim) {
    // a nonzero output bias keeps the all-padding (empty caption) embedding
    // away from the zero vector, so normalization always yields unit norm
    for (auto& b : sent.b.mutable_data()) b = static_cast<S>(rng.gaussian(0.0, 0.02));
  }

  // ids: (N*T) row-major, mask 1 for real tokens -> unit-norm rows (N, dim)
  Tensor<S> sentence(const std::vector<std::int64_t>& ids, std::int64_t N, std::int64_t T,
                     const Tensor<S>& mask) const {
    Tensor<S> w = rnn.forward(emb.forward(ids, N, T), mask);  // (N,T,2*dim), zero at pads
    Tensor<S> pooled = sum(w, {1}, /*keepdim=*/false);        // (N,2*dim)
    Tensor<S> len = sum(mask, {1}, /*keepdim=*/true);         // (N,1)
    pooled = mul(pooled, pow_scalar(add_scalar(len, S(1e-8)), S(-1)));  // safe for all-pad rows
    return l2_normalize_rows(sent.forward(pooled));
  }

  void params(ParamList<S>& out, const std::string& p) const {
    emb.params(out, p + ".emb");
    rnn.params(out, p + ".rnn");
    sent.params(out, p + ".sent");
  }
};

template <class S>
struct ImageEncoder {
  Conv2d<S> c1, c2, c3, c4;
  Linear<S> proj;

  ImageEncoder() = default;
  ImageEncoder(Rng& rng, std::int64_t base, std::int64_t dim)
      : c1(rng, 3, base, 4, 2, 1),
        c2(rng, base, base * 2, 4, 2, 1),
        c3(rng, base * 2, base * 4, 4, 2, 1),
        c4(rng, base * 4, base * 8, 4, 2, 1),
        proj(rng, base * 8, dim) {}

  // (N,3,64,64) in [-1,1] -> unit-norm rows (N, dim)
  Tensor<S> embed(const Tensor<S>& img) const {
    Tensor<S> h = leaky_relu(c1.forward(img), S(0.2));
    h = leaky_relu(c2.forward(h), S(0.2));
    h = leaky_relu(c3.forward(h), S(0.2));
    h = leaky_relu(c4.forward(h), S(0.2));   // (N, base*8, 4, 4)
    h = mean(h, {2, 3}, /*keepdim=*/false);  // global average pool
    return l2_normalize_rows(proj.forward(h));
  }

  void params(ParamList<S>& out, const std::string& p) const {
    c1.params(out, p + ".c1");
    c2.params(out, p + ".c2");
    c3.params(out, p + ".c3");
    c4.params(out, p + ".c4");
    proj.params(out, p + ".proj");
  }
};

// ---- similarity model ---------------------------------------------------------

struct SimilarityConfig {
  std::int64_t text_dim = 128;
  std::int64_t image_base = 32;
  int max_len = 16;
};

// Shared text/image embedding space; frozen after pretraining. All public
// encode paths are usable both with and without gradient recording — the
// editing loss backpropagates through the image branch into the generator
// while the parameters themselves stay fixed.
template <class S>
struct SimilarityModel {
  Vocab vocab;
  SimilarityConfig cfg;
  TextEncoder<S> text;
  ImageEncoder<S> image;

  SimilarityModel() = default;
  SimilarityModel(Rng& rng, Vocab v, SimilarityConfig c)
      : vocab(std::move(v)),
        cfg(c),
        text(rng, vocab.size(), c.text_dim),
        image(rng, c.image_base, c.text_dim) {}

  Tensor<S> encode_captions(const std::vector<std::string>& captions) const {
    std::int64_t N = static_cast<std::int64_t>(captions.size()), T = cfg.max_len;
    std::vector<std::int64_t> ids;
    ids.reserve(static_cast<size_t>(N * T));
    std::vector<S> mask(static_cast<size_t>(N * T), S(0));
    for (std::int64_t i = 0; i < N; ++i) {
      auto row = tokenize(captions[static_cast<size_t>(i)], vocab, cfg.max_len);
      for (std::int64_t t = 0; t < T; ++t) {
        ids.push_back(row[static_cast<size_t>(t)]);
        if (row[static_cast<size_t>(t)] != Vocab::kPad)
          mask[static_cast<size_t>(i * T + t)] = S(1);
      }
    }
    return text.sentence(ids, N, T, Tensor<S>({N, T}, std::move(mask)));
  }

  Tensor<S> embed_images(const Tensor<S>& imgs) const { return image.embed(imgs); }

  // Cosine similarity of one image against one caption.
  double similarity(const Tensor<S>& img, const std::string& caption) const {
    GradGuard off(false);
    Tensor<S> ie = embed_images(img);
    Tensor<S> te = encode_captions({caption});
    return static_cast<double>(sum(mul(ie, te)).item());
  }

  ParamList<S> params() const {
    ParamList<S> out;
    text.params(out, "text");
    image.params(out, "image");
    return out;
  }

  // FNV-1a over raw parameter bytes, for freeze verification.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& [name, t] : params())
      for (S v : t.data()) {
        unsigned char bytes[sizeof(S)];
        std::memcpy(bytes, &v, sizeof(S));
        for (unsigned char b : bytes) {
          h ^= b;
          h *= 1099511628211ULL;
        }
      }
    return h;
  }

  void save(const std::string& path) const {
    CheckpointWriter w;
    auto ps = params();
    w.add_params(ps);
    json meta;
    meta["kind"] = "similarity";
    meta["vocab"] = vocab.tokens();
    meta["text_dim"] = cfg.text_dim;
    meta["image_base"] = cfg.image_base;
    meta["max_len"] = cfg.max_len;
    w.set_meta(meta);
    w.write(path);
  }

  static SimilarityModel load(const std::string& path) {
    CheckpointReader r(path);
    DYN_CHECK(r.meta().value("kind", "") == "similarity",
              path << " is not a similarity checkpoint");
    SimilarityConfig c;
    c.text_dim = r.meta()["text_dim"].get<std::int64_t>();
    c.image_base = r.meta()["image_base"].get<std::int64_t>();
    c.max_len = r.meta()["max_len"].get<int>();
    Rng rng(0);
    SimilarityModel m(rng, Vocab::from_tokens(r.meta()["vocab"].get<std::vector<std::string>>()),
                      c);
    auto ps = m.params();
    r.load_params(ps);
    return m;
  }
};

// Symmetric InfoNCE over a batch of matched (image, caption) embedding rows.
template <class S>
Tensor<S> info_nce(const Tensor<S>& img_emb, const Tensor<S>& txt_emb, S tau) {
  std::int64_t N = img_emb.dim(0);
  Tensor<S> eye = Tensor<S>::zeros({N, N});
  for (std::int64_t i = 0; i < N; ++i) eye.mutable_data()[static_cast<size_t>(i * N + i)] = S(1);

  auto ce_rows = [&](const Tensor<S>& logits) {
    Tensor<S> mx = rowmax_detached(logits);                       // (N,1) constant
    Tensor<S> z = sub(logits, mx);
    Tensor<S> lse = add(log(sum(exp(z), {1}, true)), mx);         // (N,1)
    Tensor<S> diag = sum(mul(logits, eye), {1}, true);            // (N,1)
    return mean(sub(lse, diag));
  };
  Tensor<S> l_i2t = ce_rows(scale(matmul(img_emb, txt_emb, false, true), S(1) / tau));
  Tensor<S> l_t2i = ce_rows(scale(matmul(txt_emb, img_emb, false, true), S(1) / tau));
  return scale(add(l_i2t, l_t2i), S(0.5));
}

// ---- pretraining ---------------------------------------------------------------

struct PretrainConfig {
  int epochs = 30;
  int batch = 64;
  double lr = 2e-4;
  double tau = 0.07;
  std::uint64_t seed = 1;
  // stop once held-out accuracy reaches this (0 disables); keeps wall time
  // bounded on slow machines while leaving the full epoch budget available
  double early_stop_accuracy = 0.97;
  SimilarityConfig model;
};

struct PretrainReport {
  double heldout_accuracy = 0;  // matched-vs-mismatched, chance 0.5
  double init_loss = 0;         // symmetric InfoNCE on the first batch, untrained
  double final_loss = 0;
  int steps = 0;
  int epochs_run = 0;
  double seconds = 0;
};

// Trains on (image, caption) pairs from the train split of `data_dir` (both
// source and edit-target pairs), evaluates matched-vs-mismatched accuracy on
// the test split, and returns the frozen model. Aborts with a diagnostic if
// the loss turns non-finite.
PretrainReport pretrain_contrastive(const std::string& data_dir, const PretrainConfig& cfg,
                                    SimilarityModel<float>& out, std::ostream* log = nullptr);

// Matched-vs-mismatched accuracy on the test split: for each held-out pair,
// the matched caption must out-score a random different held-out caption.
double heldout_pair_accuracy(const SimilarityModel<float>& model, const std::string& data_dir,
                             std::uint64_t seed, int limit = 0);

}  // namespace dynedit::text
