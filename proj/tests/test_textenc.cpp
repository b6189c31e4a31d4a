#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dynedit/png_io.hpp"
#include "dynedit/synthscene.hpp"
#include "dynedit/textenc.hpp"

using namespace dynedit;
using namespace dynedit::text;
namespace fs = std::filesystem;

// One small dataset shared by the expensive cases in this file.
static std::string shared_dataset() {
  static std::string dir;
  if (dir.empty()) {
    fs::path p = fs::temp_directory_path() / "dynedit_textenc_ds";
    fs::remove_all(p);
    synth::DatasetParams dp;
    dp.out_dir = p.string();
    dp.count = 220;
    dp.test_fraction = 0.2;
    dp.seed = 21;
    synth::generate_dataset(dp);
    dir = p.string();
  }
  return dir;
}

TEST_CASE("vocabulary: special ids, deterministic order, text file round-trip") {
  Vocab v = Vocab::build({"a red circle on a green background", "a blue square"});
  CHECK(v.token(Vocab::kPad) == "<pad>");
  CHECK(v.token(Vocab::kUnk) == "<unk>");
  CHECK(v.id("<pad>") == 0);
  // sorted word order after the specials
  CHECK(v.id("a") < v.id("background"));
  CHECK(v.id("background") < v.id("blue"));
  CHECK(v.id("nonexistent") == Vocab::kUnk);

  Vocab v2 = Vocab::build({"a blue square", "a red circle on a green background"});
  CHECK(v2.tokens() == v.tokens());  // order-independent build

  fs::path p = fs::temp_directory_path() / "dynedit_vocab_test.txt";
  v.save(p.string());
  // line number = id
  std::ifstream f(p.string());
  std::string line;
  std::getline(f, line);
  CHECK(line == "<pad>");
  std::getline(f, line);
  CHECK(line == "<unk>");
  Vocab v3 = Vocab::load(p.string());
  CHECK(v3.tokens() == v.tokens());
  fs::remove(p);
}

TEST_CASE("tokenize pads right to exactly max_len") {
  // pinned example: "a red circle" with {a:1, red:2, circle:3}, max_len 5
  Vocab v = Vocab::from_tokens({"<pad>", "a", "red", "circle"});
  auto ids = tokenize("a red circle", v, 5);
  CHECK(ids == std::vector<std::int64_t>{1, 2, 3, 0, 0});

  auto empty = tokenize("", v, 4);
  CHECK(empty == std::vector<std::int64_t>{0, 0, 0, 0});

  int unk = 0;
  auto with_unk = tokenize("a zebra circle", v, 5, &unk);
  CHECK(unk == 1);
  CHECK(with_unk[1] == Vocab::kUnk);

  CHECK_THROWS(tokenize("a red circle", v, 2));  // max_len too small
}

TEST_CASE("detokenize inverts tokenize for every dataset caption") {
  auto recs = synth::load_manifest(shared_dataset());
  std::vector<std::string> caps;
  for (const auto& r : recs) {
    caps.push_back(r.src_caption);
    caps.push_back(r.tgt_caption);
  }
  Vocab v = Vocab::build(caps);
  for (const auto& c : caps) CHECK(detokenize(tokenize(c, v, 16), v) == c);
}

TEST_CASE("sentence embeddings are unit-norm and deterministic") {
  Rng rng(3);
  Vocab v = Vocab::build({"a red circle on a green background"});
  SimilarityConfig cfg;
  SimilarityModel<float> m(rng, v, cfg);

  std::vector<std::string> caps = {"a red circle on a green background",
                                   "a red circle on a green background", ""};
  Tensor<float> e = m.encode_captions(caps);
  REQUIRE(e.shape() == Shape{3, 128});
  for (int i = 0; i < 3; ++i) {
    double n = 0;
    for (int d = 0; d < 128; ++d) {
      double x = e.data()[i * 128 + d];
      n += x * x;
    }
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
  }
  // identical inputs, identical rows
  for (int d = 0; d < 128; ++d) CHECK(e.data()[d] == e.data()[128 + d]);

  // bit-stable across calls
  Tensor<float> e2 = m.encode_captions(caps);
  CHECK(e.data() == e2.data());
}

TEST_CASE("similarity is a cosine: bounds, colinear extremes, scale invariance") {
  // colinear / anti-colinear unit vectors
  Tensor<float> a({1, 4}, {0.5f, 0.5f, 0.5f, 0.5f});
  Tensor<float> an({1, 4}, {-0.5f, -0.5f, -0.5f, -0.5f});
  Tensor<float> na = l2_normalize_rows(a);
  CHECK(sum(mul(na, na)).item() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sum(mul(na, l2_normalize_rows(an))).item() == doctest::Approx(-1.0).epsilon(1e-6));

  // normalization kills positive scaling
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    std::vector<float> v(16);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-2, 2));
    Tensor<float> x1({2, 8}, v);
    for (auto& x : v) x *= 37.5f;
    Tensor<float> x2({2, 8}, v);
    Tensor<float> n1 = l2_normalize_rows(x1), n2 = l2_normalize_rows(x2);
    for (size_t i = 0; i < n1.data().size(); ++i)
      CHECK(n1.data()[i] == doctest::Approx(n2.data()[i]).epsilon(1e-5));
  }

  // model similarity stays inside [-1, 1] on arbitrary images
  Vocab v = Vocab::build({"a red circle on a green background"});
  SimilarityModel<float> m(rng, v, SimilarityConfig{});
  for (int t = 0; t < 5; ++t) {
    std::vector<float> img(3 * 64 * 64);
    for (auto& x : img) x = static_cast<float>(rng.uniform(-1, 1));
    double s = m.similarity(Tensor<float>({1, 3, 64, 64}, img),
                            "a red circle on a green background");
    CHECK(s <= 1.0 + 1e-6);
    CHECK(s >= -1.0 - 1e-6);
  }
}

TEST_CASE("symmetric InfoNCE at initialization is ln(batch) within 10%") {
  std::string dir = shared_dataset();
  auto recs = synth::load_manifest(dir);
  std::vector<std::string> caps;
  for (const auto& r : recs) caps.push_back(r.src_caption);
  Rng rng(17);
  SimilarityModel<float> m(rng, Vocab::build(caps), SimilarityConfig{});

  const int B = 64;
  std::vector<float> imgs;
  std::vector<std::string> batch_caps;
  for (int i = 0; i < B; ++i) {
    auto png = read_png((fs::path(dir) / recs[static_cast<size_t>(i)].src_png).string());
    auto t = synth::image_to_tensor(png.rgb);
    imgs.insert(imgs.end(), t.data().begin(), t.data().end());
    batch_caps.push_back(recs[static_cast<size_t>(i)].src_caption);
  }
  GradGuard off(false);
  Tensor<float> ie = m.embed_images(Tensor<float>({B, 3, 64, 64}, std::move(imgs)));
  Tensor<float> te = m.encode_captions(batch_caps);
  double loss = info_nce(ie, te, 0.07f).item();
  double expect = std::log(static_cast<double>(B));
  CAPTURE(loss);
  CHECK(loss > expect * 0.9);
  CHECK(loss < expect * 1.1);
}

TEST_CASE("short pretraining run: loss falls, accuracy beats chance, model freezes") {
  std::string dir = shared_dataset();
  PretrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch = 32;
  cfg.seed = 2;
  cfg.model.image_base = 16;  // small for test speed
  SimilarityModel<float> m;
  PretrainReport rep = pretrain_contrastive(dir, cfg, m);

  CHECK(std::isfinite(rep.final_loss));
  CHECK(rep.final_loss < rep.init_loss * 0.5);
  CHECK(rep.heldout_accuracy > 0.75);  // chance is 0.5; full-config bar is 0.9
  CHECK(rep.steps > 0);

  // inference does not mutate parameters
  std::uint64_t before = m.checksum();
  (void)heldout_pair_accuracy(m, dir, 1);
  std::vector<float> noise(3 * 64 * 64, 0.1f);
  (void)m.similarity(Tensor<float>({1, 3, 64, 64}, noise), "a red circle on a blue background");
  CHECK(m.checksum() == before);

  // checkpoint round-trip preserves every parameter bit and the vocabulary
  fs::path ck = fs::temp_directory_path() / "dynedit_sim_test.ckpt";
  m.save(ck.string());
  SimilarityModel<float> m2 = SimilarityModel<float>::load(ck.string());
  CHECK(m2.checksum() == before);
  CHECK(m2.vocab.tokens() == m.vocab.tokens());
  auto e1 = m.encode_captions({"a red circle on a green background"});
  auto e2 = m2.encode_captions({"a red circle on a green background"});
  CHECK(e1.data() == e2.data());
  fs::remove(ck);
}
