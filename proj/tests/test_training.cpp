#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dynedit/evalkit.hpp"
#include "dynedit/training.hpp"

using namespace dynedit;
using namespace dynedit::train;
namespace fs = std::filesystem;

namespace {

std::string test_root() {
  static std::string dir = [] {
    std::string d = (fs::temp_directory_path() / "dynedit_train_tests").string();
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// A tiny on-disk dataset plus an untrained (but frozen) scorer: the training
// mechanics under test do not care whether the scorer is any good.
std::string dataset_dir() {
  static std::string dir = [] {
    synth::DatasetParams p;
    p.out_dir = test_root() + "/data";
    p.count = 24;
    p.test_fraction = 0.25;
    p.seed = 11;
    synth::generate_dataset(p);
    return p.out_dir;
  }();
  return dir;
}

std::string sim_path() {
  static std::string path = [] {
    std::vector<std::string> caps;
    for (const auto& r : synth::load_manifest(dataset_dir())) {
      caps.push_back(r.src_caption);
      caps.push_back(r.tgt_caption);
    }
    text::SimilarityConfig sc;
    sc.text_dim = 16;
    sc.image_base = 4;
    Rng rng(21);
    text::SimilarityModel<float> sim(rng, text::Vocab::build(caps), sc);
    std::string p = test_root() + "/sim.ckpt";
    sim.save(p);
    return p;
  }();
  return path;
}

TrainConfig mini_config(std::uint64_t seed = 5) {
  TrainConfig c;
  c.gen.channels = {4, 4, 8, 8};
  c.gen.text_dim = 16;
  c.gen.heads = 2;
  c.gen.head_channels = 2;
  c.gen.comp_dim = 8;
  c.gen.comp_hidden = 12;
  c.gen.affine_hidden = 12;
  c.disc.channels = {4, 4, 8, 8};
  c.disc.text_dim = 16;
  c.disc.proj_dim = 8;
  c.batch = 4;
  c.epochs = 1;
  c.seed = seed;
  c.data_dir = dataset_dir();
  c.sim_checkpoint = sim_path();
  return c;
}

TrainState mini_state(std::uint64_t seed = 5) {
  return TrainState(mini_config(seed), text::SimilarityModel<float>::load(sim_path()));
}

std::vector<std::vector<float>> snapshot(const ParamList<float>& ps) {
  std::vector<std::vector<float>> out;
  for (const auto& [name, p] : ps) out.push_back(p.data());
  return out;
}

int changed_count(const ParamList<float>& ps, const std::vector<std::vector<float>>& before) {
  int n = 0;
  for (size_t i = 0; i < ps.size(); ++i)
    if (ps[i].second.data() != before[i]) ++n;
  return n;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  std::vector<std::string> lines;
  std::string l;
  while (std::getline(f, l)) lines.push_back(l);
  return lines;
}

}  // namespace

TEST_CASE("one step moves both parameter sets") {
  TrainState st = mini_state();
  TrainData data = load_train_data(st.cfg.data_dir, st.sim);
  auto gp = st.g.params();
  auto dp = st.d.params();
  auto g0 = snapshot(gp);
  auto d0 = snapshot(dp);

  StepLog log = train_step(st, make_batch(st, data));
  CHECK(log.step == 1);
  CHECK(std::isfinite(log.d.total));
  CHECK(std::isfinite(log.g.total));

  int gc = changed_count(gp, g0), dc = changed_count(dp, d0);
  CHECK(gc >= static_cast<int>(gp.size() * 9) / 10);
  CHECK(dc >= static_cast<int>(dp.size() * 9) / 10);
}

TEST_CASE("batches draw valid rows and mismatched targets") {
  TrainState st = mini_state();

  // Hand-built data with one-hot caption embeddings: row identity is visible
  // in the embedding itself, so the mismatch rule is checkable exactly.
  TrainData data;
  std::int64_t n = 10, dim = st.cfg.gen.text_dim;
  data.rgb.assign(static_cast<size_t>(n), std::vector<std::uint8_t>(64 * 64 * 3, 0));
  data.train.resize(static_cast<size_t>(n));
  std::vector<float> e(static_cast<size_t>(n * dim), 0.0f);
  for (std::int64_t i = 0; i < n; ++i) e[static_cast<size_t>(i * dim + i)] = 1.0f;
  data.emb = Tensor<float>({n, dim}, std::move(e));

  auto argmax_row = [&](const Tensor<float>& t, std::int64_t i) {
    std::int64_t best = 0;
    for (std::int64_t k = 0; k < t.dim(1); ++k)
      if (t.data()[static_cast<size_t>(i * t.dim(1) + k)] >
          t.data()[static_cast<size_t>(i * t.dim(1) + best)])
        best = k;
    return best;
  };

  TrainBatch<float> b = make_batch(st, data);
  CHECK(b.x.shape() == Shape{4, 3, 64, 64});
  CHECK(b.e.shape() == Shape{4, 16});
  CHECK(b.e_hat.shape() == Shape{4, 16});
  for (int rep = 0; rep < 20; ++rep) {
    b = make_batch(st, data);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(argmax_row(b.e, i) != argmax_row(b.e_hat, i));
  }

  st.cfg.matched_fraction = 1.0;
  b = make_batch(st, data);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(argmax_row(b.e, i) == argmax_row(b.e_hat, i));
}

TEST_CASE("shuffling target captions leaves source-only terms untouched") {
  TrainState st = mini_state();
  TrainData data = load_train_data(st.cfg.data_dir, st.sim);
  TrainBatch<float> b = make_batch(st, data);

  Tensor<float> dl1;
  DLossParts p1 = d_loss(st.g, st.d, b, dl1);

  // Reverse the target-embedding rows: the penalty and the matched-real hinge
  // see only (x, e) and must not move.
  std::int64_t B = b.e_hat.dim(0), D = b.e_hat.dim(1);
  std::vector<float> rev(static_cast<size_t>(B * D));
  for (std::int64_t i = 0; i < B; ++i)
    std::copy(b.e_hat.data().begin() + i * D, b.e_hat.data().begin() + (i + 1) * D,
              rev.begin() + (B - 1 - i) * D);
  TrainBatch<float> shuffled{b.x, b.e, Tensor<float>({B, D}, std::move(rev))};

  Tensor<float> dl2;
  DLossParts p2 = d_loss(st.g, st.d, shuffled, dl2);
  CHECK(p1.penalty == p2.penalty);

  // Swapping the matched captions instead does move the penalty.
  Tensor<float> dl3;
  DLossParts p3 = d_loss(st.g, st.d, {b.x, b.e_hat, b.e}, dl3);
  CHECK(p3.penalty != p1.penalty);
}

TEST_CASE("fixed seed reproduces the loss trajectory for fifty steps") {
  std::vector<double> da, ga, db, gb;
  for (int run = 0; run < 2; ++run) {
    TrainState st = mini_state(17);
    TrainData data = load_train_data(st.cfg.data_dir, st.sim);
    for (int s = 0; s < 50; ++s) {
      StepLog log = train_step(st, make_batch(st, data));
      (run == 0 ? da : db).push_back(log.d.total);
      (run == 0 ? ga : gb).push_back(log.g.total);
    }
  }
  CHECK(da == db);
  CHECK(ga == gb);
}

TEST_CASE("checkpoint resume continues bit-exactly") {
  TrainState st = mini_state(23);
  TrainData data = load_train_data(st.cfg.data_dir, st.sim);
  for (int s = 0; s < 3; ++s) train_step(st, make_batch(st, data));
  std::string ckpt = test_root() + "/mid.ckpt";
  save_checkpoint(st, ckpt);

  std::vector<double> expect;
  for (int s = 0; s < 2; ++s) {
    StepLog log = train_step(st, make_batch(st, data));
    expect.push_back(log.d.total);
    expect.push_back(log.g.total);
  }

  TrainState rs = load_checkpoint(ckpt);
  CHECK(rs.step == 3);
  std::vector<double> got;
  for (int s = 0; s < 2; ++s) {
    StepLog log = train_step(rs, make_batch(rs, data));
    got.push_back(log.d.total);
    got.push_back(log.g.total);
  }
  CHECK(expect == got);
}

TEST_CASE("full loop: history rows, checkpoints, and resume equals fresh") {
  // One uninterrupted two-epoch run...
  TrainConfig a = mini_config(31);
  a.epochs = 2;
  a.out_dir = test_root() + "/run_a";
  TrainReport ra = train_loop(a);
  CHECK(fs::exists(ra.checkpoint));
  CHECK(fs::exists(a.out_dir + "/latest.ckpt"));
  auto la = read_lines(a.out_dir + "/history.csv");
  REQUIRE(la.size() >= 3);  // header + one row per epoch
  CHECK(la[0] == kHistoryHeader);
  CHECK(static_cast<int>(la.size()) == ra.evals + 1);

  // ...must match one epoch plus a resumed second epoch, row for row.
  TrainConfig b1 = mini_config(31);
  b1.epochs = 1;
  b1.out_dir = test_root() + "/run_b";
  TrainReport rb1 = train_loop(b1);
  TrainConfig b2 = b1;
  b2.epochs = 2;
  b2.resume = rb1.checkpoint;
  train_loop(b2);
  auto lb = read_lines(b1.out_dir + "/history.csv");
  REQUIRE(la.size() == lb.size());
  for (size_t i = 0; i < la.size(); ++i) CHECK(la[i] == lb[i]);
}

TEST_CASE("a non-finite loss dumps the state and rethrows") {
  TrainState st = mini_state(37);
  {
    auto gp = st.g.params();
    gp[0].second.mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
  }
  std::string ckpt = test_root() + "/poisoned.ckpt";
  save_checkpoint(st, ckpt);

  TrainConfig c = mini_config(37);
  c.out_dir = test_root() + "/run_poison";
  c.resume = ckpt;
  CHECK_THROWS(train_loop(c));
  CHECK(fs::exists(c.out_dir + "/abort.ckpt"));
}

TEST_CASE("short training run drives the critic objective down") {
  // Median over three seeds: d_loss after 200 steps on 64 images sits below
  // its starting value (2.0 for a fresh critic plus a tiny penalty).
  std::vector<double> first, last;
  for (std::uint64_t seed : {41, 42, 43}) {
    TrainState st = mini_state(seed);
    TrainData data = load_train_data(st.cfg.data_dir, st.sim);
    double f = 0, l = 0;
    for (int s = 0; s < 200; ++s) {
      StepLog log = train_step(st, make_batch(st, data));
      if (s == 0) f = log.d.total;
      if (s >= 190) l += log.d.total / 10.0;
    }
    first.push_back(f);
    last.push_back(l);
  }
  std::sort(first.begin(), first.end());
  std::sort(last.begin(), last.end());
  CHECK(last[1] < first[1] - 0.05);
}

TEST_CASE("generator objective stays linear in its coefficients on live batches") {
  TrainState st = mini_state(47);
  TrainData data = load_train_data(st.cfg.data_dir, st.sim);
  TrainBatch<float> b = make_batch(st, data);
  Tensor<float> g0, g1;
  GLossParts base = g_loss(st.g, st.d, st.sim, b, 0.0, 0.0, g0);
  GLossParts full = g_loss(st.g, st.d, st.sim, b, 40.0, 4.0, g1);
  // float32 models: the composed double expectation differs by rounding only
  CHECK(full.total ==
        doctest::Approx(base.adv + 40.0 * full.recon - 4.0 * full.sim).epsilon(1e-6));
}
