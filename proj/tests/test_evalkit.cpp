#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dynedit/evalkit.hpp"
#include "dynedit/png_io.hpp"
#include "dynedit/training.hpp"

using namespace dynedit;
using namespace dynedit::evalkit;
namespace fs = std::filesystem;

namespace {

std::string test_root() {
  static std::string dir = [] {
    std::string d = (fs::temp_directory_path() / "dynedit_evalkit_tests").string();
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string dataset_dir() {
  static std::string dir = [] {
    synth::DatasetParams p;
    p.out_dir = test_root() + "/data";
    p.count = 24;
    p.test_fraction = 0.25;
    p.seed = 13;
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
    Rng rng(29);
    text::SimilarityModel<float> sim(rng, text::Vocab::build(caps), sc);
    std::string p = test_root() + "/sim.ckpt";
    sim.save(p);
    return p;
  }();
  return path;
}

train::TrainConfig mini_config(std::uint64_t seed = 3) {
  train::TrainConfig c;
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

std::vector<synth::Record> test_split() {
  std::vector<synth::Record> out;
  for (auto& r : synth::load_manifest(dataset_dir()))
    if (r.is_test) out.push_back(r);
  return out;
}

Tensor<float> to_unit(const Tensor<float>& pm1) {
  std::vector<float> v(pm1.data().size());
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = std::clamp(pm1.data()[i] * 0.5f + 0.5f, 0.0f, 1.0f);
  return Tensor<float>(pm1.shape(), std::move(v));
}

Tensor<float> render_unit(const synth::Scene& s) {
  return to_unit(reshape(synth::image_to_tensor(synth::render_rgb(s)), {3, 64, 64}));
}

}  // namespace

TEST_CASE("pixel distance: anchors, symmetry, and a scalar-loop oracle") {
  Tensor<float> black = Tensor<float>::zeros({3, 8, 8});
  Tensor<float> white = Tensor<float>::full({3, 8, 8}, 1.0f);
  CHECK(l2_error(black, black) == 0.0);
  CHECK(l2_error(black, white) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(51);
  std::vector<float> av(3 * 8 * 8), bv(3 * 8 * 8);
  for (auto& x : av) x = static_cast<float>(rng.uniform());
  for (auto& x : bv) x = static_cast<float>(rng.uniform());
  Tensor<float> a({2, 3, 4, 8}, std::move(av)), b({2, 3, 4, 8}, std::move(bv));

  double expect = 0;
  for (int n = 0; n < 2; ++n) {
    double s = 0;
    for (int j = 0; j < 3 * 4 * 8; ++j) {
      double d = static_cast<double>(a.data()[n * 96 + j]) - b.data()[n * 96 + j];
      s += d * d;
    }
    expect += std::sqrt(s) / std::sqrt(96.0) / 2.0;
  }
  CHECK(l2_error(a, b) == doctest::Approx(expect).epsilon(1e-6));
  CHECK(l2_error(a, b) == l2_error(b, a));
  CHECK_THROWS(l2_error(black, Tensor<float>::zeros({3, 8, 9})));
}

TEST_CASE("composite score: published value table and boundaries") {
  // Published (similarity, distance, composite) triples; each composite must
  // equal (1 - distance) * similarity up to table rounding.
  const double rows[][3] = {
      {0.202, 0.185, 0.164}, {0.213, 0.051, 0.202}, {0.221, 0.046, 0.210},
      {0.188, 0.132, 0.163}, {0.235, 0.013, 0.231}, {0.240, 0.010, 0.237},
      {0.125, 0.102, 0.112}, {0.119, 0.031, 0.114}, {0.129, 0.027, 0.125},
      {0.136, 0.025, 0.132}, {0.131, 0.017, 0.128}, {0.192, 0.015, 0.189},
  };
  for (const auto& r : rows) CHECK(std::fabs(mp(r[1], r[0]) - r[2]) <= 0.0015);

  CHECK(mp(0.015, 0.192) == doctest::Approx(0.18912).epsilon(1e-12));
  CHECK(mp(0.010, 0.240) == doctest::Approx(0.2376).epsilon(1e-12));
  CHECK(mp(0.0, 0.7) == 0.7);
  CHECK(mp(1.0, 0.7) == 0.0);

  // Monotonicity on both arguments.
  CHECK(mp(0.2, 0.5) > mp(0.3, 0.5));
  CHECK(mp(0.2, 0.6) > mp(0.2, 0.5));
}

TEST_CASE("similarity scorer output is a cosine") {
  auto sim = text::SimilarityModel<float>::load(sim_path());
  Rng rng(53);
  std::vector<float> v(3 * 64 * 64);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  Tensor<float> img({3, 64, 64}, std::move(v));
  double s = sim_score(sim, img, "a red circle on a green background");
  CHECK(s >= -1.000001);
  CHECK(s <= 1.000001);
}

TEST_CASE("attribute check: oracle renders score 1, stale sources score less") {
  Rng rng(57);
  int full = 0, total = 0;
  for (int i = 0; i < 20; ++i) {
    synth::Scene src = synth::sample_scene(rng);
    synth::EditKind kind = synth::sample_edit_kind(rng);
    synth::Scene tgt = synth::apply_edit(src, kind, rng);
    CHECK(attribute_accuracy(render_unit(tgt), tgt) == 1.0);
    ++total;

    if (kind == synth::EditKind::kShapeColor || kind == synth::EditKind::kBgColor) {
      CHECK(attribute_accuracy(render_unit(src), tgt) < 1.0);
    }
    if (kind == synth::EditKind::kStarToggle) {
      // Only the star-corner check can fail on the untouched source.
      CHECK(attribute_accuracy(render_unit(src), tgt) == doctest::Approx(2.0 / 3));
    }
    full += attribute_accuracy(render_unit(tgt), tgt) == 1.0;
  }
  CHECK(full == total);
}

TEST_CASE("attribute check: noise sits at palette chance level") {
  Rng rng(59);
  double acc = 0;
  for (int i = 0; i < 100; ++i) {
    synth::Scene s = synth::sample_scene(rng);
    synth::Scene t = synth::apply_edit(s, synth::sample_edit_kind(rng), rng);
    std::vector<float> v(3 * 64 * 64);
    for (auto& x : v) x = static_cast<float>(rng.uniform());
    acc += attribute_accuracy(Tensor<float>({3, 64, 64}, std::move(v)), t);
  }
  acc /= 100.0;
  CHECK(std::fabs(acc - 0.125) <= 0.1);
}

TEST_CASE("median-threshold overlap behaves on exact masks") {
  Rng rng(61);
  synth::Scene s = synth::sample_scene(rng);
  auto mask = synth::render_masks(s).shape;  // well under half the frame
  std::vector<float> v(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) v[i] = mask[i] ? 1.0f : 0.0f;
  Tensor<float> map({64, 64}, std::move(v));
  CHECK(median_iou(map, mask) == doctest::Approx(1.0));

  std::vector<float> inv(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) inv[i] = mask[i] ? 0.0f : 1.0f;
  CHECK(median_iou(Tensor<float>({64, 64}, std::move(inv)), mask) == doctest::Approx(0.0));
}

TEST_CASE("record evaluation: shapes, determinism, and limits") {
  auto cfg = mini_config();
  Rng rng(63);
  Generator<float> g(rng, cfg.gen);
  auto sim = text::SimilarityModel<float>::load(sim_path());
  auto records = test_split();
  REQUIRE(records.size() >= 4);

  auto evals = evaluate_records(g, sim, records, dataset_dir(), 0);
  CHECK(evals.size() == records.size());
  for (const auto& e : evals) {
    CHECK(e.source.shape() == Shape{3, 64, 64});
    CHECK(e.edited.shape() == Shape{3, 64, 64});
    CHECK(e.truth.defined());
    CHECK(e.attention.shape() == Shape{2, 64, 64});
    CHECK(std::isfinite(e.l2));
    CHECK(std::isfinite(e.sim));
    CHECK(e.mp == doctest::Approx((1.0 - e.l2) * e.sim).epsilon(1e-12));
    CHECK(e.attr >= 0.0);
    CHECK(e.attr <= 1.0);
  }

  auto again = evaluate_records(g, sim, records, dataset_dir(), 0);
  for (size_t i = 0; i < evals.size(); ++i) {
    CHECK(evals[i].edited.data() == again[i].edited.data());
    CHECK(evals[i].attention.data() == again[i].attention.data());
  }

  CHECK(evaluate_records(g, sim, records, dataset_dir(), 2).size() == 2);
}

TEST_CASE("report files: csv rows, mean agreement, grid geometry, head panels") {
  auto cfg = mini_config();
  Rng rng(67);
  Generator<float> g(rng, cfg.gen);
  auto sim = text::SimilarityModel<float>::load(sim_path());
  auto records = test_split();
  auto evals = evaluate_records(g, sim, records, dataset_dir(), 0);
  std::string out = test_root() + "/report";
  emit_report(evals, out);

  std::ifstream csv(out + "/metrics.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "record_id,l2_error,sim_score,mp,attr_acc");
  double l2 = 0, sm = 0, cm = 0, at = 0;
  int n = 0;
  std::string line;
  while (std::getline(csv, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream is(line);
    long long id;
    double a, b, c, d;
    is >> id >> a >> b >> c >> d;
    l2 += a;
    sm += b;
    cm += c;
    at += d;
    ++n;
  }
  REQUIRE(n == static_cast<int>(evals.size()));
  EvalSummary s = summarize(evals);
  CHECK(s.l2 == doctest::Approx(l2 / n).epsilon(1e-9));
  CHECK(s.sim == doctest::Approx(sm / n).epsilon(1e-9));
  CHECK(s.mp == doctest::Approx(cm / n).epsilon(1e-9));
  CHECK(s.attr == doctest::Approx(at / n).epsilon(1e-9));

  // rows x (source | edited | truth | caption), 64px cells with a 2px margin
  PngImage grid = read_png(out + "/grid_0.png");
  CHECK(grid.width == 4 * 66);
  CHECK(grid.height == static_cast<int>(evals.size()) * 66);

  char name[32];
  std::snprintf(name, sizeof(name), "attention_%06lld.png", static_cast<long long>(evals[0].id));
  PngImage attn = read_png(out + std::string("/") + name);
  CHECK(attn.width == 2 * 66);  // one panel per head
  CHECK(attn.height == 66);
}

TEST_CASE("eight heads emit eight panels") {
  GeneratorConfig gc;  // full-width architecture, eight dynamic kernels
  Rng rng(71);
  Generator<float> g(rng, gc);
  text::SimilarityConfig sc;
  Rng srng(73);
  std::vector<std::string> caps;
  for (const auto& r : test_split()) caps.push_back(r.tgt_caption);
  text::SimilarityModel<float> sim(srng, text::Vocab::build(caps), sc);

  auto evals = evaluate_records(g, sim, test_split(), dataset_dir(), 2);
  REQUIRE(evals.size() == 2);
  CHECK(evals[0].attention.shape() == Shape{8, 64, 64});

  std::string out = test_root() + "/report8";
  emit_report(evals, out);
  char name[32];
  std::snprintf(name, sizeof(name), "attention_%06lld.png", static_cast<long long>(evals[0].id));
  PngImage attn = read_png(out + std::string("/") + name);
  CHECK(attn.width == 8 * 66);
  CHECK(attn.height == 66);
}

TEST_CASE("ablation presets: flags land in the config and invalid arms are rejected") {
  auto presets = standard_presets();
  REQUIRE(presets.size() == 3);
  CHECK(presets[0].name == "full");
  CHECK(presets[1].name == "fixed-alpha");
  CHECK_FALSE(presets[1].use_comp_pred);
  CHECK(presets[1].fixed_alpha_value == 0.5);
  CHECK(presets[2].name == "ordinary-conv");
  CHECK_FALSE(presets[2].use_dcblock);

  GeneratorConfig gc;
  presets[1].apply(gc);
  CHECK_FALSE(gc.use_comp_pred);
  CHECK(gc.fixed_alpha == 0.5);
  presets[2].apply(gc);
  CHECK_FALSE(gc.use_dcblock);

  AblationPreset bad;
  bad.name = "no-affines";
  bad.use_c_affine = false;
  bad.use_s_affine = false;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("ablation harness trains each arm under one budget") {
  train::TrainConfig base = mini_config(77);
  base.out_dir = test_root() + "/ablate";
  base.eval_limit = 0;

  auto presets = standard_presets();
  presets.erase(presets.begin() + 1);  // two arms keep the smoke test short
  auto rows = run_ablation(presets, base);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].name == "full");
  CHECK(rows[1].name == "ordinary-conv");
  for (const auto& r : rows) {
    CHECK(std::isfinite(r.mp));
    CHECK(std::isfinite(r.sim));
    CHECK(std::isfinite(r.l2));
    CHECK(fs::exists(base.out_dir + "/" + r.name + "/checkpoint.ckpt"));
  }

  write_ablation_table(rows, base.out_dir + "/table.csv");
  std::ifstream f(base.out_dir + "/table.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line == "preset,sim_score,l2_error,mp,attr_acc");
  int n = 0;
  while (std::getline(f, line)) ++n;
  CHECK(n == 2);
}
