#include "dynedit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "dynedit/png_io.hpp"

namespace fs = std::filesystem;

namespace dynedit::evalkit {

namespace {

// Per-sample Euclidean distance over channels and pixels.
std::vector<double> sample_distances(const Tensor<float>& a, const Tensor<float>& b) {
  DYN_CHECK(a.shape() == b.shape(), "image resolution mismatch");
  DYN_CHECK(a.ndim() == 3 || a.ndim() == 4, "expected (3,H,W) or (N,3,H,W)");
  std::int64_t n = a.ndim() == 4 ? a.dim(0) : 1;
  std::int64_t per = a.numel() / n;
  std::vector<double> out(static_cast<size_t>(n));
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::int64_t j = i * per; j < (i + 1) * per; ++j) {
      double d = static_cast<double>(av[static_cast<size_t>(j)]) -
                 static_cast<double>(bv[static_cast<size_t>(j)]);
      s += d * d;
    }
    out[static_cast<size_t>(i)] = std::sqrt(s);
  }
  return out;
}

// Majority nearest-palette vote over masked pixels of a (3,H,W) image in [0,1].
int region_vote(const Tensor<float>& img, const std::vector<std::uint8_t>& mask) {
  std::int64_t hw = img.dim(1) * img.dim(2);
  DYN_CHECK(static_cast<std::int64_t>(mask.size()) == hw, "mask resolution mismatch");
  const auto& v = img.data();
  std::array<int, 8> votes{};
  int total = 0;
  for (std::int64_t i = 0; i < hw; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    int c = synth::nearest_palette(v[static_cast<size_t>(i)], v[static_cast<size_t>(hw + i)],
                                   v[static_cast<size_t>(2 * hw + i)]);
    ++votes[static_cast<size_t>(c)];
    ++total;
  }
  if (total == 0) return -1;
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

// Shrinks a boolean mask by `r` pixels so votes stay off anti-aliased edges.
std::vector<std::uint8_t> erode(const std::vector<std::uint8_t>& m, int n, int r) {
  std::vector<std::uint8_t> out(m.size(), 0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      bool keep = m[static_cast<size_t>(y) * n + x] != 0;
      for (int dy = -r; keep && dy <= r; ++dy)
        for (int dx = -r; keep && dx <= r; ++dx) {
          int yy = y + dy, xx = x + dx;
          keep = yy >= 0 && yy < n && xx >= 0 && xx < n &&
                 m[static_cast<size_t>(yy) * n + xx] != 0;
        }
      if (keep) out[static_cast<size_t>(y) * n + x] = 1;
    }
  return out;
}

// ---- report rendering -------------------------------------------------------

constexpr int kCell = 64, kMargin = 2, kPitch = kCell + kMargin;

// 5x7 lowercase glyphs, row-major, low 5 bits per row.
constexpr std::uint8_t kFont[26][7] = {
    {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}, {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x1E},
    {0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E}, {0x01, 0x01, 0x0D, 0x13, 0x11, 0x11, 0x0F},
    {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}, {0x06, 0x09, 0x08, 0x1C, 0x08, 0x08, 0x08},
    {0x00, 0x0F, 0x11, 0x11, 0x0F, 0x01, 0x0E}, {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11},
    {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}, {0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0C},
    {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12}, {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E},
    {0x00, 0x00, 0x1A, 0x15, 0x15, 0x15, 0x15}, {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11},
    {0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E}, {0x00, 0x00, 0x1E, 0x11, 0x1E, 0x10, 0x10},
    {0x00, 0x00, 0x0D, 0x13, 0x0F, 0x01, 0x01}, {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10},
    {0x00, 0x00, 0x0E, 0x10, 0x0E, 0x01, 0x1E}, {0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06},
    {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0D}, {0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04},
    {0x00, 0x00, 0x11, 0x15, 0x15, 0x15, 0x0A}, {0x00, 0x00, 0x11, 0x0A, 0x04, 0x0A, 0x11},
    {0x00, 0x00, 0x11, 0x11, 0x0F, 0x01, 0x0E}, {0x00, 0x00, 0x1F, 0x02, 0x04, 0x08, 0x1F},
};

struct Sheet {
  int rows, cols;
  std::vector<std::uint8_t> rgb;  // rows*kPitch x cols*kPitch

  Sheet(int r, int c) : rows(r), cols(c) {
    rgb.assign(static_cast<size_t>(r) * kPitch * c * kPitch * 3, 32);
  }
  int width() const { return cols * kPitch; }
  int height() const { return rows * kPitch; }
  void put(int row, int col, const std::vector<std::uint8_t>& cell) {
    for (int y = 0; y < kCell; ++y)
      std::copy(cell.begin() + static_cast<size_t>(y) * kCell * 3,
                cell.begin() + static_cast<size_t>(y + 1) * kCell * 3,
                rgb.begin() + ((static_cast<size_t>(row) * kPitch + y) * width() +
                               static_cast<size_t>(col) * kPitch) *
                                  3);
  }
};

std::vector<std::uint8_t> tensor_cell(const Tensor<float>& pm1) {
  return synth::tensor_to_image(pm1);
}

std::vector<std::uint8_t> gray_cell() {
  return std::vector<std::uint8_t>(static_cast<size_t>(kCell) * kCell * 3, 128);
}

// White panel with the caption wrapped onto 6x8 character cells.
std::vector<std::uint8_t> caption_cell(const std::string& caption) {
  std::vector<std::uint8_t> cell(static_cast<size_t>(kCell) * kCell * 3, 255);
  auto draw = [&](int cx, int cy, char ch) {
    if (ch < 'a' || ch > 'z') return;
    const std::uint8_t* glyph = kFont[ch - 'a'];
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 5; ++x)
        if ((glyph[y] >> (4 - x)) & 1) {
          int px = cx + x, py = cy + y;
          if (px < kCell && py < kCell) {
            size_t o = (static_cast<size_t>(py) * kCell + px) * 3;
            cell[o] = cell[o + 1] = cell[o + 2] = 0;
          }
        }
  };
  int col = 0, row = 0;
  const int perline = kCell / 6, lines = kCell / 8;
  size_t i = 0;
  while (i < caption.size() && row < lines) {
    size_t end = caption.find(' ', i);
    if (end == std::string::npos) end = caption.size();
    int len = static_cast<int>(end - i);
    if (col > 0 && col + len > perline) {
      ++row;
      col = 0;
    }
    for (size_t k = i; k < end && row < lines; ++k) {
      if (col >= perline) {
        ++row;
        col = 0;
      }
      if (row < lines) draw(col * 6 + 1, row * 8 + 1, caption[k]);
      ++col;
    }
    ++col;  // word gap
    i = end + 1;
  }
  return cell;
}

std::vector<std::uint8_t> heat_cell(const Tensor<float>& map) {
  DYN_CHECK(map.ndim() == 2 && map.dim(0) == kCell && map.dim(1) == kCell,
            "attention panel must match the cell size");
  const auto& v = map.data();
  float lo = v[0], hi = v[0];
  for (float x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  float span = hi - lo;
  std::vector<std::uint8_t> cell(static_cast<size_t>(kCell) * kCell * 3);
  for (size_t i = 0; i < v.size(); ++i) {
    float t = span > 0 ? (v[i] - lo) / span : 0.0f;
    auto b = static_cast<std::uint8_t>(std::lround(t * 255.0f));
    cell[i * 3] = cell[i * 3 + 1] = cell[i * 3 + 2] = b;
  }
  return cell;
}

Tensor<float> slice_row(const Tensor<float>& t, std::int64_t i) {
  Shape s = t.shape();
  std::int64_t per = t.numel() / t.dim(0);
  std::vector<float> v(t.data().begin() + i * per, t.data().begin() + (i + 1) * per);
  Shape rest(s.begin() + 1, s.end());
  return Tensor<float>(rest, std::move(v));
}

Tensor<float> to_unit(const Tensor<float>& pm1) {
  std::vector<float> v(pm1.data().size());
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = std::clamp(pm1.data()[i] * 0.5f + 0.5f, 0.0f, 1.0f);
  return Tensor<float>(pm1.shape(), std::move(v));
}

}  // namespace

double l2_error(const Tensor<float>& a, const Tensor<float>& b) {
  auto d = sample_distances(a, b);
  std::int64_t per = a.numel() / static_cast<std::int64_t>(d.size());
  double mean = 0;
  for (double x : d) mean += x / std::sqrt(static_cast<double>(per));
  return mean / static_cast<double>(d.size());
}

double sim_score(const text::SimilarityModel<float>& sim, const Tensor<float>& img,
                 const std::string& caption) {
  Tensor<float> x = img;
  if (x.ndim() == 3) x = reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  return sim.similarity(x, caption);
}

double mp(double l2, double sim) { return (1.0 - l2) * sim; }

double attribute_accuracy(const Tensor<float>& img, const synth::Scene& target) {
  DYN_CHECK(img.ndim() == 3 && img.dim(0) == 3, "expected a (3,H,W) image");
  int n = static_cast<int>(img.dim(1));
  synth::Masks m = synth::render_masks(target);

  int passed = 0;
  if (region_vote(img, erode(m.shape, n, 2)) == target.shape_color) ++passed;

  std::vector<std::uint8_t> bg(m.shape.size());
  for (size_t i = 0; i < bg.size(); ++i) bg[i] = !m.shape[i] && !m.star[i];
  if (region_vote(img, erode(bg, n, 2)) == target.bg_color) ++passed;

  if (target.has_star) {
    if (region_vote(img, m.star) == synth::star_color(target)) ++passed;
  } else {
    synth::Scene corner = target;
    corner.has_star = true;
    if (region_vote(img, synth::render_masks(corner).star) == target.bg_color) ++passed;
  }
  return passed / 3.0;
}

double median_iou(const Tensor<float>& map, const std::vector<std::uint8_t>& mask) {
  DYN_CHECK(map.numel() == static_cast<std::int64_t>(mask.size()),
            "map and mask resolution mismatch");
  std::vector<float> sorted(map.data());
  auto mid = sorted.begin() + sorted.size() / 2;
  std::nth_element(sorted.begin(), mid, sorted.end());
  float med = *mid;
  std::int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    bool a = map.data()[i] > med, b = mask[i] != 0;
    inter += a && b;
    uni += a || b;
  }
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

std::vector<EvalRecord> evaluate_records(const Generator<float>& g,
                                         const text::SimilarityModel<float>& sim,
                                         const std::vector<synth::Record>& records,
                                         const std::string& data_dir, int limit) {
  GradGuard off(false);
  std::int64_t n = static_cast<std::int64_t>(records.size());
  if (limit > 0) n = std::min<std::int64_t>(n, limit);

  std::vector<EvalRecord> out(static_cast<size_t>(n));
  const std::int64_t B = 16;
  for (std::int64_t at = 0; at < n; at += B) {
    std::int64_t take = std::min(B, n - at);
    std::int64_t px = g.cfg.image_size;
    std::vector<float> xv(static_cast<size_t>(take * 3 * px * px));
    std::vector<std::string> caps(static_cast<size_t>(take));
    for (std::int64_t i = 0; i < take; ++i) {
      const auto& r = records[static_cast<size_t>(at + i)];
      Tensor<float> xi = synth::image_to_tensor(read_png(data_dir + "/" + r.src_png).rgb);
      std::copy(xi.data().begin(), xi.data().end(), xv.begin() + i * 3 * px * px);
      caps[static_cast<size_t>(i)] = r.tgt_caption;
    }
    Tensor<float> x({take, 3, px, px}, std::move(xv));
    Tensor<float> e = sim.encode_captions(caps);
    Tensor<float> attn;
    Tensor<float> edited = g.generate(x, e, &attn);
    Tensor<float> ie = sim.embed_images(edited);  // rows cosine-ready

    for (std::int64_t i = 0; i < take; ++i) {
      const auto& r = records[static_cast<size_t>(at + i)];
      EvalRecord& er = out[static_cast<size_t>(at + i)];
      er.id = r.id;
      er.caption = r.tgt_caption;
      er.target = r.target;
      er.kind = r.kind;
      er.source = slice_row(x, i);
      er.edited = slice_row(edited, i);
      er.attention = slice_row(attn, i);
      if (!r.tgt_png.empty())
        er.truth = synth::image_to_tensor(read_png(data_dir + "/" + r.tgt_png).rgb);

      Tensor<float> ed01 = to_unit(er.edited);
      er.l2 = l2_error(ed01, to_unit(er.source));
      double s = 0;
      for (std::int64_t k = 0; k < ie.dim(1); ++k)
        s += static_cast<double>(ie.data()[static_cast<size_t>(i * ie.dim(1) + k)]) *
             static_cast<double>(e.data()[static_cast<size_t>(i * e.dim(1) + k)]);
      er.sim = s;
      er.mp = mp(er.l2, er.sim);
      er.attr = attribute_accuracy(ed01, r.target);
    }
  }
  return out;
}

EvalSummary summarize(const std::vector<EvalRecord>& records) {
  EvalSummary s;
  s.n = static_cast<int>(records.size());
  if (records.empty()) return s;
  for (const auto& r : records) {
    s.l2 += r.l2;
    s.sim += r.sim;
    s.mp += r.mp;
    s.attr += r.attr;
  }
  s.l2 /= s.n;
  s.sim /= s.n;
  s.mp /= s.n;
  s.attr /= s.n;
  for (const auto& r : records) {
    s.l2_sd += (r.l2 - s.l2) * (r.l2 - s.l2);
    s.sim_sd += (r.sim - s.sim) * (r.sim - s.sim);
    s.mp_sd += (r.mp - s.mp) * (r.mp - s.mp);
    s.attr_sd += (r.attr - s.attr) * (r.attr - s.attr);
  }
  s.l2_sd = std::sqrt(s.l2_sd / s.n);
  s.sim_sd = std::sqrt(s.sim_sd / s.n);
  s.mp_sd = std::sqrt(s.mp_sd / s.n);
  s.attr_sd = std::sqrt(s.attr_sd / s.n);
  return s;
}

void emit_report(const std::vector<EvalRecord>& records, const std::string& out_dir) {
  fs::create_directories(out_dir);

  std::ofstream csv(out_dir + "/metrics.csv");
  DYN_CHECK(csv.good(), "cannot write into " << out_dir);
  csv << "record_id,l2_error,sim_score,mp,attr_acc\n" << std::setprecision(10);
  for (const auto& r : records)
    csv << r.id << ',' << r.l2 << ',' << r.sim << ',' << r.mp << ',' << r.attr << "\n";

  EvalSummary s = summarize(records);
  std::ofstream sum(out_dir + "/summary.txt");
  sum << std::setprecision(6) << std::fixed;
  sum << "n " << s.n << "\n";
  sum << "l2_error " << s.l2 << " ± " << s.l2_sd << "\n";
  sum << "sim_score " << s.sim << " ± " << s.sim_sd << "\n";
  sum << "mp " << s.mp << " ± " << s.mp_sd << "\n";
  sum << "attr_acc " << s.attr << " ± " << s.attr_sd << "\n";

  const int kRowsPerSheet = 16;
  for (size_t base = 0, sheet = 0; base < records.size(); base += kRowsPerSheet, ++sheet) {
    int rows = static_cast<int>(std::min<size_t>(kRowsPerSheet, records.size() - base));
    Sheet grid(rows, 4);
    for (int i = 0; i < rows; ++i) {
      const EvalRecord& r = records[base + static_cast<size_t>(i)];
      grid.put(i, 0, tensor_cell(r.source));
      grid.put(i, 1, tensor_cell(r.edited));
      grid.put(i, 2, r.truth.defined() ? tensor_cell(r.truth) : gray_cell());
      grid.put(i, 3, caption_cell(r.caption));
    }
    write_png(out_dir + "/grid_" + std::to_string(sheet) + ".png", grid.width(), grid.height(),
              grid.rgb.data());
  }

  for (const auto& r : records) {
    std::int64_t heads = r.attention.dim(0);
    Sheet sheet(1, static_cast<int>(heads));
    for (std::int64_t h = 0; h < heads; ++h) sheet.put(0, static_cast<int>(h), heat_cell(slice_row(r.attention, h)));
    char name[32];
    std::snprintf(name, sizeof(name), "attention_%06lld.png", static_cast<long long>(r.id));
    write_png(out_dir + "/" + name, sheet.width(), sheet.height(), sheet.rgb.data());
  }
}

void AblationPreset::validate() const {
  DYN_CHECK(!name.empty(), "ablation preset needs a name");
  DYN_CHECK(use_c_affine || use_s_affine, "at least one affine path must stay enabled");
  DYN_CHECK(dcblock_heads >= 1, "dynamic blocks need at least one head");
}

void AblationPreset::apply(GeneratorConfig& gc) const {
  validate();
  gc.use_comp_pred = use_comp_pred;
  gc.fixed_alpha = fixed_alpha_value;
  gc.use_c_affine = use_c_affine;
  gc.use_s_affine = use_s_affine;
  gc.use_dcblock = use_dcblock;
  gc.use_semantic_decoder = use_semantic_decoder;
  gc.heads = dcblock_heads;
}

std::vector<AblationPreset> standard_presets() {
  AblationPreset full;
  full.name = "full";
  AblationPreset fixed = full;
  fixed.name = "fixed-alpha";
  fixed.use_comp_pred = false;
  fixed.fixed_alpha_value = 0.5;
  AblationPreset oc = full;
  oc.name = "ordinary-conv";
  oc.use_dcblock = false;
  return {full, fixed, oc};
}

std::vector<AblationRow> run_ablation(const std::vector<AblationPreset>& presets,
                                      const train::TrainConfig& base, std::ostream* log) {
  for (const auto& p : presets) p.validate();
  std::vector<AblationRow> rows;
  for (const auto& p : presets) {
    train::TrainConfig cfg = base;
    p.apply(cfg.gen);
    cfg.out_dir = base.out_dir + "/" + p.name;
    if (log) *log << "== ablation arm " << p.name << "\n";
    train::TrainReport rep = train::train_loop(cfg, log);
    rows.push_back({p.name, rep.final_sim, rep.final_l2, rep.final_mp, rep.final_attr});
  }
  return rows;
}

void write_ablation_table(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream f(path);
  DYN_CHECK(f.good(), "cannot write " << path);
  f << "preset,sim_score,l2_error,mp,attr_acc\n" << std::setprecision(10);
  for (const auto& r : rows)
    f << r.name << ',' << r.sim << ',' << r.l2 << ',' << r.mp << ',' << r.attr << "\n";
}

}  // namespace dynedit::evalkit
