#include "dynedit/synthscene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dynedit/png_io.hpp"

namespace dynedit::synth {

namespace fs = std::filesystem;

int color_index(const std::string& name) {
  for (int i = 0; i < 8; ++i)
    if (name == kColorNames[static_cast<size_t>(i)]) return i;
  return -1;
}

int nearest_palette(double r, double g, double b) {
  int best = 0;
  double bd = 1e30;
  for (int i = 0; i < 8; ++i) {
    const auto& p = kPalette[static_cast<size_t>(i)];
    double d = (r - p[0]) * (r - p[0]) + (g - p[1]) * (g - p[1]) + (b - p[2]) * (b - p[2]);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return best;
}

const char* shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "?";
}

const char* texture_name(TextureKind k) {
  switch (k) {
    case TextureKind::kSolid: return "solid";
    case TextureKind::kStriped: return "striped";
    case TextureKind::kDotted: return "dotted";
  }
  return "?";
}

std::optional<ShapeKind> shape_from_name(const std::string& s) {
  if (s == "circle") return ShapeKind::kCircle;
  if (s == "square") return ShapeKind::kSquare;
  if (s == "triangle") return ShapeKind::kTriangle;
  return std::nullopt;
}

std::optional<TextureKind> texture_from_name(const std::string& s) {
  if (s == "solid") return TextureKind::kSolid;
  if (s == "striped") return TextureKind::kStriped;
  if (s == "dotted") return TextureKind::kDotted;
  return std::nullopt;
}

const char* edit_name(EditKind k) {
  switch (k) {
    case EditKind::kShapeColor: return "shape_color";
    case EditKind::kBgColor: return "bg_color";
    case EditKind::kTexture: return "texture";
    case EditKind::kStarToggle: return "star_toggle";
  }
  return "?";
}

std::optional<EditKind> edit_from_name(const std::string& s) {
  for (EditKind k : {EditKind::kShapeColor, EditKind::kBgColor, EditKind::kTexture,
                     EditKind::kStarToggle})
    if (s == edit_name(k)) return k;
  return std::nullopt;
}

json scene_to_json(const Scene& s) {
  json j;
  j["shape"] = shape_name(s.shape);
  j["shape_color"] = kColorNames[static_cast<size_t>(s.shape_color)];
  j["bg_color"] = kColorNames[static_cast<size_t>(s.bg_color)];
  j["texture"] = texture_name(s.texture);
  j["has_star"] = s.has_star;
  j["cx"] = s.cx;
  j["cy"] = s.cy;
  j["radius"] = s.radius;
  j["star_cx"] = s.star_cx;
  j["star_cy"] = s.star_cy;
  j["star_r"] = s.star_r;
  return j;
}

Scene scene_from_json(const json& j) {
  Scene s;
  s.shape = *shape_from_name(j.at("shape").get<std::string>());
  s.shape_color = color_index(j.at("shape_color").get<std::string>());
  s.bg_color = color_index(j.at("bg_color").get<std::string>());
  s.texture = *texture_from_name(j.at("texture").get<std::string>());
  s.has_star = j.at("has_star").get<bool>();
  s.cx = j.at("cx").get<double>();
  s.cy = j.at("cy").get<double>();
  s.radius = j.at("radius").get<double>();
  s.star_cx = j.at("star_cx").get<double>();
  s.star_cy = j.at("star_cy").get<double>();
  s.star_r = j.at("star_r").get<double>();
  DYN_CHECK(s.shape_color >= 0 && s.bg_color >= 0, "bad color name in scene json");
  return s;
}

int star_color(const Scene& s) {
  // fixed priority keeps the star identical across edits that do not touch it
  for (int c : {7 /*white*/, 4 /*yellow*/, 6 /*cyan*/, 5 /*magenta*/})
    if (c != s.shape_color && c != s.bg_color) return c;
  return 7;
}

static void place_star(Scene& s, Rng& rng) {
  // the corner farthest from the shape; inset keeps the whole star inside
  double inset = 11.0;
  double best = -1, bx = inset, by = inset;
  for (double x : {inset, kImageSize - inset})
    for (double y : {inset, kImageSize - inset}) {
      double d = (x - s.cx) * (x - s.cx) + (y - s.cy) * (y - s.cy);
      if (d > best) {
        best = d;
        bx = x;
        by = y;
      }
    }
  s.star_cx = bx + rng.uniform(-1.5, 1.5);
  s.star_cy = by + rng.uniform(-1.5, 1.5);
  s.star_r = rng.uniform(4.5, 6.0);
}

Scene sample_scene(Rng& rng) {
  Scene s;
  s.shape = static_cast<ShapeKind>(rng.randint(0, 2));
  s.shape_color = static_cast<int>(rng.randint(0, 7));
  do {
    s.bg_color = static_cast<int>(rng.randint(0, 7));
  } while (s.bg_color == s.shape_color);
  s.texture = static_cast<TextureKind>(rng.randint(0, 2));
  s.has_star = rng.uniform() < 0.5;
  s.cx = rng.uniform(26, 38);
  s.cy = rng.uniform(26, 38);
  s.radius = rng.uniform(11, 16);
  place_star(s, rng);
  return s;
}

EditKind sample_edit_kind(Rng& rng) { return static_cast<EditKind>(rng.randint(0, 3)); }

Scene apply_edit(const Scene& src, EditKind kind, Rng& rng) {
  Scene t = src;
  switch (kind) {
    case EditKind::kShapeColor:
      do {
        t.shape_color = static_cast<int>(rng.randint(0, 7));
      } while (t.shape_color == src.shape_color || t.shape_color == src.bg_color);
      break;
    case EditKind::kBgColor:
      do {
        t.bg_color = static_cast<int>(rng.randint(0, 7));
      } while (t.bg_color == src.bg_color || t.bg_color == src.shape_color);
      break;
    case EditKind::kTexture:
      do {
        t.texture = static_cast<TextureKind>(rng.randint(0, 2));
      } while (t.texture == src.texture);
      break;
    case EditKind::kStarToggle:
      t.has_star = !src.has_star;
      break;
  }
  return t;
}

// ---- signed distance functions (y grows up in local coordinates) ----------

static double sd_circle(double px, double py, double r) {
  return std::sqrt(px * px + py * py) - r;
}

static double sd_square(double px, double py, double half) {
  double dx = std::abs(px) - half, dy = std::abs(py) - half;
  double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(dx, dy), 0.0);
}

// equilateral triangle pointing up, r = distance from center to each edge * 2
static double sd_triangle(double px, double py, double r) {
  const double k = std::sqrt(3.0);
  px = std::abs(px) - r;
  py = py + r / k;
  if (px + k * py > 0.0) {
    double nx = (px - k * py) / 2.0, ny = (-k * px - py) / 2.0;
    px = nx;
    py = ny;
  }
  px -= std::clamp(px, -2.0 * r, 0.0);
  return -std::sqrt(px * px + py * py) * (py > 0 ? 1.0 : py < 0 ? -1.0 : 0.0);
}

// five-pointed star, rf controls how deep the notches cut
static double sd_star5(double px, double py, double r, double rf) {
  const double k1x = 0.809016994375, k1y = -0.587785252292;
  const double k2x = -k1x, k2y = k1y;
  px = std::abs(px);
  double d1 = 2.0 * std::max(k1x * px + k1y * py, 0.0);
  px -= d1 * k1x;
  py -= d1 * k1y;
  double d2 = 2.0 * std::max(k2x * px + k2y * py, 0.0);
  px -= d2 * k2x;
  py -= d2 * k2y;
  px = std::abs(px);
  py -= r;
  double bax = rf * (-k1y), bay = rf * k1x - 1.0;
  double h = std::clamp((px * bax + py * bay) / (bax * bax + bay * bay), 0.0, r);
  double ex = px - bax * h, ey = py - bay * h;
  double sgn = py * bax - px * bay > 0 ? 1.0 : -1.0;
  return std::sqrt(ex * ex + ey * ey) * sgn;
}

static double shape_sdf(const Scene& s, double x, double y) {
  double px = x - s.cx, py = s.cy - y;  // flip so triangles point up on screen
  switch (s.shape) {
    case ShapeKind::kCircle: return sd_circle(px, py, s.radius);
    case ShapeKind::kSquare: return sd_square(px, py, s.radius * 0.9);
    case ShapeKind::kTriangle: return sd_triangle(px, py, s.radius * 0.95);
  }
  return 1e9;
}

static double star_sdf(const Scene& s, double x, double y) {
  return sd_star5(x - s.star_cx, s.star_cy - y, s.star_r, 0.55);
}

// Texture pattern in shape-local coordinates: true where the secondary
// (background) color shows through. Hard-edged by design so the interior has
// crisp internal boundaries.
static bool pattern_secondary(const Scene& s, double x, double y) {
  double px = x - s.cx, py = s.cy - y;
  switch (s.texture) {
    case TextureKind::kSolid: return false;
    case TextureKind::kStriped: {
      double m = py - 8.0 * std::floor(py / 8.0);
      return m < 3.0;  // 3-of-8 band keeps the primary color in the majority
    }
    case TextureKind::kDotted: {
      double lx = px - 6.0 * std::floor(px / 6.0) - 3.0;
      double ly = py - 6.0 * std::floor(py / 6.0) - 3.0;
      return lx * lx + ly * ly < 1.8 * 1.8;
    }
  }
  return false;
}

std::vector<std::uint8_t> render_rgb(const Scene& s) {
  const int N = kImageSize;
  std::vector<std::uint8_t> out(static_cast<size_t>(N) * N * 3);
  const auto& bg = kPalette[static_cast<size_t>(s.bg_color)];
  const auto& fg = kPalette[static_cast<size_t>(s.shape_color)];
  const auto& st = kPalette[static_cast<size_t>(star_color(s))];
  for (int y = 0; y < N; ++y) {
    for (int x = 0; x < N; ++x) {
      double fx = x + 0.5, fy = y + 0.5;
      double r = bg[0], g = bg[1], b = bg[2];
      double d = shape_sdf(s, fx, fy);
      double a = std::clamp(0.5 - d, 0.0, 1.0);  // one-pixel silhouette ramp
      if (a > 0) {
        const auto& c = pattern_secondary(s, fx, fy) ? bg : fg;
        r += a * (c[0] - r);
        g += a * (c[1] - g);
        b += a * (c[2] - b);
      }
      if (s.has_star) {
        double ds = star_sdf(s, fx, fy);
        double as = std::clamp(0.5 - ds, 0.0, 1.0);
        if (as > 0) {
          r += as * (st[0] - r);
          g += as * (st[1] - g);
          b += as * (st[2] - b);
        }
      }
      size_t o = (static_cast<size_t>(y) * N + x) * 3;
      out[o] = static_cast<std::uint8_t>(std::lround(r * 255.0));
      out[o + 1] = static_cast<std::uint8_t>(std::lround(g * 255.0));
      out[o + 2] = static_cast<std::uint8_t>(std::lround(b * 255.0));
    }
  }
  return out;
}

Masks render_masks(const Scene& s) {
  const int N = kImageSize;
  Masks m;
  m.shape.assign(static_cast<size_t>(N) * N, 0);
  m.star.assign(static_cast<size_t>(N) * N, 0);
  for (int y = 0; y < N; ++y)
    for (int x = 0; x < N; ++x) {
      size_t o = static_cast<size_t>(y) * N + x;
      if (shape_sdf(s, x + 0.5, y + 0.5) < 0) m.shape[o] = 1;
      if (s.has_star && star_sdf(s, x + 0.5, y + 0.5) < 0) m.star[o] = 1;
    }
  return m;
}

Tensor<float> image_to_tensor(const std::vector<std::uint8_t>& rgb) {
  const int N = kImageSize;
  DYN_CHECK(rgb.size() == static_cast<size_t>(N) * N * 3, "image byte count mismatch");
  std::vector<float> v(rgb.size());
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < N * N; ++i)
      v[static_cast<size_t>(c) * N * N + i] =
          static_cast<float>(rgb[static_cast<size_t>(i) * 3 + c]) / 127.5f - 1.0f;
  return Tensor<float>({1, 3, N, N}, std::move(v));
}

std::vector<std::uint8_t> tensor_to_image(const Tensor<float>& chw) {
  const int N = kImageSize;
  DYN_CHECK(chw.numel() == 3 * N * N, "tensor is not a 3x64x64 image");
  std::vector<std::uint8_t> rgb(static_cast<size_t>(N) * N * 3);
  const auto& v = chw.data();
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < N * N; ++i) {
      float x = (v[static_cast<size_t>(c) * N * N + i] + 1.0f) * 127.5f;
      rgb[static_cast<size_t>(i) * 3 + c] =
          static_cast<std::uint8_t>(std::clamp(std::lround(x), 0L, 255L));
    }
  return rgb;
}

// ---- dataset ---------------------------------------------------------------

json record_to_json(const Record& r) {
  json j;
  j["id"] = r.id;
  j["source"] = scene_to_json(r.source);
  j["target"] = scene_to_json(r.target);
  j["edit"] = edit_name(r.kind);
  j["src_caption"] = r.src_caption;
  j["tgt_caption"] = r.tgt_caption;
  j["src_png"] = r.src_png;
  j["tgt_png"] = r.tgt_png;
  j["is_test"] = r.is_test;
  return j;
}

Record record_from_json(const json& j) {
  Record r;
  r.id = j.at("id").get<std::int64_t>();
  r.source = scene_from_json(j.at("source"));
  r.target = scene_from_json(j.at("target"));
  r.kind = *edit_from_name(j.at("edit").get<std::string>());
  r.src_caption = j.at("src_caption").get<std::string>();
  r.tgt_caption = j.at("tgt_caption").get<std::string>();
  r.src_png = j.at("src_png").get<std::string>();
  r.tgt_png = j.at("tgt_png").get<std::string>();
  r.is_test = j.at("is_test").get<bool>();
  return r;
}

void generate_dataset(const DatasetParams& p) {
  DYN_CHECK(p.count > 0, "dataset count must be positive");
  fs::create_directories(fs::path(p.out_dir) / "images");

  // exact-size test split via a seeded shuffle of record ids
  std::vector<int> ids(static_cast<size_t>(p.count));
  for (int i = 0; i < p.count; ++i) ids[static_cast<size_t>(i)] = i;
  Rng split_rng(hash_mix(p.seed ^ 0x5B11D0C4E55AA9F3ULL));
  split_rng.shuffle(ids.begin(), ids.end());
  int n_test = static_cast<int>(std::lround(p.count * p.test_fraction));
  std::vector<char> is_test(static_cast<size_t>(p.count), 0);
  for (int i = 0; i < n_test; ++i) is_test[static_cast<size_t>(ids[static_cast<size_t>(i)])] = 1;

  std::ofstream manifest(fs::path(p.out_dir) / "manifest.jsonl");
  DYN_CHECK(manifest.good(), "cannot write manifest in " << p.out_dir);
  for (int i = 0; i < p.count; ++i) {
    Rng rng(hash_mix(p.seed) ^ hash_mix(static_cast<std::uint64_t>(i) + 0x9E3779B97F4A7C15ULL));
    Record r;
    r.id = i;
    r.source = sample_scene(rng);
    r.kind = sample_edit_kind(rng);
    r.target = apply_edit(r.source, r.kind, rng);
    r.src_caption = caption(r.source);
    r.tgt_caption = caption(r.target);
    r.is_test = is_test[static_cast<size_t>(i)] != 0;

    char name[32];
    std::snprintf(name, sizeof(name), "images/%06d_src.png", i);
    r.src_png = name;
    auto src_rgb = render_rgb(r.source);
    write_png((fs::path(p.out_dir) / r.src_png).string(), kImageSize, kImageSize, src_rgb.data());
    if (p.write_target_images) {
      std::snprintf(name, sizeof(name), "images/%06d_tgt.png", i);
      r.tgt_png = name;
      auto tgt_rgb = render_rgb(r.target);
      write_png((fs::path(p.out_dir) / r.tgt_png).string(), kImageSize, kImageSize,
                tgt_rgb.data());
    }
    manifest << record_to_json(r).dump() << "\n";
  }
  manifest.close();

  json meta;
  meta["count"] = p.count;
  meta["test_fraction"] = p.test_fraction;
  meta["n_test"] = n_test;
  meta["seed"] = p.seed;
  meta["image_size"] = kImageSize;
  std::ofstream mf(fs::path(p.out_dir) / "meta.json");
  mf << meta.dump(2) << "\n";
}

std::vector<Record> load_manifest(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.jsonl");
  DYN_CHECK(f.good(), "no manifest.jsonl in " << dir);
  std::vector<Record> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(json::parse(line)));
  }
  return out;
}

json load_dataset_meta(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "meta.json");
  DYN_CHECK(f.good(), "no meta.json in " << dir);
  return json::parse(f);
}

}  // namespace dynedit::synth
