#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynedit/rng.hpp"
#include "dynedit/tensor.hpp"

namespace dynedit::synth {

using json = nlohmann::json;

inline constexpr int kImageSize = 64;

// The eight corners of the RGB cube: mutually maximally separated, so a
// per-pixel nearest-color vote on a noisy render still recovers the intended
// color with high margin.
inline constexpr std::array<std::array<double, 3>, 8> kPalette = {{
    {0, 0, 0},  // black
    {1, 0, 0},  // red
    {0, 1, 0},  // green
    {0, 0, 1},  // blue
    {1, 1, 0},  // yellow
    {1, 0, 1},  // magenta
    {0, 1, 1},  // cyan
    {1, 1, 1},  // white
}};
inline constexpr std::array<const char*, 8> kColorNames = {
    "black", "red", "green", "blue", "yellow", "magenta", "cyan", "white"};

int color_index(const std::string& name);  // -1 when unknown
int nearest_palette(double r, double g, double b);

enum class ShapeKind { kCircle, kSquare, kTriangle };
enum class TextureKind { kSolid, kStriped, kDotted };

const char* shape_name(ShapeKind);
const char* texture_name(TextureKind);
std::optional<ShapeKind> shape_from_name(const std::string&);
std::optional<TextureKind> texture_from_name(const std::string&);

struct Scene {
  ShapeKind shape = ShapeKind::kCircle;
  int shape_color = 1;                       // palette index
  int bg_color = 2;                          // palette index, != shape_color
  TextureKind texture = TextureKind::kSolid;
  bool has_star = false;
  double cx = 32, cy = 32, radius = 13;      // pixels
  double star_cx = 12, star_cy = 12, star_r = 5;

  bool operator==(const Scene&) const = default;
};

json scene_to_json(const Scene&);
Scene scene_from_json(const json&);

// The star sits in the image corner farthest from the shape so the two never
// overlap; its color is the first palette entry distinct from both the shape
// and the background, in a fixed priority order.
int star_color(const Scene&);
Scene sample_scene(Rng&);

// ---- captions ------------------------------------------------------------
//
//   "a red circle on a green background"
//   "a striped blue square and a small star on a white background"
//
// Lowercase, no punctuation, whitespace-tokenized. The grammar is invertible:
// parse_caption recovers every describable attribute.
std::string caption(const Scene&);

struct Attributes {
  ShapeKind shape;
  int shape_color;
  int bg_color;
  TextureKind texture;
  bool has_star;

  bool operator==(const Attributes&) const = default;
};
Attributes attributes(const Scene&);
std::optional<Attributes> parse_caption(const std::string&);
std::vector<std::string> tokenize(const std::string&);

// ---- edits -----------------------------------------------------------------

enum class EditKind { kShapeColor, kBgColor, kTexture, kStarToggle };
const char* edit_name(EditKind);
std::optional<EditKind> edit_from_name(const std::string&);

// Applies one attribute change, leaving geometry untouched.
Scene apply_edit(const Scene&, EditKind, Rng&);
EditKind sample_edit_kind(Rng&);

// ---- rendering --------------------------------------------------------------

// 64x64 RGB bytes, row-major. Outer silhouettes get a one-pixel linear
// anti-aliasing ramp; texture patterns inside a shape are hard-edged.
std::vector<std::uint8_t> render_rgb(const Scene&);

// Boolean masks (1 byte per pixel): pixels whose signed distance is negative.
// Background is everything outside both.
struct Masks {
  std::vector<std::uint8_t> shape, star;
};
Masks render_masks(const Scene&);

// CHW float in [-1, 1] and back (clamping, round to nearest byte).
Tensor<float> image_to_tensor(const std::vector<std::uint8_t>& rgb);
std::vector<std::uint8_t> tensor_to_image(const Tensor<float>& chw);

// ---- dataset ---------------------------------------------------------------

struct DatasetParams {
  std::string out_dir;
  int count = 2000;
  double test_fraction = 0.1;
  std::uint64_t seed = 7;
  bool write_target_images = true;
};

struct Record {
  std::int64_t id = 0;
  Scene source, target;
  EditKind kind = EditKind::kShapeColor;
  std::string src_caption, tgt_caption;
  std::string src_png, tgt_png;  // paths relative to the dataset dir
  bool is_test = false;
};

// Writes images/, manifest.jsonl (one record per line) and meta.json.
// Fully determined by params.seed: the split is an exact count
// round(count * test_fraction), chosen by a seeded shuffle.
void generate_dataset(const DatasetParams&);
std::vector<Record> load_manifest(const std::string& dir);
json load_dataset_meta(const std::string& dir);

json record_to_json(const Record&);
Record record_from_json(const json&);

}  // namespace dynedit::synth
