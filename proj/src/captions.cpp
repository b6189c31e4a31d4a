#include <sstream>

#include "dynedit/synthscene.hpp"

namespace dynedit::synth {

Attributes attributes(const Scene& s) {
  return Attributes{s.shape, s.shape_color, s.bg_color, s.texture, s.has_star};
}

std::string caption(const Scene& s) {
  std::string out = "a ";
  if (s.texture != TextureKind::kSolid) {
    out += texture_name(s.texture);
    out += ' ';
  }
  out += kColorNames[static_cast<size_t>(s.shape_color)];
  out += ' ';
  out += shape_name(s.shape);
  if (s.has_star) out += " and a small star";
  out += " on a ";
  out += kColorNames[static_cast<size_t>(s.bg_color)];
  out += " background";
  return out;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::istringstream ss(text);
  std::vector<std::string> toks;
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

std::optional<Attributes> parse_caption(const std::string& text) {
  auto toks = tokenize(text);
  Attributes a{};
  a.texture = TextureKind::kSolid;
  a.has_star = false;

  int shape_at = -1, bg_at = -1;
  for (int i = 0; i < static_cast<int>(toks.size()); ++i) {
    if (auto k = shape_from_name(toks[static_cast<size_t>(i)]); k && shape_at < 0) {
      a.shape = *k;
      shape_at = i;
    }
    if (toks[static_cast<size_t>(i)] == "background") bg_at = i;
    if (toks[static_cast<size_t>(i)] == "star") a.has_star = true;
  }
  if (shape_at < 1 || bg_at < 1) return std::nullopt;

  a.shape_color = color_index(toks[static_cast<size_t>(shape_at - 1)]);
  if (a.shape_color < 0) return std::nullopt;
  if (shape_at >= 2) {
    if (auto t = texture_from_name(toks[static_cast<size_t>(shape_at - 2)]);
        t && *t != TextureKind::kSolid)
      a.texture = *t;
  }
  a.bg_color = color_index(toks[static_cast<size_t>(bg_at - 1)]);
  if (a.bg_color < 0) return std::nullopt;
  return a;
}

}  // namespace dynedit::synth
