// Computes the pixel-distance a perfect editor would score on a dataset's
// test split: mean l2_error(ground-truth target, source) per edit kind.
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "dynedit/evalkit.hpp"
#include "dynedit/synthscene.hpp"

using namespace dynedit;

namespace {

Tensor<float> unit_render(const synth::Scene& s) {
  auto t = synth::image_to_tensor(synth::render_rgb(s));  // (1,3,H,W) in [-1,1]
  for (float& v : t.mutable_data()) v = 0.5f * (v + 1.0f);
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: edit_oracle <dataset-dir>\n");
    return 2;
  }
  auto records = synth::load_manifest(argv[1]);
  std::map<std::string, std::vector<double>> by_kind;
  for (const auto& rec : records) {
    if (!rec.is_test) continue;
    double l2 = evalkit::l2_error(unit_render(rec.target), unit_render(rec.source));
    by_kind[synth::edit_name(rec.kind)].push_back(l2);
  }
  double all = 0;
  std::size_t n = 0;
  for (auto& [kind, v] : by_kind) {
    double s = 0;
    for (double x : v) s += x;
    std::printf("%-12s n=%3zu  mean_l2=%.4f\n", kind.c_str(), v.size(), s / v.size());
    all += s;
    n += v.size();
  }
  if (n) std::printf("%-12s n=%3zu  mean_l2=%.4f\n", "all", n, all / n);
  return 0;
}
