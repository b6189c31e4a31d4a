#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dynedit/generator.hpp"
#include "dynedit/synthscene.hpp"
#include "dynedit/textenc.hpp"
#include "dynedit/training.hpp"

namespace dynedit::evalkit {

// Mean per-sample Euclidean pixel distance scaled by sqrt(3*H*W) so the
// all-black vs all-white pair scores exactly 1. Inputs are (3,H,W) or
// (N,3,H,W) in [0,1].
double l2_error(const Tensor<float>& a, const Tensor<float>& b);

// Cosine similarity between an image in [-1,1] and a caption under the frozen
// scorer.
double sim_score(const text::SimilarityModel<float>& sim, const Tensor<float>& img,
                 const std::string& caption);

// Manipulative precision: preservation times semantic match.
double mp(double l2, double sim);

// Fraction of target attributes realized in the edited image (input (3,H,W)
// in [0,1]), judged by majority nearest-palette vote over regions the target
// scene pins: shape interior, background, and the star corner.
double attribute_accuracy(const Tensor<float>& img, const synth::Scene& target);

// Overlap between a map thresholded at its own median and a boolean mask of
// the same resolution.
double median_iou(const Tensor<float>& map, const std::vector<std::uint8_t>& mask);

// One evaluated edit pair.
struct EvalRecord {
  std::int64_t id = 0;
  std::string caption;  // target caption driving the edit
  synth::Scene target;  // oracle edited scene
  synth::EditKind kind = synth::EditKind::kShapeColor;
  Tensor<float> source, edited;  // (3,H,W) in [-1,1]
  Tensor<float> truth;           // oracle render in [-1,1]
  Tensor<float> attention;       // (heads,H,W) from the last decoder block
  double l2 = 0, sim = 0, mp = 0, attr = 0;
};

// Runs the generator over the given records' source images with their target
// captions and scores every pair. `limit` 0 means all records.
std::vector<EvalRecord> evaluate_records(const Generator<float>& g,
                                         const text::SimilarityModel<float>& sim,
                                         const std::vector<synth::Record>& records,
                                         const std::string& data_dir, int limit = 0);

struct EvalSummary {
  double l2 = 0, sim = 0, mp = 0, attr = 0;
  double l2_sd = 0, sim_sd = 0, mp_sd = 0, attr_sd = 0;
  int n = 0;
};

EvalSummary summarize(const std::vector<EvalRecord>& records);

// Writes metrics.csv, summary.txt, grid PNGs (source | edited | truth |
// caption) and one attention sheet of 8 per-head panels per sample.
void emit_report(const std::vector<EvalRecord>& records, const std::string& out_dir);

// Architecture switches for one ablation arm.
struct AblationPreset {
  std::string name;
  bool use_comp_pred = true;
  double fixed_alpha_value = 0.5;
  bool use_c_affine = true;
  bool use_s_affine = true;
  bool use_dcblock = true;
  bool use_semantic_decoder = true;
  std::int64_t dcblock_heads = 8;

  void validate() const;
  void apply(GeneratorConfig& gc) const;
};

// full, fixed-alpha (composition predictor off), ordinary-conv (dynamic
// queries off).
std::vector<AblationPreset> standard_presets();

struct AblationRow {
  std::string name;
  double sim = 0, l2 = 0, mp = 0, attr = 0;
};

// Trains and evaluates every preset under the same seed and budget.
std::vector<AblationRow> run_ablation(const std::vector<AblationPreset>& presets,
                                      const train::TrainConfig& base, std::ostream* log = nullptr);

void write_ablation_table(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace dynedit::evalkit
