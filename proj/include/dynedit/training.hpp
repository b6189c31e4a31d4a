#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dynedit/discriminator.hpp"
#include "dynedit/generator.hpp"
#include "dynedit/losses.hpp"
#include "dynedit/nn.hpp"
#include "dynedit/rng.hpp"
#include "dynedit/synthscene.hpp"
#include "dynedit/textenc.hpp"

namespace dynedit::train {

// Two time-scale training run. The model widths here default to a size that
// finishes the desk-scale run (2000 images at 64x64) within a CPU-hour on one
// core; the full-width architecture stays available through the generator /
// discriminator config sections.
struct TrainConfig {
  GeneratorConfig gen;
  DiscriminatorConfig disc;

  double lr_g = 1e-4;  // discriminator runs four times hotter than this
  double lr_d = 4e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double lambda1 = 40.0;  // reconstruction weight
  double lambda2 = 4.0;   // text-similarity weight
  int batch = 16;
  int epochs = 7;
  // Fraction of batch rows whose target caption is the source's own caption;
  // 0 keeps every training target mismatched.
  double matched_fraction = 0.0;
  std::uint64_t seed = 7;

  int eval_every = 0;        // steps between test-split evaluations; 0 = each epoch
  int checkpoint_every = 0;  // steps between checkpoints; 0 = each epoch
  int eval_limit = 64;       // test records per periodic evaluation; 0 = all

  std::string data_dir;        // dataset directory holding manifest.jsonl
  std::string sim_checkpoint;  // frozen similarity scorer
  std::string out_dir;         // run directory: history.csv, checkpoints
  std::string resume;          // checkpoint to continue from

  TrainConfig() {
    gen.channels = {16, 32, 64, 128};
    disc.channels = {16, 32, 64, 128};
  }
};

json train_config_json(const TrainConfig&);
TrainConfig train_config_from_json(const json&);

// Everything a run owns: models, both optimizers, and the sampling stream.
// One checkpoint restores all of it bit-exactly.
struct TrainState {
  TrainConfig cfg;
  text::SimilarityModel<float> sim;  // frozen
  Rng rng;                           // init + batch stream
  Generator<float> g;
  Discriminator<float> d;
  Adam<float> opt_g, opt_d;
  std::int64_t step = 0;

  TrainState(const TrainConfig& c, text::SimilarityModel<float> s);
};

// Train-split records with images cached in memory and source-caption
// embeddings precomputed through the frozen scorer.
struct TrainData {
  std::string dir;
  std::vector<synth::Record> train, test;
  std::vector<std::vector<std::uint8_t>> rgb;  // train images, record order
  Tensor<float> emb;                           // (n_train, text_dim)
};

TrainData load_train_data(const std::string& dir, const text::SimilarityModel<float>& sim);

// Uniform i.i.d. rows; each row's target embedding comes from a different
// record unless the matched fraction says otherwise.
TrainBatch<float> make_batch(TrainState& st, const TrainData& data);

struct StepLog {
  std::int64_t step = 0;
  DLossParts d;
  GLossParts g;
};

// One discriminator update followed by one generator update.
StepLog train_step(TrainState& st, const TrainBatch<float>& b);

void save_checkpoint(const TrainState& st, const std::string& path);
TrainState load_checkpoint(const std::string& path);

inline constexpr const char* kHistoryHeader =
    "step,d_loss,g_loss,adv,recon,sim,l2_error,sim_score,mp,attr_acc";

struct TrainReport {
  std::string checkpoint;  // final checkpoint path
  std::int64_t steps = 0;
  int evals = 0;  // rows written to history.csv
  double final_l2 = 0, final_sim = 0, final_mp = 0, final_attr = 0;
  double seconds = 0;
};

// Epochs over the train split with periodic test-split metric rows appended
// to <out_dir>/history.csv. A non-finite loss dumps the state to abort.ckpt
// and rethrows.
TrainReport train_loop(const TrainConfig& cfg, std::ostream* log = nullptr);

}  // namespace dynedit::train
