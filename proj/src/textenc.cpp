#include "dynedit/textenc.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "dynedit/png_io.hpp"
#include "dynedit/synthscene.hpp"

namespace dynedit::text {

namespace fs = std::filesystem;

// ---- vocabulary -------------------------------------------------------------

Vocab Vocab::build(const std::vector<std::string>& captions) {
  std::set<std::string> words;
  for (const auto& c : captions)
    for (const auto& t : synth::tokenize(c)) words.insert(t);
  std::vector<std::string> tokens = {"<pad>", "<unk>"};
  tokens.insert(tokens.end(), words.begin(), words.end());  // set is sorted
  return from_tokens(std::move(tokens));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  DYN_CHECK(tokens.size() >= 2, "vocabulary needs at least the two special tokens");
  Vocab v;
  v.tokens_ = std::move(tokens);
  for (size_t i = 0; i < v.tokens_.size(); ++i)
    v.ids_[v.tokens_[i]] = static_cast<std::int64_t>(i);
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path);
  DYN_CHECK(f.good(), "cannot open vocabulary " << path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(f, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path);
  DYN_CHECK(f.good(), "cannot write vocabulary " << path);
  for (const auto& t : tokens_) f << t << "\n";
}

std::int64_t Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const { return ids_.count(token) > 0; }

const std::string& Vocab::token(std::int64_t id) const {
  DYN_CHECK(id >= 0 && id < size(), "token id " << id << " out of range");
  return tokens_[static_cast<size_t>(id)];
}

std::vector<std::int64_t> tokenize(const std::string& caption, const Vocab& vocab, int max_len,
                                   int* unknown) {
  auto words = synth::tokenize(caption);
  DYN_CHECK(static_cast<int>(words.size()) <= max_len,
            "caption has " << words.size() << " tokens, max_len is " << max_len);
  std::vector<std::int64_t> ids(static_cast<size_t>(max_len), Vocab::kPad);
  int unk = 0;
  for (size_t i = 0; i < words.size(); ++i) {
    if (vocab.contains(words[i])) {
      ids[i] = vocab.id(words[i]);
    } else {
      ids[i] = Vocab::kUnk;
      ++unk;
      std::cerr << "warning: unknown token '" << words[i] << "'\n";
    }
  }
  if (unknown) *unknown = unk;
  return ids;
}

std::string detokenize(const std::vector<std::int64_t>& ids, const Vocab& vocab) {
  std::string out;
  for (auto id : ids) {
    if (id == Vocab::kPad) break;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

// ---- pretraining -------------------------------------------------------------

namespace {

struct Pair {
  Tensor<float> image;  // (1,3,64,64)
  std::string caption;
};

// Every (image, caption) pair of the requested split, both the source scene
// and the edit target, so the encoder sees all attribute combinations.
std::vector<Pair> load_pairs(const std::string& data_dir, bool test_split) {
  std::vector<Pair> out;
  for (const auto& r : synth::load_manifest(data_dir)) {
    if (r.is_test != test_split) continue;
    auto src = read_png((fs::path(data_dir) / r.src_png).string());
    out.push_back({synth::image_to_tensor(src.rgb), r.src_caption});
    if (!r.tgt_png.empty()) {
      auto tgt = read_png((fs::path(data_dir) / r.tgt_png).string());
      out.push_back({synth::image_to_tensor(tgt.rgb), r.tgt_caption});
    }
  }
  return out;
}

Tensor<float> stack_images(const std::vector<Pair>& pairs, const std::vector<int>& idx) {
  std::int64_t n = static_cast<std::int64_t>(idx.size());
  std::vector<float> v;
  v.reserve(static_cast<size_t>(n) * 3 * 64 * 64);
  for (int i : idx) {
    const auto& d = pairs[static_cast<size_t>(i)].image.data();
    v.insert(v.end(), d.begin(), d.end());
  }
  return Tensor<float>({n, 3, 64, 64}, std::move(v));
}

}  // namespace

double heldout_pair_accuracy(const SimilarityModel<float>& model, const std::string& data_dir,
                             std::uint64_t seed, int limit) {
  GradGuard off(false);
  auto pairs = load_pairs(data_dir, /*test_split=*/true);
  DYN_CHECK(pairs.size() >= 2, "need at least two held-out pairs");
  int n = static_cast<int>(pairs.size());
  if (limit > 0 && limit < n) n = limit;

  std::vector<int> all(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) all[i] = static_cast<int>(i);
  Tensor<float> imgs = stack_images(pairs, std::vector<int>(all.begin(), all.begin() + n));
  Tensor<float> ie = model.embed_images(imgs);  // (n,D)

  std::vector<std::string> caps;
  for (const auto& p : pairs) caps.push_back(p.caption);
  Tensor<float> te = model.encode_captions(caps);  // (full,D)

  std::int64_t D = ie.dim(1);
  auto dot = [&](int img_i, int cap_j) {
    double s = 0;
    for (std::int64_t d = 0; d < D; ++d)
      s += static_cast<double>(ie.data()[img_i * D + d]) *
           static_cast<double>(te.data()[cap_j * D + d]);
    return s;
  };

  Rng rng(hash_mix(seed ^ 0xACC0517EULL));
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    // a mismatched caption must describe different content, not just sit at
    // a different manifest position
    int j = i;
    for (int tries = 0; tries < 64; ++tries) {
      j = static_cast<int>(rng.randint(0, static_cast<std::int64_t>(pairs.size()) - 1));
      if (pairs[static_cast<size_t>(j)].caption != pairs[static_cast<size_t>(i)].caption) break;
    }
    if (dot(i, i) > dot(i, j)) ++correct;
  }
  return static_cast<double>(correct) / n;
}

PretrainReport pretrain_contrastive(const std::string& data_dir, const PretrainConfig& cfg,
                                    SimilarityModel<float>& out, std::ostream* log) {
  auto t0 = std::chrono::steady_clock::now();

  auto train = load_pairs(data_dir, /*test_split=*/false);
  DYN_CHECK(static_cast<int>(train.size()) >= cfg.batch,
            "train split smaller than one batch (" << train.size() << " pairs)");

  std::vector<std::string> captions;
  for (const auto& p : train) captions.push_back(p.caption);
  Vocab vocab = Vocab::build(captions);

  Rng rng(hash_mix(cfg.seed ^ 0x9D0E7A3BC1F542ULL));
  out = SimilarityModel<float>(rng, std::move(vocab), cfg.model);

  Adam<float> opt(out.params(), cfg.lr, 0.9, 0.999);

  PretrainReport rep;
  std::vector<int> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  float tau = static_cast<float>(cfg.tau);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0;
    int epoch_steps = 0;
    for (size_t at = 0; at + static_cast<size_t>(cfg.batch) <= order.size();
         at += static_cast<size_t>(cfg.batch)) {
      std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(at),
                           order.begin() + static_cast<std::ptrdiff_t>(at) + cfg.batch);
      Tensor<float> imgs = stack_images(train, idx);
      std::vector<std::string> caps;
      for (int i : idx) caps.push_back(train[static_cast<size_t>(i)].caption);

      Tensor<float> ie = out.embed_images(imgs);
      Tensor<float> te = out.encode_captions(caps);
      Tensor<float> loss = info_nce(ie, te, tau);
      double lv = static_cast<double>(loss.item());
      DYN_CHECK(std::isfinite(lv), "contrastive pretraining diverged: loss=" << lv << " at epoch "
                                                                             << epoch);
      if (rep.steps == 0) rep.init_loss = lv;
      opt.zero_grad();
      backward(loss);
      opt.step();
      ++rep.steps;
      ++epoch_steps;
      epoch_loss += lv;
      rep.final_loss = lv;
    }
    rep.epochs_run = epoch + 1;
    double acc = heldout_pair_accuracy(out, data_dir, cfg.seed, /*limit=*/200);
    if (log)
      (*log) << "pretrain epoch " << epoch << " loss " << epoch_loss / std::max(1, epoch_steps)
             << " heldout_acc " << acc << "\n";
    if (cfg.early_stop_accuracy > 0 && acc >= cfg.early_stop_accuracy) break;
  }

  rep.heldout_accuracy = heldout_pair_accuracy(out, data_dir, cfg.seed);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (log) (*log) << "pretrain heldout accuracy " << rep.heldout_accuracy << "\n";
  return rep;
}

}  // namespace dynedit::text
