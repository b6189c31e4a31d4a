#include "dynedit/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dynedit/tensor.hpp"

namespace dynedit::cfg {
namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string join(const std::vector<std::int64_t>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

RunConfig::RunConfig() {
  const synth::DatasetParams dp;
  const text::PretrainConfig pc;
  const train::TrainConfig tc;

  kv_["seed"] = std::to_string(tc.seed);
  kv_["out_dir"] = "";

  kv_["data.dir"] = "";
  kv_["data.count"] = std::to_string(dp.count);
  kv_["data.test_fraction"] = num(dp.test_fraction);
  kv_["data.write_targets"] = dp.write_target_images ? "true" : "false";

  kv_["pretrain.epochs"] = std::to_string(pc.epochs);
  kv_["pretrain.batch"] = std::to_string(pc.batch);
  kv_["pretrain.lr"] = num(pc.lr);
  kv_["pretrain.tau"] = num(pc.tau);
  kv_["pretrain.early_stop"] = num(pc.early_stop_accuracy);
  kv_["sim.text_dim"] = std::to_string(pc.model.text_dim);
  kv_["sim.image_base"] = std::to_string(pc.model.image_base);
  kv_["sim.max_len"] = std::to_string(pc.model.max_len);

  const GeneratorConfig& g = tc.gen;
  kv_["generator.image_size"] = std::to_string(g.image_size);
  kv_["generator.channels"] = join(g.channels);
  kv_["generator.text_dim"] = std::to_string(g.text_dim);
  kv_["generator.heads"] = std::to_string(g.heads);
  kv_["generator.head_channels"] = std::to_string(g.head_channels);
  kv_["generator.comp_dim"] = std::to_string(g.comp_dim);
  kv_["generator.comp_hidden"] = std::to_string(g.comp_hidden);
  kv_["generator.affine_hidden"] = std::to_string(g.affine_hidden);
  kv_["generator.affine_pairs"] = std::to_string(g.affine_pairs);
  kv_["generator.use_comp_pred"] = g.use_comp_pred ? "true" : "false";
  kv_["generator.fixed_alpha"] = num(g.fixed_alpha);
  kv_["generator.use_c_affine"] = g.use_c_affine ? "true" : "false";
  kv_["generator.use_s_affine"] = g.use_s_affine ? "true" : "false";
  kv_["generator.use_dcblock"] = g.use_dcblock ? "true" : "false";
  kv_["generator.use_semantic_decoder"] = g.use_semantic_decoder ? "true" : "false";

  const DiscriminatorConfig& d = tc.disc;
  kv_["discriminator.channels"] = join(d.channels);
  kv_["discriminator.text_dim"] = std::to_string(d.text_dim);
  kv_["discriminator.proj_dim"] = std::to_string(d.proj_dim);
  kv_["discriminator.k"] = num(d.k);
  kv_["discriminator.p"] = std::to_string(d.p);

  kv_["train.lr_g"] = num(tc.lr_g);
  kv_["train.lr_d"] = num(tc.lr_d);
  kv_["train.beta1"] = num(tc.beta1);
  kv_["train.beta2"] = num(tc.beta2);
  kv_["train.lambda1"] = num(tc.lambda1);
  kv_["train.lambda2"] = num(tc.lambda2);
  kv_["train.batch"] = std::to_string(tc.batch);
  kv_["train.epochs"] = std::to_string(tc.epochs);
  kv_["train.matched_fraction"] = num(tc.matched_fraction);
  kv_["train.eval_every"] = std::to_string(tc.eval_every);
  kv_["train.checkpoint_every"] = std::to_string(tc.checkpoint_every);
  kv_["train.eval_limit"] = std::to_string(tc.eval_limit);
  kv_["train.sim_checkpoint"] = "";
  kv_["train.resume"] = "";
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  DYN_CHECK(f.is_open(), "config not found: " << path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    DYN_CHECK(eq != std::string::npos, path << ":" << lineno << ": expected key=value");
    set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
}

void RunConfig::set_pair(const std::string& pair) {
  size_t eq = pair.find('=');
  DYN_CHECK(eq != std::string::npos, "expected key=value, got '" << pair << "'");
  set(trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = kv_.find(key);
  DYN_CHECK(it != kv_.end(), "unknown config key: " << key);
  it->second = value;
}

void RunConfig::apply_env() {
  if (const char* s = std::getenv("DYNEDIT_SEED")) {
    set("seed", s);
    i64("seed");  // validate eagerly
  }
}

bool RunConfig::has(const std::string& key) const { return kv_.count(key) != 0; }

const std::string& RunConfig::str(const std::string& key) const {
  auto it = kv_.find(key);
  DYN_CHECK(it != kv_.end(), "unknown config key: " << key);
  return it->second;
}

std::int64_t RunConfig::i64(const std::string& key) const {
  const std::string& v = str(key);
  size_t pos = 0;
  std::int64_t out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  DYN_CHECK(pos == v.size() && !v.empty(), key << ": expected integer, got '" << v << "'");
  return out;
}

double RunConfig::f64(const std::string& key) const {
  const std::string& v = str(key);
  size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  DYN_CHECK(pos == v.size() && !v.empty(), key << ": expected number, got '" << v << "'");
  return out;
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = str(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  DYN_CHECK(false, key << ": expected true/false, got '" << v << "'");
  return false;
}

std::vector<std::int64_t> RunConfig::i64_list(const std::string& key) const {
  const std::string& v = str(key);
  std::vector<std::int64_t> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) {
    size_t pos = 0;
    std::int64_t x = 0;
    try {
      x = std::stoll(trim(item), &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    DYN_CHECK(pos == trim(item).size() && !trim(item).empty(),
              key << ": expected comma-separated integers, got '" << v << "'");
    out.push_back(x);
  }
  DYN_CHECK(!out.empty(), key << ": empty list");
  return out;
}

synth::DatasetParams RunConfig::dataset_params() const {
  synth::DatasetParams p;
  p.out_dir = str("data.dir");
  p.count = static_cast<int>(i64("data.count"));
  p.test_fraction = f64("data.test_fraction");
  p.seed = static_cast<std::uint64_t>(i64("seed"));
  p.write_target_images = flag("data.write_targets");
  return p;
}

text::PretrainConfig RunConfig::pretrain_config() const {
  text::PretrainConfig p;
  p.epochs = static_cast<int>(i64("pretrain.epochs"));
  p.batch = static_cast<int>(i64("pretrain.batch"));
  p.lr = f64("pretrain.lr");
  p.tau = f64("pretrain.tau");
  p.early_stop_accuracy = f64("pretrain.early_stop");
  p.seed = static_cast<std::uint64_t>(i64("seed"));
  p.model.text_dim = i64("sim.text_dim");
  p.model.image_base = i64("sim.image_base");
  p.model.max_len = static_cast<int>(i64("sim.max_len"));
  return p;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig t;
  t.gen.image_size = i64("generator.image_size");
  t.gen.channels = i64_list("generator.channels");
  t.gen.levels = static_cast<std::int64_t>(t.gen.channels.size());
  t.gen.text_dim = i64("generator.text_dim");
  t.gen.heads = i64("generator.heads");
  t.gen.head_channels = i64("generator.head_channels");
  t.gen.comp_dim = i64("generator.comp_dim");
  t.gen.comp_hidden = i64("generator.comp_hidden");
  t.gen.affine_hidden = i64("generator.affine_hidden");
  t.gen.affine_pairs = i64("generator.affine_pairs");
  t.gen.use_comp_pred = flag("generator.use_comp_pred");
  t.gen.fixed_alpha = f64("generator.fixed_alpha");
  t.gen.use_c_affine = flag("generator.use_c_affine");
  t.gen.use_s_affine = flag("generator.use_s_affine");
  t.gen.use_dcblock = flag("generator.use_dcblock");
  t.gen.use_semantic_decoder = flag("generator.use_semantic_decoder");

  t.disc.image_size = i64("generator.image_size");
  t.disc.channels = i64_list("discriminator.channels");
  t.disc.text_dim = i64("discriminator.text_dim");
  t.disc.proj_dim = i64("discriminator.proj_dim");
  t.disc.k = f64("discriminator.k");
  t.disc.p = i64("discriminator.p");

  t.lr_g = f64("train.lr_g");
  t.lr_d = f64("train.lr_d");
  t.beta1 = f64("train.beta1");
  t.beta2 = f64("train.beta2");
  t.lambda1 = f64("train.lambda1");
  t.lambda2 = f64("train.lambda2");
  t.batch = static_cast<int>(i64("train.batch"));
  t.epochs = static_cast<int>(i64("train.epochs"));
  t.matched_fraction = f64("train.matched_fraction");
  t.seed = static_cast<std::uint64_t>(i64("seed"));
  t.eval_every = static_cast<int>(i64("train.eval_every"));
  t.checkpoint_every = static_cast<int>(i64("train.checkpoint_every"));
  t.eval_limit = static_cast<int>(i64("train.eval_limit"));
  t.data_dir = str("data.dir");
  t.sim_checkpoint = str("train.sim_checkpoint");
  t.out_dir = str("out_dir");
  t.resume = str("train.resume");
  return t;
}

void RunConfig::echo(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir + "/config.txt");
  DYN_CHECK(f.is_open(), "cannot write " << dir << "/config.txt");
  f << "# dynedit " << kVersion << "\n";
  for (const auto& [k, v] : kv_) f << k << "=" << v << "\n";
}

}  // namespace dynedit::cfg
