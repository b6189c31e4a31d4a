#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dynedit/config.hpp"
#include "dynedit/evalkit.hpp"
#include "dynedit/png_io.hpp"
#include "dynedit/synthscene.hpp"
#include "dynedit/textenc.hpp"
#include "dynedit/training.hpp"

namespace {

using namespace dynedit;

struct Forced {
  std::string key, value;  // dedicated flag -> config key, empty value = unset
};

cfg::RunConfig make_config(const std::string& file, const std::vector<std::string>& sets,
                           const std::vector<Forced>& forced) {
  cfg::RunConfig rc;
  if (!file.empty()) rc.load_file(file);
  for (const auto& s : sets) rc.set_pair(s);
  for (const auto& f : forced)
    if (!f.value.empty()) rc.set(f.key, f.value);
  rc.apply_env();
  return rc;
}

Tensor<float> to_unit(const Tensor<float>& pm1) {
  std::vector<float> v(pm1.data().size());
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = std::clamp(pm1.data()[i] * 0.5f + 0.5f, 0.0f, 1.0f);
  return Tensor<float>(pm1.shape(), std::move(v));
}

int run_gen_data(const cfg::RunConfig& rc) {
  synth::DatasetParams p = rc.dataset_params();
  DYN_CHECK(!p.out_dir.empty(), "gen-data needs --out (or data.dir)");
  synth::generate_dataset(p);
  rc.echo(p.out_dir);
  std::cout << "wrote " << p.count << " scene pairs to " << p.out_dir << "\n";
  return 0;
}

int run_pretrain(const cfg::RunConfig& rc) {
  const std::string data = rc.str("data.dir"), out = rc.str("out_dir");
  DYN_CHECK(!data.empty(), "pretrain-damsm needs --data (or data.dir)");
  DYN_CHECK(!out.empty(), "pretrain-damsm needs --out (or out_dir)");
  rc.echo(out);
  text::SimilarityModel<float> model;
  text::PretrainReport rep = text::pretrain_contrastive(data, rc.pretrain_config(), model,
                                                        &std::cout);
  const std::string ckpt = out + "/sim.ckpt";
  model.save(ckpt);
  std::cout << "held-out accuracy " << rep.heldout_accuracy << " after " << rep.steps
            << " steps (" << rep.seconds << " s)\n"
            << "saved " << ckpt << "\n";
  return 0;
}

int run_train(const cfg::RunConfig& rc) {
  train::TrainConfig tc = rc.train_config();
  DYN_CHECK(!tc.data_dir.empty(), "train needs --data (or data.dir)");
  DYN_CHECK(!tc.out_dir.empty(), "train needs --out (or out_dir)");
  rc.echo(tc.out_dir);
  train::TrainReport rep = train::train_loop(tc, &std::cout);
  std::cout << "trained " << rep.steps << " steps in " << rep.seconds << " s\n"
            << "final l2 " << rep.final_l2 << "  sim " << rep.final_sim << "  mp "
            << rep.final_mp << "  attr " << rep.final_attr << "\n"
            << "saved " << rep.checkpoint << "\n";
  return 0;
}

int run_edit(const std::string& ckpt, const std::string& image, const std::string& caption,
             const std::string& out) {
  train::TrainState st = train::load_checkpoint(ckpt);
  PngImage img = read_png(image);
  DYN_CHECK(img.width == st.cfg.gen.image_size && img.height == st.cfg.gen.image_size,
            "expected a " << st.cfg.gen.image_size << "x" << st.cfg.gen.image_size
                          << " image, got " << img.width << "x" << img.height);
  int unknown = 0;
  auto ids = text::tokenize(caption, st.sim.vocab, st.sim.cfg.max_len, &unknown);
  int words = 0;
  for (auto id : ids) words += id != text::Vocab::kPad;
  DYN_CHECK(words > 0 && unknown < words, "caption has no known words: '" << caption << "'");

  GradGuard off(false);
  Tensor<float> x = synth::image_to_tensor(img.rgb);
  Tensor<float> e = st.sim.encode_captions({caption});
  Tensor<float> y = st.g.generate(x, e);
  Tensor<float> y3 = reshape(y, {3, st.cfg.gen.image_size, st.cfg.gen.image_size});
  write_png(out, img.width, img.height, synth::tensor_to_image(y3).data());

  Tensor<float> x3 = reshape(x, y3.shape());
  std::cout << "l2_error " << evalkit::l2_error(to_unit(x3), to_unit(y3)) << "\n"
            << "sim_score " << evalkit::sim_score(st.sim, y3, caption) << "\n"
            << "wrote " << out << "\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data, const std::string& out,
             int limit) {
  DYN_CHECK(!data.empty(), "eval needs --data");
  DYN_CHECK(!out.empty(), "eval needs --out");
  train::TrainState st = train::load_checkpoint(ckpt);
  std::vector<synth::Record> split;
  for (auto& r : synth::load_manifest(data))
    if (r.is_test) split.push_back(r);
  DYN_CHECK(!split.empty(), "no test records in " << data);
  auto evals = evalkit::evaluate_records(st.g, st.sim, split, data, limit);
  evalkit::emit_report(evals, out);
  evalkit::EvalSummary s = evalkit::summarize(evals);
  std::cout << "n " << s.n << "\n"
            << "l2_error " << s.l2 << " +- " << s.l2_sd << "\n"
            << "sim_score " << s.sim << " +- " << s.sim_sd << "\n"
            << "mp " << s.mp << " +- " << s.mp_sd << "\n"
            << "attr_acc " << s.attr << " +- " << s.attr_sd << "\n"
            << "report in " << out << "\n";
  return 0;
}

int run_ablate(const cfg::RunConfig& rc) {
  train::TrainConfig base = rc.train_config();
  DYN_CHECK(!base.data_dir.empty(), "ablate needs --data (or data.dir)");
  DYN_CHECK(!base.out_dir.empty(), "ablate needs --out (or out_dir)");
  rc.echo(base.out_dir);
  auto rows = evalkit::run_ablation(evalkit::standard_presets(), base, &std::cout);
  evalkit::write_ablation_table(rows, base.out_dir + "/table.csv");
  for (const auto& r : rows)
    std::cout << r.name << "  sim " << r.sim << "  l2 " << r.l2 << "  mp " << r.mp
              << "  attr " << r.attr << "\n";
  std::cout << "table in " << base.out_dir << "/table.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynedit: text-guided image editing on synthetic scenes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cfg::kVersion);

  std::string config_file;
  std::vector<std::string> sets;
  std::string data, out, sim, resume, count;
  std::string ckpt, image, caption, edit_out;
  int limit = 0;

  auto add_cfg = [&](CLI::App* c) {
    c->add_option("--config", config_file, "key=value config file");
    c->add_option("--set", sets, "override one config key (key=value, repeatable)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic edit dataset");
  gen->add_option("--out", out, "dataset directory");
  gen->add_option("--count", count, "number of scene pairs");
  add_cfg(gen);

  CLI::App* pre = app.add_subcommand(
      "pretrain-damsm", "contrastively pretrain the text-image similarity scorer");
  pre->add_option("--data", data, "dataset directory");
  pre->add_option("--out", out, "run directory (writes sim.ckpt)");
  add_cfg(pre);

  CLI::App* trn = app.add_subcommand("train", "adversarially train the editing model");
  trn->add_option("--data", data, "dataset directory");
  trn->add_option("--out", out, "run directory");
  trn->add_option("--sim", sim, "pretrained similarity checkpoint");
  trn->add_option("--resume", resume, "checkpoint to continue from");
  add_cfg(trn);

  CLI::App* edt = app.add_subcommand("edit", "edit one image to match a caption");
  edt->add_option("--checkpoint", ckpt, "training checkpoint")->required();
  edt->add_option("--image", image, "source PNG")->required();
  edt->add_option("--caption", caption, "target caption")->required();
  edt->add_option("--out", edit_out, "output PNG")->required();

  CLI::App* evl = app.add_subcommand("eval", "score a checkpoint on the test split");
  evl->add_option("--checkpoint", ckpt, "training checkpoint")->required();
  evl->add_option("--data", data, "dataset directory");
  evl->add_option("--out", out, "report directory");
  evl->add_option("--limit", limit, "max records (0 = all)");

  CLI::App* abl = app.add_subcommand("ablate",
                                     "train and compare architecture ablation presets");
  abl->add_option("--data", data, "dataset directory");
  abl->add_option("--out", out, "run directory");
  abl->add_option("--sim", sim, "pretrained similarity checkpoint");
  add_cfg(abl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);  // prints help or the offending flag
    return rc == 0 ? 0 : 2;
  }

  try {
    const std::vector<Forced> forced = {{"data.dir", data},
                                        {"out_dir", out},
                                        {"train.sim_checkpoint", sim},
                                        {"train.resume", resume},
                                        {"data.count", count}};
    if (*gen)  // gen-data's --out names the dataset directory itself
      return run_gen_data(make_config(config_file, sets,
                                      {{"data.dir", out}, {"data.count", count}}));
    if (*pre) return run_pretrain(make_config(config_file, sets, forced));
    if (*trn) return run_train(make_config(config_file, sets, forced));
    if (*edt) return run_edit(ckpt, image, caption, edit_out);
    if (*evl) return run_eval(ckpt, data, out, limit);
    if (*abl) return run_ablate(make_config(config_file, sets, forced));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
