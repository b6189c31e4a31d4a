#include "dynedit/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

#include "dynedit/evalkit.hpp"
#include "dynedit/png_io.hpp"
#include "dynedit/serialize.hpp"

namespace fs = std::filesystem;

namespace dynedit::train {

namespace {

double wall_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

json train_config_json(const TrainConfig& c) {
  return {{"gen", generator_config_json(c.gen)},
          {"disc", discriminator_config_json(c.disc)},
          {"lr_g", c.lr_g},
          {"lr_d", c.lr_d},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},
          {"batch", c.batch},
          {"epochs", c.epochs},
          {"matched_fraction", c.matched_fraction},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"checkpoint_every", c.checkpoint_every},
          {"eval_limit", c.eval_limit},
          {"data_dir", c.data_dir},
          {"sim_checkpoint", c.sim_checkpoint},
          {"out_dir", c.out_dir}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.gen = generator_config_from_json(j.at("gen"));
  c.disc = discriminator_config_from_json(j.at("disc"));
  c.lr_g = j.at("lr_g");
  c.lr_d = j.at("lr_d");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.lambda1 = j.at("lambda1");
  c.lambda2 = j.at("lambda2");
  c.batch = j.at("batch");
  c.epochs = j.at("epochs");
  c.matched_fraction = j.at("matched_fraction");
  c.seed = j.at("seed");
  c.eval_every = j.at("eval_every");
  c.checkpoint_every = j.at("checkpoint_every");
  c.eval_limit = j.at("eval_limit");
  c.data_dir = j.at("data_dir");
  c.sim_checkpoint = j.at("sim_checkpoint");
  c.out_dir = j.at("out_dir");
  return c;
}

TrainState::TrainState(const TrainConfig& c, text::SimilarityModel<float> s)
    : cfg(c),
      sim(std::move(s)),
      rng(c.seed),
      g(rng, c.gen),
      d(rng, c.disc),
      opt_g(g.params(), c.lr_g, c.beta1, c.beta2),
      opt_d(d.params(), c.lr_d, c.beta1, c.beta2) {
  DYN_CHECK(cfg.gen.text_dim == sim.cfg.text_dim,
            "generator text width " << cfg.gen.text_dim << " does not match the scorer's "
                                    << sim.cfg.text_dim);
  auto sp = sim.params();
  for (auto& [name, p] : sp) p.set_requires_grad(false);
}

TrainData load_train_data(const std::string& dir, const text::SimilarityModel<float>& sim) {
  TrainData d;
  d.dir = dir;
  for (auto& r : synth::load_manifest(dir)) (r.is_test ? d.test : d.train).push_back(r);
  DYN_CHECK(!d.train.empty(), "dataset " << dir << " has no training records");

  d.rgb.reserve(d.train.size());
  for (const auto& r : d.train) d.rgb.push_back(read_png(dir + "/" + r.src_png).rgb);

  GradGuard off(false);
  std::int64_t n = static_cast<std::int64_t>(d.train.size()), dim = sim.cfg.text_dim;
  std::vector<float> v(static_cast<size_t>(n * dim));
  const std::int64_t chunk = 256;
  for (std::int64_t at = 0; at < n; at += chunk) {
    std::int64_t take = std::min(chunk, n - at);
    std::vector<std::string> caps;
    caps.reserve(static_cast<size_t>(take));
    for (std::int64_t i = 0; i < take; ++i)
      caps.push_back(d.train[static_cast<size_t>(at + i)].src_caption);
    Tensor<float> e = sim.encode_captions(caps);
    std::copy(e.data().begin(), e.data().end(), v.begin() + at * dim);
  }
  d.emb = Tensor<float>({n, dim}, std::move(v));
  return d;
}

TrainBatch<float> make_batch(TrainState& st, const TrainData& data) {
  std::int64_t n = static_cast<std::int64_t>(data.train.size());
  std::int64_t B = st.cfg.batch, D = st.cfg.gen.text_dim, px = st.cfg.gen.image_size;
  DYN_CHECK(n >= 2, "need at least two records to draw mismatched targets");

  std::vector<float> xv(static_cast<size_t>(B * 3 * px * px));
  std::vector<float> ev(static_cast<size_t>(B * D)), hv(static_cast<size_t>(B * D));
  const auto& emb = data.emb.data();
  for (std::int64_t i = 0; i < B; ++i) {
    std::int64_t idx = st.rng.randint(0, n - 1);
    Tensor<float> xi = synth::image_to_tensor(data.rgb[static_cast<size_t>(idx)]);
    DYN_CHECK(xi.numel() == 3 * px * px, "dataset image size does not match the model");
    std::copy(xi.data().begin(), xi.data().end(), xv.begin() + i * 3 * px * px);
    std::copy(emb.begin() + idx * D, emb.begin() + (idx + 1) * D, ev.begin() + i * D);

    bool matched = st.cfg.matched_fraction > 0 && st.rng.uniform() < st.cfg.matched_fraction;
    std::int64_t j = idx;
    if (!matched) {
      j = st.rng.randint(0, n - 2);
      if (j >= idx) ++j;
    }
    std::copy(emb.begin() + j * D, emb.begin() + (j + 1) * D, hv.begin() + i * D);
  }
  return {Tensor<float>({B, 3, px, px}, std::move(xv)), Tensor<float>({B, D}, std::move(ev)),
          Tensor<float>({B, D}, std::move(hv))};
}

StepLog train_step(TrainState& st, const TrainBatch<float>& b) {
  StepLog log;

  st.opt_d.zero_grad();
  Tensor<float> dl;
  log.d = d_loss(st.g, st.d, b, dl);
  backward(dl);
  st.opt_d.step();

  // The generator's update must not write into D; unhooking D's parameters
  // also keeps the backward pass off their branches entirely.
  auto dp = st.d.params();
  for (auto& [name, p] : dp) p.set_requires_grad(false);
  st.opt_g.zero_grad();
  Tensor<float> gl;
  log.g = g_loss(st.g, st.d, st.sim, b, st.cfg.lambda1, st.cfg.lambda2, gl);
  backward(gl);
  st.opt_g.step();
  for (auto& [name, p] : dp) p.set_requires_grad(true);

  log.step = ++st.step;
  return log;
}

void save_checkpoint(const TrainState& st, const std::string& path) {
  CheckpointWriter w;
  auto gp = st.g.params();
  auto dp = st.d.params();
  auto sp = st.sim.params();
  w.add_params(gp);
  w.add_params(dp);
  w.add_params(sp, "sim.");

  auto add_opt = [&](const std::string& tag, const Adam<float>& o) {
    const auto& m1 = o.moment1();
    const auto& m2 = o.moment2();
    for (size_t i = 0; i < m1.size(); ++i) {
      w.add_f64(tag + ".m" + std::to_string(i), {static_cast<std::int64_t>(m1[i].size())}, m1[i]);
      w.add_f64(tag + ".v" + std::to_string(i), {static_cast<std::int64_t>(m2[i].size())}, m2[i]);
    }
  };
  add_opt("opt_g", st.opt_g);
  add_opt("opt_d", st.opt_d);

  json meta;
  meta["kind"] = "train";
  meta["step"] = st.step;
  meta["rng"] = st.rng.state();
  meta["opt_g_t"] = st.opt_g.step_count();
  meta["opt_d_t"] = st.opt_d.step_count();
  meta["config"] = train_config_json(st.cfg);
  meta["vocab"] = st.sim.vocab.tokens();
  meta["sim_text_dim"] = st.sim.cfg.text_dim;
  meta["sim_image_base"] = st.sim.cfg.image_base;
  meta["sim_max_len"] = st.sim.cfg.max_len;
  w.set_meta(meta);
  w.write(path);
}

TrainState load_checkpoint(const std::string& path) {
  CheckpointReader r(path);
  DYN_CHECK(r.meta().value("kind", "") == "train", path << " is not a training checkpoint");
  TrainConfig cfg = train_config_from_json(r.meta().at("config"));

  text::SimilarityConfig sc;
  sc.text_dim = r.meta().at("sim_text_dim").get<std::int64_t>();
  sc.image_base = r.meta().at("sim_image_base").get<std::int64_t>();
  sc.max_len = r.meta().at("sim_max_len").get<int>();
  Rng zero(0);
  text::SimilarityModel<float> sim(
      zero, text::Vocab::from_tokens(r.meta().at("vocab").get<std::vector<std::string>>()), sc);
  {
    auto sp = sim.params();
    r.load_params(sp, "sim.");
  }

  TrainState st(cfg, std::move(sim));
  {
    auto gp = st.g.params();
    r.load_params(gp);
    auto dp = st.d.params();
    r.load_params(dp);
  }
  auto load_opt = [&](const std::string& tag, Adam<float>& o, std::int64_t t) {
    std::vector<std::vector<double>> m, v;
    for (size_t i = 0; i < o.params().size(); ++i) {
      m.push_back(r.f64(tag + ".m" + std::to_string(i)));
      v.push_back(r.f64(tag + ".v" + std::to_string(i)));
    }
    o.restore(t, std::move(m), std::move(v));
  };
  load_opt("opt_g", st.opt_g, r.meta().at("opt_g_t").get<std::int64_t>());
  load_opt("opt_d", st.opt_d, r.meta().at("opt_d_t").get<std::int64_t>());
  st.rng.set_state(r.meta().at("rng").get<std::string>());
  st.step = r.meta().at("step").get<std::int64_t>();
  return st;
}

TrainReport train_loop(const TrainConfig& cfg, std::ostream* log) {
  double t0 = wall_seconds();
  DYN_CHECK(!cfg.data_dir.empty(), "train.data_dir is required");
  DYN_CHECK(!cfg.out_dir.empty(), "train.out_dir is required");
  fs::create_directories(cfg.out_dir);

  std::optional<TrainState> state;
  if (!cfg.resume.empty()) {
    state.emplace(load_checkpoint(cfg.resume));
    // Schedule and paths follow the caller; the restored architecture,
    // optimizer state and sampling stream stay authoritative.
    state->cfg.data_dir = cfg.data_dir;
    state->cfg.out_dir = cfg.out_dir;
    state->cfg.epochs = cfg.epochs;
    state->cfg.eval_every = cfg.eval_every;
    state->cfg.checkpoint_every = cfg.checkpoint_every;
    state->cfg.eval_limit = cfg.eval_limit;
  } else {
    DYN_CHECK(!cfg.sim_checkpoint.empty(), "train.sim_checkpoint is required");
    state.emplace(cfg, text::SimilarityModel<float>::load(cfg.sim_checkpoint));
  }
  TrainState& st = *state;

  TrainData data = load_train_data(st.cfg.data_dir, st.sim);
  std::int64_t n_train = static_cast<std::int64_t>(data.train.size());
  std::int64_t spe = (n_train + st.cfg.batch - 1) / st.cfg.batch;
  std::int64_t total = static_cast<std::int64_t>(st.cfg.epochs) * spe;
  std::int64_t eval_every = st.cfg.eval_every > 0 ? st.cfg.eval_every : spe;
  std::int64_t ckpt_every = st.cfg.checkpoint_every > 0 ? st.cfg.checkpoint_every : spe;

  std::string hist_path = st.cfg.out_dir + "/history.csv";
  bool append = !cfg.resume.empty() && fs::exists(hist_path);
  std::ofstream hist(hist_path, append ? std::ios::app : std::ios::trunc);
  DYN_CHECK(hist.good(), "cannot open " << hist_path);
  if (!append) hist << kHistoryHeader << "\n";
  hist << std::setprecision(10);

  TrainReport rep;
  while (st.step < total) {
    TrainBatch<float> b = make_batch(st, data);
    StepLog sl;
    try {
      sl = train_step(st, b);
    } catch (const std::exception&) {
      save_checkpoint(st, st.cfg.out_dir + "/abort.ckpt");
      throw;
    }
    if (st.step % eval_every == 0 || st.step == total) {
      auto recs = evalkit::evaluate_records(st.g, st.sim, data.test, data.dir, st.cfg.eval_limit);
      auto sum = evalkit::summarize(recs);
      hist << sl.step << ',' << sl.d.total << ',' << sl.g.total << ',' << sl.g.adv << ','
           << sl.g.recon << ',' << sl.g.sim << ',' << sum.l2 << ',' << sum.sim << ',' << sum.mp
           << ',' << sum.attr << "\n";
      hist.flush();
      ++rep.evals;
      rep.final_l2 = sum.l2;
      rep.final_sim = sum.sim;
      rep.final_mp = sum.mp;
      rep.final_attr = sum.attr;
      if (log)
        *log << "step " << sl.step << "/" << total << "  d " << sl.d.total << "  g " << sl.g.total
             << "  l2 " << sum.l2 << "  sim " << sum.sim << "  mp " << sum.mp << "  attr "
             << sum.attr << "\n";
    }
    if (st.step % ckpt_every == 0) save_checkpoint(st, st.cfg.out_dir + "/latest.ckpt");
  }

  rep.checkpoint = st.cfg.out_dir + "/checkpoint.ckpt";
  save_checkpoint(st, rep.checkpoint);
  rep.steps = st.step;
  rep.seconds = wall_seconds() - t0;
  return rep;
}

}  // namespace dynedit::train
