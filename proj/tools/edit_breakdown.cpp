// Per-edit-kind scoreboard for a trained checkpoint: how often the edit beats
// the unedited source at matching the target caption, and at what pixel cost.
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "dynedit/evalkit.hpp"
#include "dynedit/synthscene.hpp"
#include "dynedit/training.hpp"

using namespace dynedit;

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: edit_breakdown <checkpoint> <dataset-dir> [limit]\n");
    return 2;
  }
  auto st = train::load_checkpoint(argv[1]);
  auto records = synth::load_manifest(argv[2]);
  std::vector<synth::Record> test;
  for (const auto& r : records)
    if (r.is_test) test.push_back(r);
  int limit = argc > 3 ? std::atoi(argv[3]) : 0;

  GradGuard off(false);
  auto evals = evalkit::evaluate_records(st.g, st.sim, test, argv[2], limit);

  struct Row {
    int n = 0, improved = 0;
    double l2 = 0, sim = 0, src_sim = 0, attr = 0;
  };
  std::map<std::string, Row> rows;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const auto& ev = evals[i];
    double src_sim = evalkit::sim_score(st.sim, ev.source, ev.caption);
    Row& row = rows[synth::edit_name(ev.kind)];
    ++row.n;
    row.improved += ev.sim > src_sim;
    row.l2 += ev.l2;
    row.sim += ev.sim;
    row.src_sim += src_sim;
    row.attr += ev.attr;
  }
  std::printf("%-12s %4s %9s %8s %8s %9s %7s\n", "kind", "n", "improved", "l2", "sim",
              "src_sim", "attr");
  Row tot;
  for (auto& [kind, r] : rows) {
    std::printf("%-12s %4d %8.1f%% %8.4f %8.4f %9.4f %7.4f\n", kind.c_str(), r.n,
                100.0 * r.improved / r.n, r.l2 / r.n, r.sim / r.n, r.src_sim / r.n, r.attr / r.n);
    tot.n += r.n;
    tot.improved += r.improved;
    tot.l2 += r.l2;
    tot.sim += r.sim;
    tot.src_sim += r.src_sim;
    tot.attr += r.attr;
  }
  std::printf("%-12s %4d %8.1f%% %8.4f %8.4f %9.4f %7.4f\n", "all", tot.n,
              100.0 * tot.improved / tot.n, tot.l2 / tot.n, tot.sim / tot.n, tot.src_sim / tot.n,
              tot.attr / tot.n);
  return 0;
}
