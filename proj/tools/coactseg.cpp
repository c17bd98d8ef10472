#include "coactseg/binary_io.hpp"
#include "coactseg/config.hpp"
#include "coactseg/experiments.hpp"
#include "coactseg/parallel.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace coact;
namespace fs = std::filesystem;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kRuntime = 2, kVerification = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw std::runtime_error(std::string(what) + " not found: " + p.string());
}

fs::path manifest_path(const RunConfig& c) { return c.data_dir / "manifest.tsv"; }

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + p.string());
}

std::string seed_line(std::uint64_t seed) { return "# root_seed = " + std::to_string(seed) + "\n"; }

int cmd_phantom(const RunConfig& c) {
  const Manifest m = gen_dataset(c.phantom, c.counts, c.data_dir);
  write_text(c.data_dir / "config.txt", seed_line(c.seed) + dump_config(c));
  std::printf("wrote %zu cases to %s\n", m.records.size(), c.data_dir.string().c_str());
  return kOk;
}

int cmd_train(const RunConfig& c) {
  require_file(manifest_path(c), "manifest");
  const Manifest m = Manifest::load(manifest_path(c));
  fs::create_directories(c.run_dir);
  write_text(c.run_dir / "config.txt", seed_line(c.seed) + dump_config(c));
  const TrainResult r = train(m, c.train, c.run_dir);
  const TrainRecord& last = r.log.records.back();
  std::printf("iteration %zu: total %.6f l_al %.6f l_nl %.6f l_rr %.6f lambda2 %g\n", last.iteration, last.total,
              last.l_al, last.l_nl, last.l_rr, last.lambda2);
  std::printf("wrote %s\n", (c.run_dir / "final.ckpt").string().c_str());
  return kOk;
}

int cmd_infer(const RunConfig& c) {
  require_file(manifest_path(c), "manifest");
  require_file(c.checkpoint_path(), "checkpoint");
  const Manifest m = Manifest::load(manifest_path(c));
  const SegNet net = load_checkpoint(c.checkpoint_path());
  const fs::path dir = c.out_dir / "maps";
  std::size_t n = 0;
  for (const ManifestRecord* r : m.select(Split::Val)) {
    const Sample s = m.load_sample(*r);
    save_head_maps(dir, r->name, sliding_window_predict(net, s, c.infer));
    ++n;
  }
  std::printf("wrote head maps for %zu validation cases to %s\n", n, dir.string().c_str());
  return kOk;
}

int cmd_eval(const RunConfig& c) {
  require_file(manifest_path(c), "manifest");
  require_file(c.checkpoint_path(), "checkpoint");
  const Manifest m = Manifest::load(manifest_path(c));
  CheckpointMeta meta;
  const SegNet net = load_checkpoint(c.checkpoint_path(), &meta);
  const MetricsReport report = evaluate_dataset(m, net, c.infer, c.metrics);
  std::ostringstream csv, gaps;
  csv << seed_line(meta.root_seed);
  report.write_csv(csv);
  gaps << seed_line(meta.root_seed);
  report.write_head_gap_csv(gaps);
  const std::string md = "# Evaluation\n\nroot seed " + std::to_string(meta.root_seed) + ", " +
                         std::to_string(meta.iteration) + " training iterations\n\n" + report.markdown();
  write_text(c.out_dir / "report.csv", csv.str());
  write_text(c.out_dir / "head_gap.csv", gaps.str());
  write_text(c.out_dir / "report.md", md);
  std::cout << md;
  return kOk;
}

int cmd_gradcheck(const RunConfig& c) {
  SegNetConfig net = c.train.net;
  net.param_seed = c.seed;
  GradCheckOptions opts;
  opts.eps = c.gradcheck.eps;
  opts.max_coords_per_tensor = c.gradcheck.coords;
  const NetworkGradcheck g = network_gradcheck(net, c.gradcheck.patch, opts, derive_seed(c.seed, 7, 0));
  const bool ok = std::isfinite(g.result.max_rel_error) && g.result.max_rel_error < c.gradcheck.tolerance;
  std::printf("max relative error %.3e over %zu coordinates (tolerance %.1e) in %.1f s: %s\n",
              g.result.max_rel_error, g.result.coords_checked, c.gradcheck.tolerance, g.seconds,
              ok ? "ok" : "FAILED");
  return ok ? kOk : kVerification;
}

int cmd_ablate(const RunConfig& c) {
  require_file(manifest_path(c), "manifest");
  const Manifest m = Manifest::load(manifest_path(c));
  const auto single = load_pool(m, Split::Train, SampleKind::SingleTimePoint);
  const auto two = load_pool(m, Split::Train, SampleKind::TwoTimePoint);
  std::vector<AblationRow> rows;
  std::ostringstream gaps;
  gaps << "\n| Recipe | Single time-point head gap |\n|---|---|\n";
  for (const AblationArm& arm : ablation_arms()) {
    std::fprintf(stderr, "ablate: %s (%zu seeds)\n", arm.name.c_str(), c.ablate.seeds);
    const ArmOutcome o = run_arm(arm, c.train, c.ablate.seeds, single, two, m, c.infer, c.metrics);
    std::ostringstream csv;
    csv << seed_line(c.seed);
    o.report.write_csv(csv);
    write_text(c.out_dir / "ablation" / (arm.name + ".csv"), csv.str());
    rows.push_back(to_row(o));
    const auto g = o.report.mean_head_gap(SampleKind::SingleTimePoint);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", g.value_or(NAN));
    gaps << "| " << arm.name << " | " << (g ? buf : "N/A") << " |\n";
  }
  const std::string md = "# Ablation\n\nroot seed " + std::to_string(c.seed) + ", " + std::to_string(c.ablate.seeds) +
                         " seeds per row, " + std::to_string(c.train.iterations) + " iterations\n\n" +
                         ablation_markdown(rows) + gaps.str();
  write_text(c.out_dir / "ablation.md", md);
  std::cout << md;
  return kOk;
}

int cmd_report(const RunConfig& c) {
  const fs::path rows_path = c.out_dir / "report.csv";
  require_file(rows_path, "evaluation report");
  std::ifstream rows(rows_path);
  std::ifstream gaps(c.out_dir / "head_gap.csv");
  const MetricsReport report = MetricsReport::read_csv(rows, gaps ? &gaps : nullptr);
  std::string md = "# Summary\n\n" + report.markdown();
  const fs::path log_path = c.run_dir / "train_log.csv";
  if (fs::is_regular_file(log_path)) {
    std::ifstream log(log_path);
    std::string line, last;
    while (std::getline(log, line))
      if (!line.empty()) last = line;
    md += "\nlast training record (iteration,total,l_al,l_nl,l_rr,lambda2,seconds): " + last + "\n";
  }
  write_text(c.out_dir / "summary.md", md);
  std::cout << md;
  return kOk;
}

struct Command {
  const char* name;
  const char* help;
  int (*run)(const RunConfig&);
};

const Command kCommands[] = {
    {"phantom", "generate a synthetic dataset into path.data", cmd_phantom},
    {"train", "train on path.data, write checkpoints and log to path.run", cmd_train},
    {"infer", "write sliding-window head maps for validation cases to path.out/maps", cmd_infer},
    {"eval", "score validation cases, write report.csv/report.md to path.out", cmd_eval},
    {"gradcheck", "finite-difference check of the full network and loss", cmd_gradcheck},
    {"ablate", "train the regularizer/data ablation grid, write path.out/ablation.md", cmd_ablate},
    {"report", "summarize path.out/report.csv and path.run/train_log.csv", cmd_report},
};

struct Invocation {
  std::string config_file;
  bool dump = false;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> overrides;
};

std::string key_listing() {
  std::string out = "Config keys (in a --config file as `key = value`, or as --key value):\n";
  for (const auto& k : config_keys()) {
    out += "  " + k.name;
    out += std::string(k.name.size() < 28 ? 28 - k.name.size() : 1, ' ');
    out += k.help + " [" + k.get(RunConfig{}) + "]\n";
  }
  return out;
}

RunConfig build_config(const Invocation& inv) {
  RunConfig c;
  if (!inv.config_file.empty()) load_config_file(c, inv.config_file);
  for (const auto& [name, opt] : inv.overrides)
    if (opt->count() > 0) set_config_value(c, name, inv.values.at(name));
  c.resolve();
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal lesion segmentation from heterogeneous annotations"};
  app.require_subcommand(1);
  app.footer(key_listing() + "\nEnvironment: COACTSEG_THREADS caps worker threads.\n"
             "Exit codes: 0 ok, 1 usage, 2 runtime failure, 3 verification failure.");

  std::map<std::string, Invocation> invocations;
  for (const Command& cmd : kCommands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    Invocation& inv = invocations[cmd.name];
    sub->add_option("--config", inv.config_file, "key = value config file (command-line keys win)")
        ->check(CLI::ExistingFile);
    sub->add_flag("--dump-config", inv.dump, "print the resolved config and exit");
    for (const auto& k : config_keys())
      inv.overrides.emplace_back(k.name, sub->add_option("--" + k.name, inv.values[k.name], k.help));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  for (const Command& cmd : kCommands) {
    if (!app.got_subcommand(cmd.name)) continue;
    const Invocation& inv = invocations.at(cmd.name);
    RunConfig cfg;
    try {
      cfg = build_config(inv);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "coactseg %s: %s\n", cmd.name, e.what());
      return kUsage;
    }
    if (inv.dump) {
      std::cout << dump_config(cfg);
      return kOk;
    }
    try {
      return cmd.run(cfg);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "coactseg %s: %s\n", cmd.name, e.what());
      return kRuntime;
    }
  }
  return kUsage;
}
