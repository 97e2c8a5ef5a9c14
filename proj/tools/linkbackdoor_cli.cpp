#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "linkbackdoor/dataset.hpp"
#include "linkbackdoor/experiment.hpp"
#include "linkbackdoor/viz_export.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string data_dir, dataset, models, attack, seeds;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Config file (sectioned key=value)");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--seed", c.seed, "Run a single seed");
}

void add_experiment(CLI::App* cmd, Common& c) {
  add_common(cmd, c);
  cmd->add_option("--data-dir", c.data_dir, "Directory holding <name>.nodes and <name>.edges");
  cmd->add_option("--dataset", c.dataset, "Dataset name (synth generates one)");
  cmd->add_option("--model", c.models, "Model kinds, comma separated (GAE,VGAE,GIC,ARGA,ARVGA)");
  cmd->add_option("--attack", c.attack, "link-backdoor, erb, random, pso or no-inj");
  cmd->add_option("--seeds", c.seeds, "Seed list, comma separated");
  cmd->add_option("--set", c.sets, "Override any setting: section.key=value (repeatable)");
}

lbd::ExperimentConfig resolve(const Common& c) {
  lbd::ExperimentConfig cfg;
  if (!c.config.empty()) cfg = lbd::load_config(c.config);
  if (!c.data_dir.empty()) lbd::apply_setting(cfg, "data.dir", c.data_dir);
  if (!c.dataset.empty()) lbd::apply_setting(cfg, "data.name", c.dataset);
  if (!c.models.empty()) lbd::apply_setting(cfg, "model.kinds", c.models);
  if (!c.attack.empty()) lbd::apply_setting(cfg, "attack.kind", c.attack);
  if (!c.seeds.empty()) lbd::apply_setting(cfg, "run.seeds", c.seeds);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects section.key=value, got '" + s + "'");
    lbd::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.out = c.out;
  lbd::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Link prediction backdoor experiments"};
  app.require_subcommand(1);

  Common prep_c;
  std::string raw_dir, prep_name = "cora";
  auto* prepare = app.add_subcommand("prepare", "Convert a LINQS dataset (<name>.content, <name>.cites)");
  prepare->add_option("raw_dir", raw_dir, "Raw dataset directory")->required();
  prepare->add_option("--name", prep_name, "Dataset name");
  add_common(prepare, prep_c);

  Common synth_c;
  lbd::SynthConfig synth_cfg;
  auto* synth = app.add_subcommand("synth", "Write the synthetic citation-like graph");
  add_common(synth, synth_c);
  synth->add_option("--name", synth_cfg.name, "Dataset name");
  synth->add_option("--nodes", synth_cfg.nodes, "Node count");
  synth->add_option("--features", synth_cfg.features, "Feature count");
  synth->add_option("--edges", synth_cfg.edges, "Edge count");
  synth->add_option("--classes", synth_cfg.classes, "Class count");

  Common run_c, defend_c, transfer_c, sens_c;
  auto* run = app.add_subcommand("run", "Clean training, attack and evaluation per seed");
  add_experiment(run, run_c);
  auto* defend = app.add_subcommand("defend", "run plus injected-feature noise at inference");
  add_experiment(defend, defend_c);
  auto* transfer = app.add_subcommand("transfer", "Surrogate x target transfer matrix");
  add_experiment(transfer, transfer_c);
  auto* sens = app.add_subcommand("sensitivity", "Sweep poison rate or warmup");
  add_experiment(sens, sens_c);

  Common viz_c;
  std::string viz_dir, viz_model;
  auto* viz = app.add_subcommand("export-viz", "Export a run's poisoned graph as GEXF");
  viz->add_option("run_dir", viz_dir, "Run directory")->required();
  viz->add_option("--model", viz_model, "Model kind (default: first in the run)");
  add_common(viz, viz_c);

  Common rep_c;
  std::vector<std::string> rep_dirs;
  auto* report = app.add_subcommand("report", "Aggregate per-seed reports into mean/std");
  report->add_option("run_dirs", rep_dirs, "Run directories")->required();
  add_common(report, rep_c);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prepare) {
      if (prep_c.out.empty()) throw std::invalid_argument("prepare: --out is required");
      const auto r = lbd::convert_linqs(raw_dir, prep_name, prep_c.out);
      std::cout << r.name << ": " << r.nodes << " nodes, " << r.unique_edges << " edges, " << r.features
                << " features, " << r.classes << " classes (" << r.raw_edge_lines << " citation lines, "
                << r.dropped_lines << " dropped)\n";
      return 0;
    }
    if (*synth) {
      if (synth_c.out.empty()) throw std::invalid_argument("synth: --out is required");
      if (synth_c.seed) synth_cfg.seed = *synth_c.seed;
      const auto ds = lbd::make_synthetic(synth_cfg);
      lbd::save_dataset(ds, synth_c.out);
      std::cout << ds.name << ": " << ds.graph.n_nodes() << " nodes, " << ds.graph.n_edges() << " edges, "
                << ds.graph.n_features() << " features\n";
      return 0;
    }
    if (*run) return lbd::run_experiment(resolve(run_c), std::cerr);
    if (*defend) return lbd::run_defense(resolve(defend_c), std::cerr);
    if (*transfer) return lbd::run_transfer(resolve(transfer_c), std::cerr);
    if (*sens) return lbd::run_sensitivity(resolve(sens_c), std::cerr);
    if (*viz) {
      std::optional<lbd::ModelKind> kind;
      if (!viz_model.empty()) kind = lbd::parse_model_kind(viz_model);
      const fs::path out = viz_c.out.empty() ? fs::path(viz_dir) / "graph.gexf" : fs::path(viz_c.out);
      const auto s = lbd::export_run(viz_dir, kind, viz_c.seed, out);
      std::cout << out.string() << ": " << s.nodes << " nodes (" << s.injected << " injected), " << s.original_edges
                << " original edges, " << s.trigger_edges << " trigger edges, " << s.target_edges << " target links\n";
      return 0;
    }
    if (*report) {
      std::vector<fs::path> dirs(rep_dirs.begin(), rep_dirs.end());
      const fs::path out = rep_c.out.empty() ? fs::path() : fs::path(rep_c.out) / "report.csv";
      return lbd::run_report(dirs, out, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
