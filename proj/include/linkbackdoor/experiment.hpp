#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "linkbackdoor/config.hpp"
#include "linkbackdoor/dataset.hpp"
#include "linkbackdoor/metrics.hpp"

namespace lbd {

/// The configured dataset, or the synthetic graph for `synth` without a directory.
Dataset load_experiment_dataset(const ExperimentConfig& cfg);

/// Attack options for one baseline on one seed: initial trigger and update
/// strategy per attack kind, everything else from the config.
BackdoorOptions attack_options(const ExperimentConfig& cfg, AttackKind kind, const Graph& train_graph,
                               std::uint64_t seed);

/// Everything one (model, seed) run produces.
struct SeedRun {
  ModelKind model = ModelKind::GAE;
  std::uint64_t seed = 0;
  SplitResult split;
  ModelState clean;
  BackdoorResult backdoor;
  AttackReport report;
};

SplitResult experiment_split(const Dataset& ds, std::uint64_t seed);
ModelState train_clean(const ExperimentConfig& cfg, ModelKind kind, const SplitResult& split, std::uint64_t seed);

/// split, clean training (unless `clean` is given), attack training and
/// evaluation. With poison_rate 0 no attack runs: the backdoored model is the
/// clean one and the trigger has no edges.
SeedRun run_seed(const ExperimentConfig& cfg, const Dataset& ds, ModelKind kind, std::uint64_t seed,
                 const ModelState* clean = nullptr);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation, 0 for one value
  std::size_t n = 0;
};
Stat summarize(const std::vector<double>& values);

/// Writes report.csv, report.json, trigger.txt, targets.txt and both model
/// checkpoints into `dir` (created through a temporary sibling and renamed).
void write_seed_outputs(const ExperimentConfig& cfg, const SeedRun& run, const std::filesystem::path& dir);

/// `<out>/<model>/seed_<seed>`.
std::filesystem::path seed_dir(const std::filesystem::path& out, ModelKind kind, std::uint64_t seed);

/// Per-seed report rows found below `root` (recursive), in path order.
std::vector<AttackReport> collect_reports(const std::filesystem::path& root);
AttackReport parse_report_row(const std::string& line);

/// `# key=value` lines for the head of every CSV output.
std::string config_comment(const ExperimentConfig& cfg);

/// Experiment verbs. Each returns a process exit code: 0 when every seed
/// completed. Progress and per-seed failures go to `log`.
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);
int run_defense(const ExperimentConfig& cfg, std::ostream& log);
int run_transfer(const ExperimentConfig& cfg, std::ostream& log);
int run_sensitivity(const ExperimentConfig& cfg, std::ostream& log);
/// Mean/std table over every report below the given directories, written as
/// CSV to `out` (when non-empty) and as a text table to `table`.
int run_report(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out, std::ostream& table);

}  // namespace lbd
