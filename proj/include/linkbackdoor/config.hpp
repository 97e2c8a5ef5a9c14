#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "linkbackdoor/attack.hpp"
#include "linkbackdoor/baselines.hpp"
#include "linkbackdoor/models.hpp"

namespace lbd {

enum class AttackKind { LinkBackdoor, ERB, Random, PSO, NoInjection };

std::string_view to_string(AttackKind kind);
/// Accepts link-backdoor, erb, random, pso, no-inj.
AttackKind parse_attack_kind(std::string_view name);

enum class SweepAxis { PoisonRate, Warmup };

struct ExperimentConfig {
  std::filesystem::path data_dir;  ///< empty with name "synth" generates the synthetic graph
  std::string dataset = "synth";
  std::vector<ModelKind> models{ModelKind::GAE};
  AttackKind attack = AttackKind::LinkBackdoor;
  AttackConfig attack_cfg;
  ModelConfig model_cfg;
  PsoConfig pso;
  double erb_probability = 0.8;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out = "runs/default";
  std::vector<ModelKind> transfer_targets;  ///< empty: same as models
  double defense_fraction = 0.1;
  SweepAxis sweep_axis = SweepAxis::PoisonRate;
  std::vector<double> sweep_values{0.01, 0.03, 0.05, 0.10, 0.15};
  std::uint64_t synth_seed = 7;
};

/// Sets one `section.key` value. Throws std::invalid_argument on unknown keys
/// or malformed values.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Sectioned key=value text:
///
///   # comment
///   [attack]
///   poison_rate = 0.05
///
/// Every key must be known; duplicates are errors. Messages carry
/// `source:line`.
ExperimentConfig parse_config(std::istream& in, const std::string& source, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Every setting as (`section.key`, value), in a fixed order. The output
/// directory is left out so that files written under different directories
/// stay identical.
std::vector<std::pair<std::string, std::string>> config_pairs(const ExperimentConfig& cfg);

/// Config text that `parse_config` reads back to the same settings.
std::string render_config(const ExperimentConfig& cfg);

/// Throws std::invalid_argument naming the first bad setting.
void validate(const ExperimentConfig& cfg);

}  // namespace lbd
