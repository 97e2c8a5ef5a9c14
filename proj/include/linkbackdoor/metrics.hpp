#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "linkbackdoor/attack.hpp"

namespace lbd {

/// (n' + 0.5 n'') / n over all |pos| x |neg| comparisons. Throws
/// std::invalid_argument when either list is empty.
double auc(std::span<const double> pos_scores, std::span<const double> neg_scores);

/// AUC of a model on `g` for the given pairs.
double model_auc(const ModelState& state, const Graph& g, std::span<const Edge> pos, std::span<const Edge> neg);

struct AsrResult {
  double asr = 0.0;
  std::vector<Edge> qualifying;   ///< targets the clean model scores below threshold
  std::vector<Edge> successes;    ///< qualifying targets the backdoored model lifts to >= threshold
  std::vector<double> backdoored_scores;  ///< per qualifying target, trigger attached
  std::optional<double> amc;
};

/// Success bookkeeping for already scored qualifying targets.
AsrResult tally_asr(std::vector<Edge> qualifying, std::vector<double> backdoored_scores, double threshold);

/// Eval targets the clean model, on the clean graph, scores below `threshold`.
std::vector<Edge> qualifying_targets(const ModelState& clean, const Graph& g, std::span<const Edge> candidates,
                                     double threshold);

/// ASR and AMC. The denominator comes from the clean model on the clean graph;
/// the backdoored model scores the qualifying targets with the trigger wired
/// onto all of them at once. Throws std::runtime_error when no target
/// qualifies.
AsrResult asr(const ModelState& clean, const ModelState& backdoored, const Trigger& trigger, const Graph& g,
              std::span<const Edge> candidates, double threshold, bool per_target = false);

/// Mean score over successful targets; nullopt when there are none.
std::optional<double> amc(std::span<const double> success_scores);

/// Flips (binary features) or redraws uniformly (otherwise) ceil(fraction d)
/// distinct entries of each injected node. Structure is untouched.
Trigger feature_noise_defense(const Trigger& t, double fraction, std::uint64_t seed);

struct AttackReport {
  std::string dataset;
  std::string model;
  std::string attack;
  std::uint64_t seed = 0;
  double asr = 0.0;
  std::optional<double> amc;
  double auc_clean = 0.0;
  double auc_backdoored = 0.0;
  double bpd = 0.0;
  std::size_t n_eval_targets = 0;
  std::size_t n_success = 0;
  std::size_t trigger_edges = 0;
};

/// All metrics for one seed. Both AUCs use the clean training graph and the
/// split's test pairs.
AttackReport evaluate(const ModelState& clean, const ModelState& backdoored, const Trigger& trigger,
                      const SplitResult& split, std::span<const Edge> eval_targets, double threshold,
                      bool per_target = false);

/// Column order of `report_csv_row`.
std::string report_csv_header();
std::string report_csv_row(const AttackReport& r);
/// JSON object; `config` is embedded verbatim as a string map when given.
std::string report_json(const AttackReport& r, const std::vector<std::pair<std::string, std::string>>& config = {});

/// Fixed 10-significant-digit rendering used by every numeric output.
std::string format_number(double v);

}  // namespace lbd
