#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "linkbackdoor/models.hpp"
#include "linkbackdoor/trigger.hpp"

namespace lbd {

struct AttackConfig {
  std::size_t m = 2;
  std::size_t q_a = 5;
  std::size_t q_x = 0;  ///< 0 selects ceil(0.1 d)
  double poison_rate = 0.1;
  double alpha = 1.0;
  std::size_t update_interval = 20;
  std::size_t warmup = 100;
  std::size_t epochs = 400;
  double target_state = 1.0;
  std::size_t trigger_steps = 1;  ///< sign steps per trigger update
  bool per_target = false;        ///< m fresh injected nodes per target pair
  double threshold = 0.5;
};

std::size_t resolve_q_x(const AttackConfig& cfg, std::size_t n_features);
/// Throws std::invalid_argument on out-of-range settings.
void validate(const AttackConfig& cfg);

struct TargetLinkSet {
  std::vector<Edge> poison;  ///< training-time targets, pairwise disjoint endpoints
  std::vector<Edge> eval;    ///< inference-time candidates (the test negatives)
};

/// round(p |train_pos|) poison pairs drawn uniformly among non-edges of
/// `full` that avoid the split's negatives, the `avoid` nodes and each
/// other's endpoints. Eval targets are the test negatives.
TargetLinkSet select_targets(const Graph& full, const DataSplit& split, double poison_rate, std::uint64_t seed,
                             std::span<const NodeId> avoid = {});

/// Mean squared distance of target scores to `target_state`, scored by the
/// model's eval-mode embeddings of `mixed`.
double attack_loss(const ModelState& model, const Graph& mixed, std::span<const Edge> targets, double target_state);

struct TriggerGradients {
  Matrix adj;       ///< (2+m) x (2+m), dL/dA_g per directed slot, zero off the admissible set
  Matrix features;  ///< m x d, zero when the trigger uses anchors
  double loss = 0.0;
};

/// The attack loss as a function of one trigger wired onto fixed targets of a
/// fixed graph. Every admissible slot is kept as an explicit entry, so the
/// loss is differentiable in each of them whether or not the edge is present.
class TriggerObjective {
 public:
  /// `shape` fixes m and the anchors; pattern and features may vary per call.
  TriggerObjective(const ModelState& model, const Graph& g, std::vector<Edge> targets, double target_state,
                   const Trigger& shape, bool per_target);

  double loss(const Trigger& t) const;
  TriggerGradients gradients(const Trigger& t) const;

  const std::vector<Edge>& admissible() const noexcept { return admissible_; }
  const std::vector<Edge>& targets() const noexcept { return targets_; }
  const ModelState& model() const noexcept { return model_; }
  const Graph& graph() const noexcept { return graph_; }

 private:
  TriggerGradients run(const Trigger& t, bool want_grad) const;

  const ModelState& model_;
  const Graph& graph_;
  std::vector<Edge> targets_;
  double target_state_;
  std::size_t m_;
  std::size_t copies_;
  bool injects_;
  std::vector<Edge> admissible_;
  std::shared_ptr<const SparseMatrix> features_;
  std::shared_ptr<const ad::EdgeStructure> structure_;
  std::vector<int> source_;      ///< per sorted entry: 0 fixed, 1 + flat slot index
  std::vector<int> copy_rows_;   ///< injected row -> trigger feature row
};

/// Slots the trigger may use: all attacker-touching pairs, minus attacker
/// pairs when the attackers are existing nodes.
std::vector<Edge> trigger_slots(const Trigger& t);

/// One gradient-sign step: gradients, symmetrize, ranked update.
Trigger gradient_sign_step(const TriggerObjective& obj, const Trigger& t);

/// Called at each trigger update with the current model and trigger; returns
/// the next trigger.
using TriggerStrategy = std::function<Trigger(const TriggerObjective& obj, const Trigger& current, std::size_t round)>;
/// Called after every trigger update with the freshly mixed training graph.
using UpdateObserver = std::function<void(std::size_t epoch, const Trigger& trigger, const MixedGraph& mixed)>;

/// `steps` gradient-sign steps per update.
TriggerStrategy gradient_strategy(std::size_t steps);
/// Keeps the trigger as given.
TriggerStrategy fixed_strategy();

struct BackdoorOptions {
  AttackConfig attack;
  ModelConfig model;
  std::uint64_t seed = 0;
  std::optional<Trigger> initial;          ///< default: gen_trigger on the training graph
  std::optional<TargetLinkSet> targets;    ///< default: select_targets
  TriggerStrategy strategy;                ///< default: gradient_strategy(attack.trigger_steps)
  UpdateObserver observer;
};

struct BackdoorResult {
  ModelState state;
  Trigger trigger;
  TargetLinkSet targets;
  std::vector<double> update_seconds;  ///< wall time per trigger update
  std::vector<double> attack_losses;   ///< loss before each update
  std::vector<double> train_loss;
};

/// Poisoned training: clean epochs through the warmup, then every
/// `update_interval` epochs the trigger is re-optimized against the current
/// model, re-mixed into the training graph, and the poison pairs join the
/// positives; one parameter step per epoch.
BackdoorResult link_backdoor_train(ModelKind kind, const Graph& full, const SplitResult& split,
                                   const BackdoorOptions& opt);

/// Trains `target_kind` from scratch on the poisoned data produced by a
/// surrogate run (its final trigger and targets, same schedule, no access to
/// the target's gradients).
BackdoorResult transfer_train(ModelKind target_kind, const Graph& full, const SplitResult& split,
                              const BackdoorResult& surrogate, const BackdoorOptions& opt);

}  // namespace lbd
