#pragma once

#include <cstdint>
#include <vector>

#include "linkbackdoor/attack.hpp"

namespace lbd {

/// Erdos-Renyi trigger: every admissible slot present with probability
/// `prob`, then randomly thinned to q_a. `drawn` receives the edge count
/// before thinning.
Trigger erb_trigger(const Graph& g, std::size_t m, std::size_t q_a, std::size_t q_x, double alpha, double prob,
                    std::uint64_t seed, std::size_t* drawn = nullptr);

/// Exactly q edges drawn uniformly from the admissible slots; feature rows
/// copied from uniformly chosen nodes of g. Throws std::invalid_argument when
/// q exceeds the number of admissible slots.
Trigger random_trigger(const Graph& g, std::size_t m, std::size_t q, std::size_t q_x, double alpha,
                       std::uint64_t seed);

/// Existing nodes stand in for the attacker slots; only target-anchor slots
/// are wired and anchor features are never touched.
Trigger no_injection_trigger(const Graph& g, std::size_t m, std::size_t q_a, std::uint64_t seed);

struct PsoConfig {
  std::size_t population = 200;
  std::size_t iterations = 50;
  double c1 = 0.5;
  double c2 = 1.5;
  double inertia = 0.8;
  double vmax = 4.0;
  std::size_t rounds = 1;  ///< trigger updates that run the swarm; later updates keep the trigger
};

struct PsoResult {
  Trigger best;
  double best_loss = 0.0;
  std::vector<double> evaluated_losses;  ///< every fitness evaluation, in order
};

/// Binary PSO over (admissible slot bits, feature bits) minimizing the
/// attack loss. Particle 0 starts at `start`; iteration 1 only evaluates the
/// initial swarm. Every position is repaired to the q_a / q_x budgets before
/// evaluation. Features are searched only when `start.reference` is 0/1.
PsoResult pso_trigger(const TriggerObjective& obj, const Trigger& start, const PsoConfig& cfg, std::uint64_t seed);

TriggerStrategy pso_strategy(const PsoConfig& cfg, std::uint64_t seed);

}  // namespace lbd
