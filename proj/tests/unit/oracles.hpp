#pragma once

#include "helpers.hpp"
#include "linkbackdoor/attack.hpp"

namespace lbd::testing {

/// A small graph, a briefly trained model of `kind`, a random trigger and two
/// disjoint non-edge targets.
struct ToyAttack {
  Graph graph;
  ModelState model;
  Trigger trigger;
  std::vector<Edge> targets;
};

inline ToyAttack toy_attack(ModelKind kind, std::size_t n, std::uint64_t seed, std::size_t epochs = 60) {
  ToyAttack t;
  t.graph = random_graph(n, n, 6, seed);
  ModelConfig cfg;
  cfg.hidden = 8;
  cfg.embedding = 4;
  cfg.disc_hidden = 6;
  cfg.gic_clusters = 3;
  Trainer tr(init_model(kind, t.graph.n_features(), cfg, seed), cfg);
  const auto data = make_training_data(t.graph, {}, cfg);
  for (std::size_t e = 1; e <= epochs; ++e) tr.step(data, e);
  t.model = tr.state();
  std::vector<char> used(n, 0);
  for (NodeId a = 0; a < static_cast<NodeId>(n) && t.targets.size() < 2; ++a) {
    for (NodeId b = a + 2; b < static_cast<NodeId>(n); ++b) {
      if (!used[a] && !used[b] && !t.graph.has_edge(a, b)) {
        t.targets.push_back({a, b});
        used[a] = used[b] = 1;
        break;
      }
    }
  }
  t.trigger = gen_trigger(t.graph, 2, 5, 6, 1.0, seed + 1);
  return t;
}

/// Every directed slot of A_g and every entry of X_g against central
/// differences of the attack loss.
inline std::pair<GradCheck, GradCheck> attack_gradient_check(ModelKind kind, std::uint64_t seed, bool per_target = false) {
  ToyAttack toy = toy_attack(kind, 10, seed);
  const TriggerObjective obj(toy.model, toy.graph, toy.targets, 1.0, toy.trigger, per_target);
  const TriggerGradients g = obj.gradients(toy.trigger);
  Trigger probe = toy.trigger;
  auto f = [&] { return obj.loss(probe); };
  const Matrix num_adj = finite_difference(probe.pattern, f);
  const Matrix num_x = finite_difference(probe.features, f);
  return {compare_gradients(g.adj, num_adj), compare_gradients(g.features, num_x)};
}

struct SignAgreement {
  std::size_t agree = 0;
  std::size_t total = 0;
  std::vector<std::pair<double, bool>> slots;  ///< |grad|, agreed
  double rate() const { return total ? static_cast<double>(agree) / static_cast<double>(total) : 0.0; }
  /// Agreement over slots with |grad| at least `min_grad`.
  std::pair<std::size_t, std::size_t> above(double min_grad) const {
    std::size_t a = 0, t = 0;
    for (const auto& [g, ok] : slots) {
      if (g < min_grad) continue;
      ++t;
      a += ok;
    }
    return {a, t};
  }
};

/// Symmetrized slot gradient sign against the exact loss change of flipping
/// that slot, over `rounds` random triggers on an 8-node GAE toy.
inline SignAgreement sign_oracle(std::uint64_t seed, std::size_t rounds) {
  SignAgreement s;
  for (std::size_t r = 0; r < rounds; ++r) {
    ToyAttack toy = toy_attack(ModelKind::GAE, 8, seed + r);
    toy.trigger = gen_trigger(toy.graph, 2, 5, 6, 1.0, seed * 1000 + r);
    const TriggerObjective obj(toy.model, toy.graph, toy.targets, 1.0, toy.trigger, false);
    const Matrix g = symmetrize(obj.gradients(toy.trigger).adj);
    const double base = obj.loss(toy.trigger);
    for (const auto& e : obj.admissible()) {
      const double grad = g(e.u, e.v);
      if (std::abs(grad) <= 1e-6) continue;
      Trigger flipped = toy.trigger;
      const double next = 1.0 - flipped.pattern(e.u, e.v);
      flipped.pattern(e.u, e.v) = flipped.pattern(e.v, e.u) = next;
      const double delta = obj.loss(flipped) - base;
      const double predicted = next > 0.5 ? grad : -grad;
      const bool ok = (delta > 0) == (predicted > 0);
      ++s.total;
      s.agree += ok;
      s.slots.emplace_back(std::abs(grad), ok);
    }
  }
  return s;
}

}  // namespace lbd::testing
