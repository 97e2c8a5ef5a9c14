#include "linkbackdoor/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "linkbackdoor/rng.hpp"

namespace lbd {

namespace {

Trigger blank(const Graph& g, std::size_t m, std::size_t q_a, std::size_t q_x, double alpha, Rng& rng) {
  if (m == 0) throw std::invalid_argument("trigger needs at least one attacker slot");
  if (g.n_nodes() == 0) throw std::invalid_argument("trigger on an empty graph");
  Trigger t;
  t.m = m;
  t.q_a = q_a;
  t.q_x = q_x;
  t.alpha = alpha;
  t.pattern = Matrix::Zero(static_cast<Eigen::Index>(m + 2), static_cast<Eigen::Index>(m + 2));
  t.features.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(g.n_features()));
  for (std::size_t k = 0; k < m; ++k) {
    t.features.row(static_cast<Eigen::Index>(k)) = g.features().row(static_cast<Eigen::Index>(rng.below(g.n_nodes())));
  }
  t.reference = t.features;
  return t;
}

void set_edge(Trigger& t, const Edge& e, double v) { t.pattern(e.u, e.v) = t.pattern(e.v, e.u) = v; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Trigger erb_trigger(const Graph& g, std::size_t m, std::size_t q_a, std::size_t q_x, double alpha, double prob,
                    std::uint64_t seed, std::size_t* drawn) {
  if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("erb_trigger: probability outside [0,1]");
  Rng rng(derive_seed(seed, "erb"));
  Trigger t = blank(g, m, q_a, q_x, alpha, rng);
  std::vector<Edge> on;
  for (const auto& e : admissible_slots(m)) {
    if (rng.uniform() < prob) on.push_back(e);
  }
  if (drawn) *drawn = on.size();
  while (on.size() > q_a) on.erase(on.begin() + static_cast<std::ptrdiff_t>(rng.below(on.size())));
  for (const auto& e : on) set_edge(t, e, 1.0);
  return t;
}

Trigger random_trigger(const Graph& g, std::size_t m, std::size_t q, std::size_t q_x, double alpha,
                       std::uint64_t seed) {
  const auto slots = admissible_slots(m);
  if (q > slots.size()) {
    throw std::invalid_argument("random_trigger: " + std::to_string(q) + " edges requested, " +
                                std::to_string(slots.size()) + " admissible slots");
  }
  Rng rng(derive_seed(seed, "random"));
  Trigger t = blank(g, m, q, q_x, alpha, rng);
  for (std::size_t i : rng.sample_without_replacement(slots.size(), q)) set_edge(t, slots[i], 1.0);
  return t;
}

Trigger no_injection_trigger(const Graph& g, std::size_t m, std::size_t q_a, std::uint64_t seed) {
  if (m == 0 || m > g.n_nodes()) throw std::invalid_argument("no_injection_trigger: need 1 <= m <= n");
  Rng rng(derive_seed(seed, "noinj"));
  Trigger t;
  t.m = m;
  t.q_a = q_a;
  t.q_x = 0;
  t.alpha = 1.0;
  t.pattern = Matrix::Zero(static_cast<Eigen::Index>(m + 2), static_cast<Eigen::Index>(m + 2));
  for (std::size_t i : rng.sample_without_replacement(g.n_nodes(), m)) t.anchors.push_back(static_cast<NodeId>(i));
  t.features.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(g.n_features()));
  for (std::size_t k = 0; k < m; ++k) t.features.row(static_cast<Eigen::Index>(k)) = g.features().row(t.anchors[k]);
  t.reference = t.features;
  std::vector<Edge> on;
  for (const auto& e : admissible_slots(m, false)) {
    if (rng.bernoulli(0.5)) on.push_back(e);
  }
  rng.shuffle(on);
  if (on.size() > q_a) on.resize(q_a);
  for (const auto& e : on) set_edge(t, e, 1.0);
  return t;
}

PsoResult pso_trigger(const TriggerObjective& obj, const Trigger& start, const PsoConfig& cfg, std::uint64_t seed) {
  if (cfg.population < 1 || cfg.iterations < 1) throw std::invalid_argument("pso: population and iterations must be positive");
  Rng rng(derive_seed(seed, "pso"));
  const auto& slots = obj.admissible();
  const std::size_t ns = slots.size();
  const bool search_features =
      start.injects() && start.reference.size() == start.features.size() &&
      ((start.reference.array() == 0.0) || (start.reference.array() == 1.0)).all();
  const std::size_t nf = search_features ? static_cast<std::size_t>(start.features.size()) : 0;
  const std::size_t dim = ns + nf;

  using Vec = std::vector<double>;
  auto encode = [&](const Trigger& t) {
    Vec x(dim);
    for (std::size_t i = 0; i < ns; ++i) x[i] = t.pattern(slots[i].u, slots[i].v);
    for (std::size_t k = 0; k < nf; ++k) x[ns + k] = t.features.data()[k];
    return x;
  };
  // Budget repair: keep the set bits (or feature changes) with the largest
  // velocity, drop the rest.
  auto repair = [&](Vec& x, const Vec& v) {
    std::vector<std::size_t> on;
    for (std::size_t i = 0; i < ns; ++i) {
      if (x[i] != 0.0) on.push_back(i);
    }
    if (on.size() > start.q_a) {
      std::stable_sort(on.begin(), on.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
      for (std::size_t i = start.q_a; i < on.size(); ++i) x[on[i]] = 0.0;
    }
    std::vector<std::size_t> diff;
    for (std::size_t k = 0; k < nf; ++k) {
      if (x[ns + k] != start.reference.data()[k]) diff.push_back(k);
    }
    if (diff.size() > start.q_x) {
      auto pull = [&](std::size_t k) { return x[ns + k] == 1.0 ? v[ns + k] : -v[ns + k]; };
      std::stable_sort(diff.begin(), diff.end(), [&](std::size_t a, std::size_t b) { return pull(a) > pull(b); });
      for (std::size_t i = start.q_x; i < diff.size(); ++i) x[ns + diff[i]] = start.reference.data()[diff[i]];
    }
  };
  auto decode = [&](const Vec& x) {
    Trigger t = start;
    for (std::size_t i = 0; i < ns; ++i) t.pattern(slots[i].u, slots[i].v) = t.pattern(slots[i].v, slots[i].u) = x[i];
    for (std::size_t k = 0; k < nf; ++k) t.features.data()[k] = x[ns + k];
    return t;
  };

  const std::size_t pop = cfg.population;
  std::vector<Vec> x(pop), v(pop), pbest(pop);
  std::vector<double> pbest_loss(pop, std::numeric_limits<double>::infinity());
  for (std::size_t p = 0; p < pop; ++p) {
    v[p].resize(dim);
    for (auto& vi : v[p]) vi = rng.uniform(-cfg.vmax, cfg.vmax);
    if (p == 0) {
      x[p] = encode(start);
    } else {
      x[p].assign(dim, 0.0);
      for (std::size_t i = 0; i < ns; ++i) x[p][i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      for (std::size_t k = 0; k < nf; ++k) x[p][ns + k] = start.reference.data()[k];
      const std::size_t flips = nf ? rng.below(start.q_x + 1) : 0;
      for (std::size_t k : rng.sample_without_replacement(nf, std::min(flips, nf))) x[p][ns + k] = 1.0 - x[p][ns + k];
    }
    repair(x[p], v[p]);
  }
  PsoResult res;
  Vec gbest;
  double gbest_loss = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t p = 0; p < pop; ++p) {
      const double loss = obj.loss(decode(x[p]));
      res.evaluated_losses.push_back(loss);
      if (loss < pbest_loss[p]) {
        pbest_loss[p] = loss;
        pbest[p] = x[p];
      }
      if (loss < gbest_loss) {
        gbest_loss = loss;
        gbest = x[p];
      }
    }
    if (it + 1 == cfg.iterations) break;
    for (std::size_t p = 0; p < pop; ++p) {
      for (std::size_t i = 0; i < dim; ++i) {
        double vi = cfg.inertia * v[p][i] + cfg.c1 * rng.uniform() * (pbest[p][i] - x[p][i]) +
                    cfg.c2 * rng.uniform() * (gbest[i] - x[p][i]);
        vi = std::clamp(vi, -cfg.vmax, cfg.vmax);
        v[p][i] = vi;
        x[p][i] = rng.uniform() < sigmoid(vi) ? 1.0 : 0.0;
      }
      repair(x[p], v[p]);
    }
  }
  res.best = decode(gbest);
  res.best_loss = gbest_loss;
  return res;
}

TriggerStrategy pso_strategy(const PsoConfig& cfg, std::uint64_t seed) {
  return [cfg, seed](const TriggerObjective& obj, const Trigger& current, std::size_t round) {
    if (round >= cfg.rounds) return current;
    return pso_trigger(obj, current, cfg, derive_seed(seed, round)).best;
  };
}

}  // namespace lbd
