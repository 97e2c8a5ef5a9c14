#include "linkbackdoor/attack.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "linkbackdoor/rng.hpp"

namespace lbd {

namespace {

std::uint64_t pair_key(NodeId a, NodeId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

std::size_t resolve_q_x(const AttackConfig& cfg, std::size_t n_features) {
  if (cfg.q_x > 0) return cfg.q_x;
  return static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n_features)));
}

void validate(const AttackConfig& cfg) {
  if (cfg.m == 0) throw std::invalid_argument("attack: m must be at least 1");
  if (!(cfg.poison_rate >= 0.0 && cfg.poison_rate <= 1.0)) throw std::invalid_argument("attack: poison_rate outside [0,1]");
  if (cfg.update_interval == 0) throw std::invalid_argument("attack: update_interval must be at least 1");
  if (cfg.target_state != 0.0 && cfg.target_state != 1.0) throw std::invalid_argument("attack: target_state must be 0 or 1");
  if (!(cfg.alpha > 0.0)) throw std::invalid_argument("attack: alpha must be positive");
  if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) throw std::invalid_argument("attack: threshold outside (0,1)");
}

TargetLinkSet select_targets(const Graph& full, const DataSplit& split, double poison_rate, std::uint64_t seed,
                             std::span<const NodeId> avoid) {
  TargetLinkSet out;
  out.eval = split.test_neg;
  const auto count = static_cast<std::size_t>(std::llround(poison_rate * static_cast<double>(split.train_pos.size())));
  const std::size_t n = full.n_nodes();
  std::unordered_set<std::uint64_t> banned;
  for (const auto& e : split.val_neg) banned.insert(pair_key(e.u, e.v));
  for (const auto& e : split.test_neg) banned.insert(pair_key(e.u, e.v));
  std::vector<char> used(n, 0);
  for (NodeId a : avoid) {
    if (a >= 0 && static_cast<std::size_t>(a) < n) used[static_cast<std::size_t>(a)] = 1;
  }
  Rng rng(derive_seed(seed, "targets"));
  std::size_t tries = 0;
  const std::size_t max_tries = 1000 * (count + 1);
  while (out.poison.size() < count) {
    if (++tries > max_tries) {
      throw std::runtime_error("select_targets: could not find " + std::to_string(count) +
                               " disjoint non-edge pairs (found " + std::to_string(out.poison.size()) + ")");
    }
    const auto a = static_cast<NodeId>(rng.below(n));
    const auto b = static_cast<NodeId>(rng.below(n));
    if (a == b || used[static_cast<std::size_t>(a)] || used[static_cast<std::size_t>(b)]) continue;
    const Edge e = make_edge(a, b);
    if (full.has_edge(e.u, e.v) || banned.contains(pair_key(e.u, e.v))) continue;
    used[static_cast<std::size_t>(a)] = used[static_cast<std::size_t>(b)] = 1;
    out.poison.push_back(e);
  }
  return out;
}

double attack_loss(const ModelState& model, const Graph& mixed, std::span<const Edge> targets, double target_state) {
  if (targets.empty()) throw std::invalid_argument("attack_loss: empty target set");
  const Matrix z = embed(model, mixed);
  double acc = 0.0;
  for (double s : score_pairs(z, targets)) acc += (s - target_state) * (s - target_state);
  return acc / static_cast<double>(targets.size());
}

std::vector<Edge> trigger_slots(const Trigger& t) { return admissible_slots(t.m, t.injects()); }

TriggerObjective::TriggerObjective(const ModelState& model, const Graph& g, std::vector<Edge> targets,
                                   double target_state, const Trigger& shape, bool per_target)
    : model_(model),
      graph_(g),
      targets_(std::move(targets)),
      target_state_(target_state),
      m_(shape.m),
      injects_(shape.injects()),
      admissible_(trigger_slots(shape)) {
  if (targets_.empty()) throw std::invalid_argument("attack objective: empty target set");
  const auto n = static_cast<NodeId>(g.n_nodes());
  copies_ = injects_ ? (per_target ? targets_.size() : 1) : 0;
  const auto total = static_cast<Eigen::Index>(g.n_nodes() + copies_ * m_);
  const auto s = static_cast<int>(m_ + 2);

  std::vector<std::pair<int, int>> entries;
  std::vector<int> source;
  std::unordered_map<std::uint64_t, int> seen;
  entries.reserve(2 * g.n_edges() + static_cast<std::size_t>(total));
  auto push = [&](NodeId r, NodeId c, int src) {
    if (!seen.emplace(pair_key(r, c), static_cast<int>(entries.size())).second) return;
    entries.emplace_back(r, c);
    source.push_back(src);
  };
  for (NodeId i = 0; i < static_cast<NodeId>(total); ++i) push(i, i, 0);
  for (const auto& e : g.edges()) {
    push(e.u, e.v, 0);
    push(e.v, e.u, 0);
  }
  for (std::size_t ti = 0; ti < targets_.size(); ++ti) {
    const Edge tg = targets_[ti];
    if (tg.u < 0 || tg.v < 0 || tg.u >= n || tg.v >= n || g.has_edge(tg.u, tg.v)) {
      throw std::invalid_argument("attack objective: target (" + std::to_string(tg.u) + "," + std::to_string(tg.v) +
                                  ") is not a non-edge of the graph");
    }
    auto node_of = [&](int slot) -> NodeId {
      if (slot == 0) return tg.u;
      if (slot == 1) return tg.v;
      const auto k = static_cast<std::size_t>(slot - 2);
      if (!injects_) return shape.anchors.at(k);
      return n + static_cast<NodeId>((per_target ? ti : 0) * m_ + k);
    };
    for (const auto& sl : admissible_) {
      const NodeId x = node_of(sl.u), y = node_of(sl.v);
      if (x == y) throw std::invalid_argument("attack objective: target touches an anchor");
      push(x, y, 1 + sl.u * s + sl.v);
      push(y, x, 1 + sl.v * s + sl.u);
    }
  }
  std::vector<int> order;
  structure_ = std::make_shared<const ad::EdgeStructure>(ad::EdgeStructure::from_entries(total, total, entries, &order));
  source_.assign(entries.size(), 0);
  for (std::size_t i = 0; i < entries.size(); ++i) source_[static_cast<std::size_t>(order[i])] = source[i];
  features_ = std::make_shared<const SparseMatrix>(g.features().sparseView());
  for (std::size_t c = 0; c < copies_; ++c) {
    for (std::size_t k = 0; k < m_; ++k) copy_rows_.push_back(static_cast<int>(k));
  }
}

TriggerGradients TriggerObjective::run(const Trigger& t, bool want_grad) const {
  if (t.m != m_ || t.injects() != injects_) throw std::invalid_argument("attack objective: trigger shape changed");
  if (t.features.cols() != static_cast<Eigen::Index>(graph_.n_features())) {
    throw std::invalid_argument("attack objective: trigger feature width mismatch");
  }
  const auto s = static_cast<Eigen::Index>(m_ + 2);
  ad::Tape tape;
  const BoundParams p = bind_params(tape, model_, false);
  Matrix flat = Eigen::Map<const Matrix>(t.pattern.data(), s * s, 1);
  const ad::Var slots = tape.leaf(std::move(flat), want_grad);
  const ad::Var parts[] = {tape.constant(Matrix::Ones(1, 1)), slots};
  const ad::Var raw = ad::gather_rows(ad::concat_rows(parts), source_);
  EncoderInput in;
  in.features = features_;
  in.structure = structure_;
  in.weights = normalize_entries(structure_, raw);
  ad::Var xg;
  if (injects_) {
    xg = tape.leaf(t.features, want_grad);
    in.extra_features = copies_ == 1 ? xg : ad::gather_rows(xg, copy_rows_);
  }
  const ad::Var z = encode(model_.kind, p, in, Mode::Eval, 0).z;
  const ad::Var scores = ad::sigmoid(ad::pair_dot(z, targets_));
  const ad::Var loss = ad::mse(scores, tape.constant(Matrix::Constant(scores.rows(), 1, target_state_)));
  TriggerGradients out;
  out.loss = loss.scalar();
  if (!want_grad) return out;
  const ad::Gradients g = tape.backward(loss);
  out.adj = Eigen::Map<const Matrix>(g[slots].data(), s, s);
  out.features = injects_ ? g[xg] : Matrix::Zero(t.features.rows(), t.features.cols());
  return out;
}

double TriggerObjective::loss(const Trigger& t) const { return run(t, false).loss; }
TriggerGradients TriggerObjective::gradients(const Trigger& t) const { return run(t, true); }

Trigger gradient_sign_step(const TriggerObjective& obj, const Trigger& t) {
  const TriggerGradients g = obj.gradients(t);
  return update_trigger(t, symmetrize(g.adj), g.features, obj.admissible());
}

TriggerStrategy gradient_strategy(std::size_t steps) {
  return [steps](const TriggerObjective& obj, const Trigger& current, std::size_t) {
    Trigger t = current;
    for (std::size_t i = 0; i < steps; ++i) t = gradient_sign_step(obj, t);
    return t;
  };
}

TriggerStrategy fixed_strategy() {
  return [](const TriggerObjective&, const Trigger& current, std::size_t) { return current; };
}

BackdoorResult link_backdoor_train(ModelKind kind, const Graph& full, const SplitResult& split,
                                   const BackdoorOptions& opt) {
  const AttackConfig& ac = opt.attack;
  validate(ac);
  const Graph& train_graph = split.train_graph;
  BackdoorResult r;
  r.trigger = opt.initial ? *opt.initial
                          : gen_trigger(train_graph, ac.m, ac.q_a, resolve_q_x(ac, train_graph.n_features()), ac.alpha,
                                        derive_seed(opt.seed, "trigger"));
  r.targets = opt.targets ? *opt.targets
                          : select_targets(full, split.split, ac.poison_rate, derive_seed(opt.seed, "targets"),
                                           r.trigger.anchors);
  const TriggerStrategy strategy = opt.strategy ? opt.strategy : gradient_strategy(ac.trigger_steps);

  Trainer trainer(init_model(kind, train_graph.n_features(), opt.model, opt.seed), opt.model);
  TrainingData data = make_training_data(train_graph, {}, opt.model);
  std::size_t round = 0;
  for (std::size_t epoch = 1; epoch <= ac.epochs; ++epoch) {
    if (!r.targets.poison.empty() && epoch > ac.warmup && epoch % ac.update_interval == 0) {
      const auto t0 = std::chrono::steady_clock::now();
      const TriggerObjective obj(trainer.state(), train_graph, r.targets.poison, ac.target_state, r.trigger,
                                 ac.per_target);
      r.attack_losses.push_back(obj.loss(r.trigger));
      r.trigger = strategy(obj, r.trigger, round++);
      r.update_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      const MixedGraph mixed = mix_trigger(train_graph, r.trigger, r.targets.poison, ac.per_target);
      if (opt.observer) opt.observer(epoch, r.trigger, mixed);
      data = make_training_data(mixed.graph, r.targets.poison, opt.model);
    }
    r.train_loss.push_back(trainer.step(data, epoch));
  }
  r.state = trainer.state();
  return r;
}

BackdoorResult transfer_train(ModelKind target_kind, const Graph& full, const SplitResult& split,
                              const BackdoorResult& surrogate, const BackdoorOptions& opt) {
  BackdoorOptions o = opt;
  o.initial = surrogate.trigger;
  o.targets = surrogate.targets;
  o.strategy = fixed_strategy();
  return link_backdoor_train(target_kind, full, split, o);
}

}  // namespace lbd
