#include "linkbackdoor/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "linkbackdoor/rng.hpp"

namespace lbd {

double auc(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  if (pos_scores.empty() || neg_scores.empty()) throw std::invalid_argument("auc: empty score list");
  std::vector<double> neg(neg_scores.begin(), neg_scores.end());
  std::sort(neg.begin(), neg.end());
  double wins = 0.0;
  for (double p : pos_scores) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(lo, neg.end(), p);
    wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(pos_scores.size()) * static_cast<double>(neg.size()));
}

double model_auc(const ModelState& state, const Graph& g, std::span<const Edge> pos, std::span<const Edge> neg) {
  const Matrix z = embed(state, g);
  const auto ps = score_pairs(z, pos);
  const auto ns = score_pairs(z, neg);
  return auc(ps, ns);
}

std::vector<Edge> qualifying_targets(const ModelState& clean, const Graph& g, std::span<const Edge> candidates,
                                     double threshold) {
  const Matrix z = embed(clean, g);
  const auto s = score_pairs(z, candidates);
  std::vector<Edge> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (s[i] < threshold && !g.has_edge(candidates[i].u, candidates[i].v)) out.push_back(candidates[i]);
  }
  return out;
}

std::optional<double> amc(std::span<const double> success_scores) {
  if (success_scores.empty()) return std::nullopt;
  return std::accumulate(success_scores.begin(), success_scores.end(), 0.0) / static_cast<double>(success_scores.size());
}

AsrResult tally_asr(std::vector<Edge> qualifying, std::vector<double> backdoored_scores, double threshold) {
  if (qualifying.size() != backdoored_scores.size()) throw std::invalid_argument("tally_asr: size mismatch");
  if (qualifying.empty()) throw std::runtime_error("asr: no evaluation target is predicted absent by the clean model");
  AsrResult r;
  r.qualifying = std::move(qualifying);
  r.backdoored_scores = std::move(backdoored_scores);
  std::vector<double> hits;
  for (std::size_t i = 0; i < r.qualifying.size(); ++i) {
    if (r.backdoored_scores[i] >= threshold) {
      r.successes.push_back(r.qualifying[i]);
      hits.push_back(r.backdoored_scores[i]);
    }
  }
  r.asr = static_cast<double>(r.successes.size()) / static_cast<double>(r.qualifying.size());
  r.amc = amc(hits);
  return r;
}

AsrResult asr(const ModelState& clean, const ModelState& backdoored, const Trigger& trigger, const Graph& g,
              std::span<const Edge> candidates, double threshold, bool per_target) {
  auto qualifying = qualifying_targets(clean, g, candidates, threshold);
  std::erase_if(qualifying, [&](const Edge& e) {
    return std::find(trigger.anchors.begin(), trigger.anchors.end(), e.u) != trigger.anchors.end() ||
           std::find(trigger.anchors.begin(), trigger.anchors.end(), e.v) != trigger.anchors.end();
  });
  if (qualifying.empty()) throw std::runtime_error("asr: no evaluation target is predicted absent by the clean model");
  const MixedGraph mixed = mix_trigger(g, trigger, qualifying, per_target);
  auto scores = score_pairs(embed(backdoored, mixed.graph), qualifying);
  return tally_asr(std::move(qualifying), std::move(scores), threshold);
}

Trigger feature_noise_defense(const Trigger& t, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("feature_noise_defense: fraction outside [0,1]");
  Trigger out = t;
  if (!t.injects()) return out;
  const auto d = static_cast<std::size_t>(t.features.cols());
  const auto k = std::min(d, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(d) - 1e-9)));
  const bool binary = ((t.features.array() == 0.0) || (t.features.array() == 1.0)).all();
  Rng rng(derive_seed(seed, "defense"));
  for (Eigen::Index i = 0; i < t.features.rows(); ++i) {
    for (std::size_t j : rng.sample_without_replacement(d, k)) {
      double& x = out.features(i, static_cast<Eigen::Index>(j));
      x = binary ? 1.0 - x : rng.uniform();
    }
  }
  return out;
}

AttackReport evaluate(const ModelState& clean, const ModelState& backdoored, const Trigger& trigger,
                      const SplitResult& split, std::span<const Edge> eval_targets, double threshold,
                      bool per_target) {
  AttackReport r;
  r.model = std::string(to_string(backdoored.kind));
  const Graph& g = split.train_graph;
  r.auc_clean = model_auc(clean, g, split.split.test_pos, split.split.test_neg);
  r.auc_backdoored = model_auc(backdoored, g, split.split.test_pos, split.split.test_neg);
  r.bpd = std::abs(r.auc_clean - r.auc_backdoored);
  const AsrResult a = asr(clean, backdoored, trigger, g, eval_targets, threshold, per_target);
  r.asr = a.asr;
  r.amc = a.amc;
  r.n_eval_targets = a.qualifying.size();
  r.n_success = a.successes.size();
  r.trigger_edges = trigger.edge_count();
  return r;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string report_csv_header() {
  return "dataset,model,attack,seed,asr,amc,auc_clean,auc_backdoored,bpd,n_eval_targets,n_success,trigger_edges";
}

std::string report_csv_row(const AttackReport& r) {
  std::string s = r.dataset + ',' + r.model + ',' + r.attack + ',' + std::to_string(r.seed) + ',' + format_number(r.asr) +
                  ',' + (r.amc ? format_number(*r.amc) : std::string()) + ',' + format_number(r.auc_clean) + ',' +
                  format_number(r.auc_backdoored) + ',' + format_number(r.bpd) + ',' + std::to_string(r.n_eval_targets) +
                  ',' + std::to_string(r.n_success) + ',' + std::to_string(r.trigger_edges);
  return s;
}

std::string report_json(const AttackReport& r, const std::vector<std::pair<std::string, std::string>>& config) {
  nlohmann::ordered_json j;
  j["dataset"] = r.dataset;
  j["model"] = r.model;
  j["attack"] = r.attack;
  j["seed"] = r.seed;
  j["asr"] = r.asr;
  j["amc"] = r.amc ? nlohmann::ordered_json(*r.amc) : nlohmann::ordered_json(nullptr);
  j["auc_clean"] = r.auc_clean;
  j["auc_backdoored"] = r.auc_backdoored;
  j["bpd"] = r.bpd;
  j["n_eval_targets"] = r.n_eval_targets;
  j["n_success"] = r.n_success;
  j["trigger_edges"] = r.trigger_edges;
  if (!config.empty()) {
    nlohmann::ordered_json c = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config) c[k] = v;
    j["config"] = std::move(c);
  }
  return j.dump(2);
}

}  // namespace lbd
