// Acceptance checks. Usage: lbd_acceptance [criterion...]
// Exit 0 all pass, 1 any failure, 77 when nothing failed but something was
// blocked on missing data. Datasets are read from $LBD_DATA_DIR
// (<name>.nodes / <name>.edges as written by `linkbackdoor prepare`).

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <tuple>
#include <unistd.h>

#include "../unit/oracles.hpp"
#include "linkbackdoor/experiment.hpp"

using namespace lbd;
namespace fs = std::filesystem;

namespace {

enum class Outcome { Pass, Fail, Blocked };

struct Verdict {
  Outcome outcome;
  std::string detail;
};

Verdict pass_if(bool ok, std::string detail) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)}; }

std::string num(double v) { return format_number(v); }

constexpr std::uint64_t kSeeds[] = {0, 1, 2, 3, 4};

std::optional<fs::path> data_dir_with(std::initializer_list<const char*> names) {
  const char* env = std::getenv("LBD_DATA_DIR");
  if (!env || !*env) return std::nullopt;
  for (const char* n : names) {
    if (!fs::exists(fs::path(env) / (std::string(n) + ".nodes")) || !fs::exists(fs::path(env) / (std::string(n) + ".edges")))
      return std::nullopt;
  }
  return fs::path(env);
}

Verdict blocked(std::initializer_list<const char*> names) {
  std::string s = "needs";
  for (const char* n : names) s += std::string(" ") + n;
  return {Outcome::Blocked, s + " under $LBD_DATA_DIR"};
}

/// Memoized per-seed runs so criteria sharing a configuration train once.
class Lab {
 public:
  explicit Lab(fs::path dir) : dir_(std::move(dir)) {}

  ExperimentConfig config(const std::string& name, AttackKind attack) const {
    ExperimentConfig c;
    c.dataset = name;
    c.data_dir = dir_;
    c.attack = attack;
    return c;
  }

  const Dataset& dataset(const std::string& name) {
    auto it = data_.find(name);
    if (it == data_.end()) it = data_.emplace(name, load_dataset(dir_, name)).first;
    return it->second;
  }

  const SeedRun& run(const std::string& name, ModelKind kind, AttackKind attack, std::uint64_t seed) {
    const auto key = std::make_tuple(name, kind, attack, seed);
    if (auto it = runs_.find(key); it != runs_.end()) return it->second;
    const auto cfg = config(name, attack);
    const auto ckey = std::make_tuple(name, kind, seed);
    const ModelState* clean = nullptr;
    if (auto c = clean_.find(ckey); c != clean_.end()) clean = &c->second;
    SeedRun r = run_seed(cfg, dataset(name), kind, seed, clean);
    clean_.emplace(ckey, r.clean);
    std::cerr << "  " << name << " " << to_string(kind) << " " << to_string(attack) << " seed " << seed << " asr "
              << num(r.report.asr) << " bpd " << num(r.report.bpd) << "\n";
    return runs_.emplace(key, std::move(r)).first->second;
  }

  double mean_asr(const std::string& name, ModelKind kind, AttackKind attack) {
    std::vector<double> v;
    for (auto s : kSeeds) v.push_back(run(name, kind, attack, s).report.asr);
    return summarize(v).mean;
  }

 private:
  fs::path dir_;
  std::map<std::string, Dataset> data_;
  std::map<std::tuple<std::string, ModelKind, std::uint64_t>, ModelState> clean_;
  std::map<std::tuple<std::string, ModelKind, AttackKind, std::uint64_t>, SeedRun> runs_;
};

std::unique_ptr<Lab> lab;

Lab& lab_for(const fs::path& dir) {
  if (!lab) lab = std::make_unique<Lab>(dir);
  return *lab;
}

// 1 -------------------------------------------------------------------------

double model_loss(const ModelState& s, const TrainingData& data, const ModelConfig& cfg) {
  ad::Tape tape;
  return generator_loss(s, bind_params(tape, s, false), data, cfg, 17).total.scalar();
}

Verdict gradient_correctness() {
  constexpr ModelKind kinds[] = {ModelKind::GAE, ModelKind::VGAE, ModelKind::GIC, ModelKind::ARGA, ModelKind::ARVGA};
  ModelConfig cfg;
  cfg.hidden = 6;
  cfg.embedding = 4;
  cfg.disc_hidden = 5;
  cfg.gic_clusters = 3;
  double worst = 0.0;
  std::size_t failures = 0, checked = 0;
  std::string where;
  auto account = [&](const testing::GradCheck& c, const std::string& what) {
    checked += c.checked;
    failures += c.failures;
    if (c.max_magnitude <= 1e-6) {
      ++failures;
      where += " " + what + "(vanishing)";
    }
    if (c.failures) where += " " + what;
    worst = std::max(worst, c.worst_rel);
  };
  for (auto kind : kinds) {
    const Graph g = testing::random_graph(10, 8, 7, 100 + static_cast<int>(kind));
    ModelState s = init_model(kind, g.n_features(), cfg, 3);
    const TrainingData data = make_training_data(g, {}, cfg);
    ad::Tape tape;
    const auto p = bind_params(tape, s, true);
    const auto grads = tape.backward(generator_loss(s, p, data, cfg, 17).total);
    for (auto& [key, value] : s.params) {
      if (key == "centers" || key[0] == 'D') continue;
      const Matrix analytic = grads[p.at(key)];
      const Matrix numeric = testing::finite_difference(value, [&] { return model_loss(s, data, cfg); });
      account(testing::compare_gradients(analytic, numeric), std::string(to_string(kind)) + "/" + key);
    }
    const auto [adj, x] = testing::attack_gradient_check(kind, 40 + static_cast<int>(kind));
    account(adj, std::string(to_string(kind)) + "/A_g");
    account(x, std::string(to_string(kind)) + "/X_g");
  }
  return pass_if(failures == 0, "worst relative error " + num(worst) + " over " + std::to_string(checked) +
                                    " entries, 5 models + attack loss" + (where.empty() ? "" : ", failing:" + where));
}

// 2 -------------------------------------------------------------------------

Verdict sign_oracle() {
  const auto s = testing::sign_oracle(0, 100);
  const auto [strong_agree, strong_total] = s.above(0.05);
  return pass_if(s.rate() >= 0.9, std::to_string(s.agree) + "/" + std::to_string(s.total) + " = " + num(s.rate()) +
                                      " slots agree (need >= 0.9); |grad| >= 0.05: " + std::to_string(strong_agree) +
                                      "/" + std::to_string(strong_total));
}

// 3 -------------------------------------------------------------------------

Verdict clean_performance() {
  const auto dir = data_dir_with({"cora", "citeseer"});
  if (!dir) return blocked({"cora", "citeseer"});
  Lab& l = lab_for(*dir);
  auto mean_auc = [&](const std::string& name, ModelKind kind) {
    std::vector<double> v;
    const auto cfg = l.config(name, AttackKind::LinkBackdoor);
    for (auto s : kSeeds) {
      const SplitResult split = experiment_split(l.dataset(name), s);
      const ModelState m = train_clean(cfg, kind, split, s);
      v.push_back(model_auc(m, split.train_graph, split.split.test_pos, split.split.test_neg));
    }
    return summarize(v).mean;
  };
  const double gae = mean_auc("cora", ModelKind::GAE);
  const double gic = mean_auc("citeseer", ModelKind::GIC);
  return pass_if(gae >= 0.88 && gic >= 0.90, "Cora/GAE AUC " + num(gae) + " (>= 0.88), Citeseer/GIC AUC " + num(gic) +
                                                 " (>= 0.90)");
}

// 4 -------------------------------------------------------------------------

Verdict white_box() {
  const auto dir = data_dir_with({"cora"});
  if (!dir) return blocked({"cora"});
  Lab& l = lab_for(*dir);
  const double gae = l.mean_asr("cora", ModelKind::GAE, AttackKind::LinkBackdoor);
  const double gic = l.mean_asr("cora", ModelKind::GIC, AttackKind::LinkBackdoor);
  return pass_if(gae >= 0.70 && gic >= 0.90,
                 "Cora/GAE ASR " + num(gae) + " (>= 0.70), Cora/GIC ASR " + num(gic) + " (>= 0.90)");
}

// 5 -------------------------------------------------------------------------

Verdict ordering() {
  const auto dir = data_dir_with({"cora", "citeseer"});
  if (!dir) return blocked({"cora", "citeseer"});
  Lab& l = lab_for(*dir);
  bool ok = true;
  std::string detail;
  for (const char* name : {"cora", "citeseer"}) {
    for (auto kind : {ModelKind::GAE, ModelKind::GIC}) {
      const double lb = l.mean_asr(name, kind, AttackKind::LinkBackdoor);
      const double rnd = l.mean_asr(name, kind, AttackKind::Random);
      const double erb = l.mean_asr(name, kind, AttackKind::ERB);
      const double noinj = l.mean_asr(name, kind, AttackKind::NoInjection);
      ok = ok && lb - rnd >= 0.05 && lb - erb >= 0.05 && lb > noinj;
      detail += std::string(detail.empty() ? "" : "; ") + name + "/" + std::string(to_string(kind)) + " LB " + num(lb) +
                " random " + num(rnd) + " ERB " + num(erb) + " no-inj " + num(noinj);
    }
  }
  return pass_if(ok, detail);
}

// 6 -------------------------------------------------------------------------

Verdict stealth() {
  const auto dir = data_dir_with({"cora"});
  if (!dir) return blocked({"cora"});
  Lab& l = lab_for(*dir);
  double gae = 0.0, total = 0.0;
  std::string detail;
  for (auto kind : {ModelKind::GAE, ModelKind::VGAE, ModelKind::GIC, ModelKind::ARGA, ModelKind::ARVGA}) {
    std::vector<double> v;
    for (auto s : kSeeds) v.push_back(l.run("cora", kind, AttackKind::LinkBackdoor, s).report.bpd);
    const double m = summarize(v).mean;
    if (kind == ModelKind::GAE) gae = m;
    total += m;
    detail += std::string(to_string(kind)) + " " + num(m) + " ";
  }
  const double avg = total / 5.0;
  return pass_if(gae <= 0.06 && avg <= 0.10, "BPD " + detail + "average " + num(avg) + " (GAE <= 0.06, avg <= 0.10)");
}

// 7 -------------------------------------------------------------------------

Verdict black_box() {
  const auto dir = data_dir_with({"cora"});
  if (!dir) return blocked({"cora"});
  Lab& l = lab_for(*dir);
  const auto cfg = l.config("cora", AttackKind::LinkBackdoor);
  const Dataset& ds = l.dataset("cora");
  std::vector<double> transfer, white;
  for (auto s : kSeeds) {
    const SeedRun& sur = l.run("cora", ModelKind::GAE, AttackKind::LinkBackdoor, s);
    const SeedRun& tgt = l.run("cora", ModelKind::VGAE, AttackKind::LinkBackdoor, s);
    white.push_back(tgt.report.asr);
    const BackdoorResult bd = transfer_train(ModelKind::VGAE, ds.graph, sur.split, sur.backdoor,
                                             attack_options(cfg, AttackKind::LinkBackdoor, sur.split.train_graph, s));
    transfer.push_back(evaluate(tgt.clean, bd.state, bd.trigger, sur.split, bd.targets.eval, cfg.attack_cfg.threshold,
                                cfg.attack_cfg.per_target)
                           .asr);
  }
  const double t = summarize(transfer).mean, w = summarize(white).mean;
  return pass_if(t >= w - 0.10, "GAE->VGAE ASR " + num(t) + ", VGAE white-box " + num(w) + " (within 0.10)");
}

// 8 -------------------------------------------------------------------------

Verdict defense() {
  const auto dir = data_dir_with({"cora"});
  if (!dir) return blocked({"cora"});
  Lab& l = lab_for(*dir);
  const auto cfg = l.config("cora", AttackKind::LinkBackdoor);
  std::vector<double> before, after;
  for (auto s : kSeeds) {
    const SeedRun& r = l.run("cora", ModelKind::VGAE, AttackKind::LinkBackdoor, s);
    const Trigger noisy = feature_noise_defense(r.backdoor.trigger, 0.1, derive_seed(s, "defense"));
    before.push_back(r.report.asr);
    after.push_back(asr(r.clean, r.backdoor.state, noisy, r.split.train_graph, r.backdoor.targets.eval,
                        cfg.attack_cfg.threshold, cfg.attack_cfg.per_target)
                        .asr);
  }
  const double b = summarize(before).mean, a = summarize(after).mean;
  return pass_if(b - a <= 0.15, "Cora/VGAE ASR " + num(b) + " -> " + num(a) + " with 10% feature noise (drop <= 0.15)");
}

// 9 -------------------------------------------------------------------------

struct InvariantTally {
  std::size_t updates = 0;
  std::size_t violations = 0;
  std::string first;
};

InvariantTally invariant_run(const Dataset& ds, const ExperimentConfig& cfg, std::uint64_t seed) {
  const SplitResult split = experiment_split(ds, seed);
  const Graph& g = split.train_graph;
  BackdoorOptions opt = attack_options(cfg, AttackKind::LinkBackdoor, g, seed);
  InvariantTally tally;
  const auto admissible = admissible_slots(cfg.attack_cfg.m);
  opt.observer = [&](std::size_t epoch, const Trigger& t, const MixedGraph& mixed) {
    ++tally.updates;
    std::vector<std::string> v = trigger_violations(t, admissible);
    const auto n = static_cast<NodeId>(g.n_nodes());
    for (NodeId u = 0; u < n; ++u) {
      std::vector<NodeId> inside;
      for (NodeId w : mixed.graph.neighbors(u))
        if (w < n) inside.push_back(w);
      const auto orig = g.neighbors(u);
      if (!std::equal(inside.begin(), inside.end(), orig.begin(), orig.end())) {
        v.push_back("clean adjacency changed at node " + std::to_string(u));
        break;
      }
    }
    if (mixed.graph.features().topRows(n) != g.features()) v.push_back("clean features changed");
    tally.violations += v.size();
    if (!v.empty() && tally.first.empty()) tally.first = "epoch " + std::to_string(epoch) + ": " + v.front();
  };
  link_backdoor_train(ModelKind::GAE, ds.graph, split, opt);
  return tally;
}

Verdict structural_invariants() {
  const auto dir = data_dir_with({"cora"});
  if (dir) {
    Lab& l = lab_for(*dir);
    const auto t = invariant_run(l.dataset("cora"), l.config("cora", AttackKind::LinkBackdoor), 0);
    return pass_if(t.violations == 0 && t.updates > 0, "Cora/GAE: " + std::to_string(t.updates) + " updates, " +
                                                           std::to_string(t.violations) + " violations" + (t.first.empty() ? "" : ", " + t.first));
  }
  ExperimentConfig cfg;
  const auto t = invariant_run(load_experiment_dataset(cfg), cfg, 0);
  const std::string proxy = "synthetic Cora-sized proxy: " + std::to_string(t.updates) + " updates, " +
                            std::to_string(t.violations) + " violations" + (t.first.empty() ? "" : ", " + t.first);
  if (t.violations > 0 || t.updates == 0) return {Outcome::Fail, proxy};
  return {Outcome::Blocked, "needs cora under $LBD_DATA_DIR; " + proxy};
}

// 10 ------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const auto dir = data_dir_with({"cora"});
  ExperimentConfig cfg;
  if (dir) {
    cfg.dataset = "cora";
    cfg.data_dir = *dir;
  }
  cfg.seeds = {0};
  const fs::path root = fs::temp_directory_path() / ("lbd-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::ostringstream log;
  cfg.out = root / "a";
  const int ra = run_experiment(cfg, log);
  cfg.out = root / "b";
  const int rb = run_experiment(cfg, log);
  std::size_t compared = 0, differing = 0;
  for (const char* f : {"report.csv", "report.json", "trigger.txt", "targets.txt", "clean.ckpt", "backdoored.ckpt"}) {
    const auto a = slurp(seed_dir(root / "a", ModelKind::GAE, 0) / f);
    const auto b = slurp(seed_dir(root / "b", ModelKind::GAE, 0) / f);
    ++compared;
    if (a.empty() || a != b) ++differing;
  }
  fs::remove_all(root);
  return pass_if(ra == 0 && rb == 0 && differing == 0,
                 cfg.dataset + "/GAE seed 0 twice: " + std::to_string(compared - differing) + "/" +
                     std::to_string(compared) + " per-seed files byte-identical");
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Verdict()>>> criteria{
      {1, {"gradient correctness", gradient_correctness}},
      {2, {"gradient-sign oracle", sign_oracle}},
      {3, {"clean performance", clean_performance}},
      {4, {"white-box attack", white_box}},
      {5, {"ordering over baselines", ordering}},
      {6, {"stealth", stealth}},
      {7, {"black-box transfer", black_box}},
      {8, {"defense resilience", defense}},
      {9, {"structural invariants", structural_invariants}},
      {10, {"determinism", determinism}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int c = std::atoi(argv[i]);
    if (!criteria.contains(c)) {
      std::cerr << "unknown criterion '" << argv[i] << "'\n";
      return 2;
    }
    selected.push_back(c);
  }
  if (selected.empty())
    for (const auto& [c, _] : criteria) selected.push_back(c);

  bool failed = false, was_blocked = false;
  for (int c : selected) {
    const auto& [name, check] = criteria.at(c);
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {Outcome::Fail, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = v.outcome == Outcome::Pass ? "PASS" : v.outcome == Outcome::Fail ? "FAIL" : "BLOCKED";
    std::cout << "criterion " << c << " " << tag << " " << name << ": " << v.detail << " [" << std::fixed << std::setprecision(1) << secs << std::defaultfloat << " s]"
              << std::endl;
    failed = failed || v.outcome == Outcome::Fail;
    was_blocked = was_blocked || v.outcome == Outcome::Blocked;
  }
  return failed ? 1 : was_blocked ? 77 : 0;
}
