#include "linkbackdoor/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "linkbackdoor/checkpoint.hpp"
#include "linkbackdoor/rng.hpp"

namespace fs = std::filesystem;

namespace lbd {

namespace {

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string edges_block(const char* name, const std::vector<Edge>& edges) {
  std::string s = std::string(name) + " " + std::to_string(edges.size()) + "\n";
  for (const auto& e : edges) s += std::to_string(e.u) + " " + std::to_string(e.v) + "\n";
  return s;
}

AttackReport labelled(AttackReport r, const ExperimentConfig& cfg, AttackKind attack, std::uint64_t seed) {
  r.dataset = cfg.dataset;
  r.attack = std::string(to_string(attack));
  r.seed = seed;
  return r;
}

Trigger empty_trigger(const Graph& g, const ExperimentConfig& cfg) {
  Trigger t;
  t.m = cfg.attack_cfg.m;
  t.q_a = cfg.attack_cfg.q_a;
  t.q_x = resolve_q_x(cfg.attack_cfg, g.n_features());
  t.alpha = cfg.attack_cfg.alpha;
  t.pattern = Matrix::Zero(static_cast<Eigen::Index>(t.m + 2), static_cast<Eigen::Index>(t.m + 2));
  t.features = Matrix::Zero(static_cast<Eigen::Index>(t.m), static_cast<Eigen::Index>(g.n_features()));
  t.reference = t.features;
  return t;
}

const char* kMetrics[] = {"asr", "amc", "auc_clean", "auc_backdoored", "bpd"};

std::vector<double> metric_values(const std::vector<AttackReport>& rs, std::string_view metric) {
  std::vector<double> v;
  for (const auto& r : rs) {
    if (metric == "asr") v.push_back(r.asr);
    if (metric == "amc" && r.amc) v.push_back(*r.amc);
    if (metric == "auc_clean") v.push_back(r.auc_clean);
    if (metric == "auc_backdoored") v.push_back(r.auc_backdoored);
    if (metric == "bpd") v.push_back(r.bpd);
  }
  return v;
}

std::string summary_rows(const std::vector<AttackReport>& reports) {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<AttackReport>> groups;
  std::vector<std::tuple<std::string, std::string, std::string>> order;
  for (const auto& r : reports) {
    const auto key = std::make_tuple(r.dataset, r.model, r.attack);
    if (!groups.contains(key)) order.push_back(key);
    groups[key].push_back(r);
  }
  std::string s;
  for (const auto& key : order) {
    for (const char* metric : kMetrics) {
      const auto st = summarize(metric_values(groups[key], metric));
      if (st.n == 0) continue;
      s += std::get<0>(key) + ',' + std::get<1>(key) + ',' + std::get<2>(key) + ',' + metric + ',' +
           format_number(st.mean) + ',' + format_number(st.std) + ',' + std::to_string(st.n) + '\n';
    }
  }
  return s;
}

std::vector<ModelKind> union_kinds(const std::vector<ModelKind>& a, const std::vector<ModelKind>& b) {
  std::vector<ModelKind> out = a;
  for (auto k : b) {
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

}  // namespace

Dataset load_experiment_dataset(const ExperimentConfig& cfg) {
  if (cfg.data_dir.empty()) {
    if (cfg.dataset != "synth") throw std::invalid_argument("data.dir is required unless data.name = synth");
    SynthConfig sc;
    sc.seed = cfg.synth_seed;
    return make_synthetic(sc);
  }
  return load_dataset(cfg.data_dir, cfg.dataset);
}

BackdoorOptions attack_options(const ExperimentConfig& cfg, AttackKind kind, const Graph& train_graph,
                               std::uint64_t seed) {
  BackdoorOptions o;
  o.attack = cfg.attack_cfg;
  o.model = cfg.model_cfg;
  o.seed = seed;
  const AttackConfig& a = cfg.attack_cfg;
  const std::size_t q_x = resolve_q_x(a, train_graph.n_features());
  const auto tseed = derive_seed(seed, "trigger");
  switch (kind) {
    case AttackKind::LinkBackdoor:
      break;
    case AttackKind::ERB:
      o.initial = erb_trigger(train_graph, a.m, a.q_a, q_x, a.alpha, cfg.erb_probability, tseed);
      o.strategy = fixed_strategy();
      break;
    case AttackKind::Random:
      o.initial = random_trigger(train_graph, a.m, a.q_a, q_x, a.alpha, tseed);
      o.strategy = fixed_strategy();
      break;
    case AttackKind::PSO:
      o.strategy = pso_strategy(cfg.pso, derive_seed(seed, "pso"));
      break;
    case AttackKind::NoInjection:
      o.initial = no_injection_trigger(train_graph, a.m, a.q_a, tseed);
      break;
  }
  return o;
}

SplitResult experiment_split(const Dataset& ds, std::uint64_t seed) {
  return split_edges(ds.graph, derive_seed(seed, "split"));
}

ModelState train_clean(const ExperimentConfig& cfg, ModelKind kind, const SplitResult& split, std::uint64_t seed) {
  return train(kind, split.train_graph, split.split, cfg.model_cfg, seed).state;
}

SeedRun run_seed(const ExperimentConfig& cfg, const Dataset& ds, ModelKind kind, std::uint64_t seed,
                 const ModelState* clean) {
  SeedRun r;
  r.model = kind;
  r.seed = seed;
  r.split = experiment_split(ds, seed);
  r.clean = clean ? *clean : train_clean(cfg, kind, r.split, seed);
  if (cfg.attack_cfg.poison_rate == 0.0) {
    r.backdoor.state = r.clean;
    r.backdoor.trigger = empty_trigger(r.split.train_graph, cfg);
    r.backdoor.targets.eval = r.split.split.test_neg;
  } else {
    r.backdoor = link_backdoor_train(kind, ds.graph, r.split, attack_options(cfg, cfg.attack, r.split.train_graph, seed));
  }
  r.report = labelled(evaluate(r.clean, r.backdoor.state, r.backdoor.trigger, r.split, r.backdoor.targets.eval,
                               cfg.attack_cfg.threshold, cfg.attack_cfg.per_target),
                      cfg, cfg.attack, seed);
  return r;
}

Stat summarize(const std::vector<double>& values) {
  Stat s;
  s.n = values.size();
  if (s.n == 0) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

std::string config_comment(const ExperimentConfig& cfg) {
  std::string s;
  for (const auto& [k, v] : config_pairs(cfg)) s += "# " + k + "=" + v + "\n";
  return s;
}

fs::path seed_dir(const fs::path& out, ModelKind kind, std::uint64_t seed) {
  return out / std::string(to_string(kind)) / ("seed_" + std::to_string(seed));
}

void write_seed_outputs(const ExperimentConfig& cfg, const SeedRun& run, const fs::path& dir) {
  fs::path tmp = dir;
  tmp += ".partial";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  const auto head = config_comment(cfg) + "# seed=" + std::to_string(run.seed) + "\n";
  write_file(tmp / "report.csv", head + report_csv_header() + "\n" + report_csv_row(run.report) + "\n");
  auto pairs = config_pairs(cfg);
  pairs.emplace_back("seed", std::to_string(run.seed));
  write_file(tmp / "report.json", report_json(run.report, pairs) + "\n");
  std::string comment;
  for (const auto& [k, v] : pairs) comment += (comment.empty() ? "" : " ") + k + "=" + v;
  save_trigger(run.backdoor.trigger, tmp / "trigger.txt", comment);
  write_file(tmp / "targets.txt",
             head + edges_block("poison", run.backdoor.targets.poison) + edges_block("eval", run.backdoor.targets.eval));
  save_checkpoint(run.clean, tmp / "clean.ckpt");
  save_checkpoint(run.backdoor.state, tmp / "backdoored.ckpt");
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

AttackReport parse_report_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  if (f.size() != 12) throw std::invalid_argument("report row: expected 12 columns, got " + std::to_string(f.size()));
  AttackReport r;
  r.dataset = f[0];
  r.model = f[1];
  r.attack = f[2];
  r.seed = std::stoull(f[3]);
  r.asr = std::stod(f[4]);
  if (!f[5].empty()) r.amc = std::stod(f[5]);
  r.auc_clean = std::stod(f[6]);
  r.auc_backdoored = std::stod(f[7]);
  r.bpd = std::stod(f[8]);
  r.n_eval_targets = std::stoull(f[9]);
  r.n_success = std::stoull(f[10]);
  r.trigger_edges = std::stoull(f[11]);
  return r;
}

namespace {

AttackReport read_report_json(const fs::path& file) {
  std::ifstream in(file);
  const auto j = nlohmann::json::parse(in);
  AttackReport r;
  r.dataset = j.at("dataset").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.attack = j.at("attack").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.asr = j.at("asr").get<double>();
  if (!j.at("amc").is_null()) r.amc = j.at("amc").get<double>();
  r.auc_clean = j.at("auc_clean").get<double>();
  r.auc_backdoored = j.at("auc_backdoored").get<double>();
  r.bpd = j.at("bpd").get<double>();
  r.n_eval_targets = j.at("n_eval_targets").get<std::size_t>();
  r.n_success = j.at("n_success").get<std::size_t>();
  r.trigger_edges = j.at("trigger_edges").get<std::size_t>();
  return r;
}

}  // namespace

std::vector<AttackReport> collect_reports(const fs::path& root) {
  if (!fs::exists(root)) throw std::runtime_error("no such run directory: " + root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == "report.csv" &&
        e.path().parent_path().extension() != ".partial") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<AttackReport> out;
  for (const auto& f : files) {
    // full precision when the json sibling is there
    const fs::path json = f.parent_path() / "report.json";
    if (fs::exists(json)) {
      out.push_back(read_report_json(json));
      continue;
    }
    std::ifstream in(f);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("dataset,", 0) == 0) continue;
      out.push_back(parse_report_row(line));
    }
  }
  return out;
}

int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  const Dataset ds = load_experiment_dataset(cfg);
  fs::create_directories(cfg.out);
  write_file(cfg.out / "config.ini", render_config(cfg));
  std::vector<AttackReport> reports;
  std::string timing = config_comment(cfg) + "model,seed,update,seconds\n";
  int failures = 0;
  for (auto kind : cfg.models) {
    for (auto seed : cfg.seeds) {
      log << "[run] " << to_string(kind) << " seed " << seed << " " << to_string(cfg.attack) << "\n" << std::flush;
      try {
        const SeedRun run = run_seed(cfg, ds, kind, seed);
        write_seed_outputs(cfg, run, seed_dir(cfg.out, kind, seed));
        reports.push_back(run.report);
        for (std::size_t i = 0; i < run.backdoor.update_seconds.size(); ++i) {
          timing += std::string(to_string(kind)) + ',' + std::to_string(seed) + ',' + std::to_string(i + 1) + ',' +
                    format_number(run.backdoor.update_seconds[i]) + '\n';
        }
        log << "  asr " << format_number(run.report.asr) << " auc " << format_number(run.report.auc_clean) << " -> "
            << format_number(run.report.auc_backdoored) << "\n";
      } catch (const std::exception& e) {
        ++failures;
        log << "  seed " << seed << " failed: " << e.what() << "\n";
      }
    }
  }
  write_file(cfg.out / "summary.csv",
             config_comment(cfg) + "dataset,model,attack,metric,mean,std,n\n" + summary_rows(reports));
  write_file(cfg.out / "timing.csv", timing);
  return failures == 0 ? 0 : 1;
}

int run_defense(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  const Dataset ds = load_experiment_dataset(cfg);
  fs::create_directories(cfg.out);
  write_file(cfg.out / "config.ini", render_config(cfg));
  std::string rows = config_comment(cfg) + "dataset,model,attack,seed,asr,asr_defended,drop,defense_fraction\n";
  std::map<ModelKind, std::vector<double>> undefended, defended;
  std::vector<AttackReport> reports;
  int failures = 0;
  for (auto kind : cfg.models) {
    for (auto seed : cfg.seeds) {
      log << "[defend] " << to_string(kind) << " seed " << seed << "\n" << std::flush;
      try {
        const SeedRun run = run_seed(cfg, ds, kind, seed);
        write_seed_outputs(cfg, run, seed_dir(cfg.out, kind, seed));
        const Trigger noisy = feature_noise_defense(run.backdoor.trigger, cfg.defense_fraction,
                                                    derive_seed(seed, "defense"));
        const AsrResult d = asr(run.clean, run.backdoor.state, noisy, run.split.train_graph, run.backdoor.targets.eval,
                                cfg.attack_cfg.threshold, cfg.attack_cfg.per_target);
        reports.push_back(run.report);
        undefended[kind].push_back(run.report.asr);
        defended[kind].push_back(d.asr);
        rows += cfg.dataset + ',' + std::string(to_string(kind)) + ',' + std::string(to_string(cfg.attack)) + ',' +
                std::to_string(seed) + ',' + format_number(run.report.asr) + ',' + format_number(d.asr) + ',' +
                format_number(run.report.asr - d.asr) + ',' + format_number(cfg.defense_fraction) + '\n';
        log << "  asr " << format_number(run.report.asr) << " defended " << format_number(d.asr) << "\n";
      } catch (const std::exception& e) {
        ++failures;
        log << "  seed " << seed << " failed: " << e.what() << "\n";
      }
    }
  }
  std::string summary = config_comment(cfg) + "dataset,model,attack,asr_mean,asr_defended_mean,drop_mean,drop_std,n\n";
  for (auto kind : cfg.models) {
    std::vector<double> drops;
    for (std::size_t i = 0; i < undefended[kind].size(); ++i) drops.push_back(undefended[kind][i] - defended[kind][i]);
    if (drops.empty()) continue;
    const auto dr = summarize(drops);
    summary += cfg.dataset + ',' + std::string(to_string(kind)) + ',' + std::string(to_string(cfg.attack)) + ',' +
               format_number(summarize(undefended[kind]).mean) + ',' + format_number(summarize(defended[kind]).mean) +
               ',' + format_number(dr.mean) + ',' + format_number(dr.std) + ',' + std::to_string(dr.n) + '\n';
  }
  write_file(cfg.out / "defense.csv", rows);
  write_file(cfg.out / "defense_summary.csv", summary);
  write_file(cfg.out / "summary.csv",
             config_comment(cfg) + "dataset,model,attack,metric,mean,std,n\n" + summary_rows(reports));
  return failures == 0 ? 0 : 1;
}

int run_transfer(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  const Dataset ds = load_experiment_dataset(cfg);
  fs::create_directories(cfg.out);
  write_file(cfg.out / "config.ini", render_config(cfg));
  const auto& surrogates = cfg.models;
  const auto targets = cfg.transfer_targets.empty() ? cfg.models : cfg.transfer_targets;
  const auto kinds = union_kinds(surrogates, targets);
  std::map<std::pair<ModelKind, ModelKind>, std::vector<double>> cell;
  std::string runs = config_comment(cfg) + "surrogate,target," + report_csv_header() + "\n";
  int failures = 0;
  for (auto seed : cfg.seeds) {
    log << "[transfer] seed " << seed << "\n" << std::flush;
    try {
      const SplitResult split = experiment_split(ds, seed);
      std::map<ModelKind, SeedRun> white;
      for (auto k : kinds) {
        white[k] = run_seed(cfg, ds, k, seed);
        write_seed_outputs(cfg, white[k], seed_dir(cfg.out, k, seed));
      }
      for (auto s : surrogates) {
        for (auto t : targets) {
          AttackReport r;
          if (s == t) {
            r = white[t].report;
          } else {
            const BackdoorResult bd = transfer_train(t, ds.graph, split, white[s].backdoor,
                                                     attack_options(cfg, cfg.attack, split.train_graph, seed));
            r = labelled(evaluate(white[t].clean, bd.state, bd.trigger, split, bd.targets.eval,
                                  cfg.attack_cfg.threshold, cfg.attack_cfg.per_target),
                         cfg, cfg.attack, seed);
          }
          cell[{s, t}].push_back(r.asr);
          runs += std::string(to_string(s)) + ',' + std::string(to_string(t)) + ',' + report_csv_row(r) + '\n';
          log << "  " << to_string(s) << " -> " << to_string(t) << " asr " << format_number(r.asr) << "\n";
        }
      }
    } catch (const std::exception& e) {
      ++failures;
      log << "  seed " << seed << " failed: " << e.what() << "\n";
    }
  }
  auto matrix = [&](bool delta) {
    std::string s = config_comment(cfg) + "surrogate";
    for (auto t : targets) s += "," + std::string(to_string(t));
    s += "\n";
    for (auto sk : surrogates) {
      s += std::string(to_string(sk));
      for (auto t : targets) {
        const double v = summarize(cell[{sk, t}]).mean;
        const double base = cell.contains({t, t}) ? summarize(cell[{t, t}]).mean : summarize(cell[{sk, t}]).mean;
        s += "," + format_number(!delta ? v : sk == t ? 0.0 : v - base);
      }
      s += "\n";
    }
    return s;
  };
  write_file(cfg.out / "transfer_runs.csv", runs);
  write_file(cfg.out / "transfer_asr.csv", matrix(false));
  write_file(cfg.out / "transfer_delta.csv", matrix(true));
  return failures == 0 ? 0 : 1;
}

int run_sensitivity(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  if (cfg.sweep_values.empty()) throw std::invalid_argument("run.sweep_values: nothing to sweep");
  const Dataset ds = load_experiment_dataset(cfg);
  fs::create_directories(cfg.out);
  write_file(cfg.out / "config.ini", render_config(cfg));
  const char* axis = cfg.sweep_axis == SweepAxis::PoisonRate ? "poison_rate" : "warmup";
  std::string rows = config_comment(cfg) + "dataset,model,attack," + axis + ",asr_mean,asr_std,n\n";
  std::string runs = config_comment(cfg) + axis + std::string(",") + report_csv_header() + "\n";
  int failures = 0;
  for (auto kind : cfg.models) {
    std::map<std::uint64_t, ModelState> clean;
    for (double value : cfg.sweep_values) {
      ExperimentConfig c = cfg;
      if (cfg.sweep_axis == SweepAxis::PoisonRate) {
        c.attack_cfg.poison_rate = value;
      } else {
        if (value < 0.0 || value != std::floor(value)) throw std::invalid_argument("warmup sweep values must be whole");
        c.attack_cfg.warmup = static_cast<std::size_t>(value);
      }
      std::vector<double> asrs;
      for (auto seed : cfg.seeds) {
        log << "[sensitivity] " << to_string(kind) << " " << axis << "=" << format_number(value) << " seed " << seed
            << "\n" << std::flush;
        try {
          if (!clean.contains(seed)) clean[seed] = train_clean(c, kind, experiment_split(ds, seed), seed);
          const SeedRun run = run_seed(c, ds, kind, seed, &clean[seed]);
          asrs.push_back(run.report.asr);
          runs += format_number(value) + ',' + report_csv_row(run.report) + '\n';
        } catch (const std::exception& e) {
          ++failures;
          log << "  seed " << seed << " failed: " << e.what() << "\n";
        }
      }
      const auto st = summarize(asrs);
      rows += cfg.dataset + ',' + std::string(to_string(kind)) + ',' + std::string(to_string(cfg.attack)) + ',' +
              format_number(value) + ',' + format_number(st.mean) + ',' + format_number(st.std) + ',' +
              std::to_string(st.n) + '\n';
    }
  }
  write_file(cfg.out / "sensitivity.csv", rows);
  write_file(cfg.out / "sensitivity_runs.csv", runs);
  return failures == 0 ? 0 : 1;
}

int run_report(const std::vector<fs::path>& dirs, const fs::path& out, std::ostream& table) {
  std::vector<AttackReport> reports;
  for (const auto& d : dirs) {
    auto r = collect_reports(d);
    reports.insert(reports.end(), r.begin(), r.end());
  }
  if (reports.empty()) throw std::runtime_error("no report.csv found");
  const std::string csv = "dataset,model,attack,metric,mean,std,n\n" + summary_rows(reports);
  if (!out.empty()) write_file(out, csv);
  table << std::left << std::setw(12) << "dataset" << ' ' << std::setw(8) << "model" << ' ' << std::setw(15) << "attack"
        << ' ' << std::setw(16) << "metric" << ' ' << std::setw(14) << "mean" << ' ' << std::setw(14) << "std" << ' '
        << "n\n";
  std::stringstream ss(summary_rows(reports));
  std::string line;
  while (std::getline(ss, line)) {
    std::stringstream ls(line);
    std::string f;
    const int widths[] = {12, 8, 15, 16, 14, 14, 0};
    for (int i = 0; std::getline(ls, f, ','); ++i) table << std::setw(widths[i]) << f << (widths[i] ? " " : "");
    table << "\n";
  }
  return 0;
}

}  // namespace lbd
