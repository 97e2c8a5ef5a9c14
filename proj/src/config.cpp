#include "linkbackdoor/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "linkbackdoor/metrics.hpp"

namespace lbd {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  const auto s = trim(v);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument(std::string(key) + ": expected a number, got '" + s + "'");
  }
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  const auto s = trim(v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument(std::string(key) + ": expected a non-negative integer, got '" + s + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  auto s = trim(v);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument(std::string(key) + ": expected true/false, got '" + s + "'");
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string models_text(const std::vector<ModelKind>& kinds) {
  std::vector<std::string> names;
  for (auto k : kinds) names.emplace_back(to_string(k));
  return join(names);
}

std::vector<ModelKind> parse_models(std::string_view key, std::string_view v, bool allow_empty) {
  std::vector<ModelKind> out;
  for (const auto& item : split_list(v)) out.push_back(parse_model_kind(item));
  if (out.empty() && !allow_empty) throw std::invalid_argument(std::string(key) + ": empty model list");
  return out;
}

struct Setting {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view, std::string_view)> set;
};

template <class T>
Setting size_setting(const char* key, T ExperimentConfig::*outer, std::size_t T::*field) {
  return {key, [=](const ExperimentConfig& c) { return std::to_string(c.*outer.*field); },
          [=](ExperimentConfig& c, std::string_view k, std::string_view v) {
            c.*outer.*field = static_cast<std::size_t>(to_u64(k, v));
          }};
}

template <class T>
Setting real_setting(const char* key, T ExperimentConfig::*outer, double T::*field) {
  return {key, [=](const ExperimentConfig& c) { return format_number(c.*outer.*field); },
          [=](ExperimentConfig& c, std::string_view k, std::string_view v) { c.*outer.*field = to_double(k, v); }};
}

const std::vector<Setting>& settings() {
  using C = ExperimentConfig;
  static const std::vector<Setting> table = {
      {"data.dir", [](const C& c) { return c.data_dir.string(); },
       [](C& c, std::string_view, std::string_view v) { c.data_dir = trim(v); }},
      {"data.name", [](const C& c) { return c.dataset; },
       [](C& c, std::string_view k, std::string_view v) {
         c.dataset = trim(v);
         if (c.dataset.empty()) throw std::invalid_argument(std::string(k) + ": empty dataset name");
       }},
      {"data.synth_seed", [](const C& c) { return std::to_string(c.synth_seed); },
       [](C& c, std::string_view k, std::string_view v) { c.synth_seed = to_u64(k, v); }},
      {"model.kinds", [](const C& c) { return models_text(c.models); },
       [](C& c, std::string_view k, std::string_view v) { c.models = parse_models(k, v, false); }},
      size_setting("model.hidden", &C::model_cfg, &ModelConfig::hidden),
      size_setting("model.embedding", &C::model_cfg, &ModelConfig::embedding),
      real_setting("model.lr", &C::model_cfg, &ModelConfig::lr),
      size_setting("model.max_epochs", &C::model_cfg, &ModelConfig::max_epochs),
      size_setting("model.patience", &C::model_cfg, &ModelConfig::patience),
      size_setting("model.disc_hidden", &C::model_cfg, &ModelConfig::disc_hidden),
      real_setting("model.disc_lr", &C::model_cfg, &ModelConfig::disc_lr),
      real_setting("model.adv_weight", &C::model_cfg, &ModelConfig::adv_weight),
      size_setting("model.gic_clusters", &C::model_cfg, &ModelConfig::gic_clusters),
      real_setting("model.gic_beta", &C::model_cfg, &ModelConfig::gic_beta),
      real_setting("model.gic_weight", &C::model_cfg, &ModelConfig::gic_weight),
      size_setting("model.dense_loss_max_nodes", &C::model_cfg, &ModelConfig::dense_loss_max_nodes),
      {"attack.kind", [](const C& c) { return std::string(to_string(c.attack)); },
       [](C& c, std::string_view, std::string_view v) { c.attack = parse_attack_kind(trim(v)); }},
      size_setting("attack.m", &C::attack_cfg, &AttackConfig::m),
      size_setting("attack.q_a", &C::attack_cfg, &AttackConfig::q_a),
      size_setting("attack.q_x", &C::attack_cfg, &AttackConfig::q_x),
      real_setting("attack.poison_rate", &C::attack_cfg, &AttackConfig::poison_rate),
      real_setting("attack.alpha", &C::attack_cfg, &AttackConfig::alpha),
      size_setting("attack.update_interval", &C::attack_cfg, &AttackConfig::update_interval),
      size_setting("attack.warmup", &C::attack_cfg, &AttackConfig::warmup),
      size_setting("attack.epochs", &C::attack_cfg, &AttackConfig::epochs),
      real_setting("attack.target_state", &C::attack_cfg, &AttackConfig::target_state),
      size_setting("attack.trigger_steps", &C::attack_cfg, &AttackConfig::trigger_steps),
      {"attack.per_target", [](const C& c) { return std::string(c.attack_cfg.per_target ? "true" : "false"); },
       [](C& c, std::string_view k, std::string_view v) { c.attack_cfg.per_target = to_bool(k, v); }},
      real_setting("attack.threshold", &C::attack_cfg, &AttackConfig::threshold),
      {"attack.erb_probability", [](const C& c) { return format_number(c.erb_probability); },
       [](C& c, std::string_view k, std::string_view v) { c.erb_probability = to_double(k, v); }},
      size_setting("pso.population", &C::pso, &PsoConfig::population),
      size_setting("pso.iterations", &C::pso, &PsoConfig::iterations),
      real_setting("pso.c1", &C::pso, &PsoConfig::c1),
      real_setting("pso.c2", &C::pso, &PsoConfig::c2),
      real_setting("pso.inertia", &C::pso, &PsoConfig::inertia),
      real_setting("pso.vmax", &C::pso, &PsoConfig::vmax),
      size_setting("pso.rounds", &C::pso, &PsoConfig::rounds),
      {"run.seeds",
       [](const C& c) {
         std::vector<std::string> s;
         for (auto v : c.seeds) s.push_back(std::to_string(v));
         return join(s);
       },
       [](C& c, std::string_view k, std::string_view v) {
         c.seeds.clear();
         for (const auto& item : split_list(v)) c.seeds.push_back(to_u64(k, item));
         if (c.seeds.empty()) throw std::invalid_argument(std::string(k) + ": empty seed list");
       }},
      {"run.transfer_targets", [](const C& c) { return models_text(c.transfer_targets); },
       [](C& c, std::string_view k, std::string_view v) { c.transfer_targets = parse_models(k, v, true); }},
      {"run.defense_fraction", [](const C& c) { return format_number(c.defense_fraction); },
       [](C& c, std::string_view k, std::string_view v) { c.defense_fraction = to_double(k, v); }},
      {"run.sweep_axis",
       [](const C& c) { return std::string(c.sweep_axis == SweepAxis::PoisonRate ? "poison_rate" : "warmup"); },
       [](C& c, std::string_view k, std::string_view v) {
         const auto s = trim(v);
         if (s == "poison_rate") {
           c.sweep_axis = SweepAxis::PoisonRate;
         } else if (s == "warmup") {
           c.sweep_axis = SweepAxis::Warmup;
         } else {
           throw std::invalid_argument(std::string(k) + ": expected poison_rate or warmup, got '" + s + "'");
         }
       }},
      {"run.sweep_values",
       [](const C& c) {
         std::vector<std::string> s;
         for (auto v : c.sweep_values) s.push_back(format_number(v));
         return join(s);
       },
       [](C& c, std::string_view k, std::string_view v) {
         c.sweep_values.clear();
         for (const auto& item : split_list(v)) c.sweep_values.push_back(to_double(k, item));
       }},
  };
  return table;
}

}  // namespace

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::LinkBackdoor: return "link-backdoor";
    case AttackKind::ERB: return "erb";
    case AttackKind::Random: return "random";
    case AttackKind::PSO: return "pso";
    case AttackKind::NoInjection: return "no-inj";
  }
  return "?";
}

AttackKind parse_attack_kind(std::string_view name) {
  for (auto k : {AttackKind::LinkBackdoor, AttackKind::ERB, AttackKind::Random, AttackKind::PSO,
                 AttackKind::NoInjection}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown attack '" + std::string(name) +
                              "' (expected link-backdoor, erb, random, pso or no-inj)");
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "run.out") {
    cfg.out = trim(value);
    return;
  }
  for (const auto& s : settings()) {
    if (key == s.key) {
      s.set(cfg, key, value);
      return;
    }
  }
  throw std::invalid_argument("unknown setting '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::istream& in, const std::string& source, ExperimentConfig base) {
  std::string line, section;
  std::set<std::string> seen;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto where = source + ":" + std::to_string(lineno) + ": ";
    const auto t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw std::invalid_argument(where + "unterminated section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      if (section.empty()) throw std::invalid_argument(where + "empty section name");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected key = value");
    if (section.empty()) throw std::invalid_argument(where + "setting outside any [section]");
    const auto key = section + "." + trim(std::string_view(t).substr(0, eq));
    if (!seen.insert(key).second) throw std::invalid_argument(where + "duplicate setting '" + key + "'");
    try {
      apply_setting(base, key, std::string_view(t).substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse_config(in, path.string(), std::move(base));
}

std::vector<std::pair<std::string, std::string>> config_pairs(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : settings()) out.emplace_back(s.key, s.get(cfg));
  return out;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& [key, value] : config_pairs(cfg)) {
    const auto dot = key.find('.');
    const auto sec = key.substr(0, dot);
    if (sec != section) {
      os << (section.empty() ? "" : "\n") << "[" << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << value << "\n";
  }
  return os.str();
}

void validate(const ExperimentConfig& cfg) {
  validate(cfg.attack_cfg);
  if (cfg.seeds.empty()) throw std::invalid_argument("run.seeds: at least one seed required");
  if (cfg.models.empty()) throw std::invalid_argument("model.kinds: at least one model required");
  if (cfg.pso.population < 1) throw std::invalid_argument("pso.population must be positive");
  if (cfg.pso.iterations < 1) throw std::invalid_argument("pso.iterations must be positive");
  if (!(cfg.erb_probability >= 0.0 && cfg.erb_probability <= 1.0)) {
    throw std::invalid_argument("attack.erb_probability outside [0,1]");
  }
  if (!(cfg.defense_fraction >= 0.0 && cfg.defense_fraction <= 1.0)) {
    throw std::invalid_argument("run.defense_fraction outside [0,1]");
  }
  if (cfg.data_dir.empty() && cfg.dataset != "synth") {
    throw std::invalid_argument("data.dir is required unless data.name = synth");
  }
  if (cfg.model_cfg.hidden == 0 || cfg.model_cfg.embedding == 0) {
    throw std::invalid_argument("model.hidden and model.embedding must be positive");
  }
}

}  // namespace lbd
