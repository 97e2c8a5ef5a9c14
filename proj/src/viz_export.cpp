#include "linkbackdoor/viz_export.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "linkbackdoor/experiment.hpp"

namespace fs = std::filesystem;

namespace lbd {

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<Edge> read_block(std::istream& in, const std::string& name, const fs::path& path) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string word;
    std::size_t k = 0;
    if (!(ls >> word >> k) || word != name) break;
    std::vector<Edge> out(k);
    for (auto& e : out) {
      if (!(in >> e.u >> e.v)) throw std::runtime_error(path.string() + ": truncated " + name + " block");
    }
    std::getline(in, line);
    return out;
  }
  throw std::runtime_error(path.string() + ": missing " + name + " block");
}

}  // namespace

VizSummary write_gexf(const MixedGraph& mixed, const Trigger& trigger, std::span<const Edge> targets,
                      std::ostream& out, const std::vector<std::pair<std::string, std::string>>& meta) {
  const Graph& g = mixed.graph;
  std::vector<const char*> role(g.n_nodes(), "original");
  for (const auto& e : targets) role.at(e.u) = role.at(e.v) = "target";
  for (NodeId a : trigger.anchors) role.at(a) = "anchor";
  for (NodeId i : mixed.injected) role.at(i) = "injected";

  std::vector<Edge> trig = mixed.trigger_edges;
  std::sort(trig.begin(), trig.end());
  VizSummary s;
  s.nodes = g.n_nodes();
  s.injected = mixed.injected.size();

  std::string desc;
  for (const auto& [k, v] : meta) desc += (desc.empty() ? "" : " ") + k + "=" + v;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<gexf xmlns=\"http://gexf.net/1.3\" version=\"1.3\">\n"
      << "  <meta>\n    <creator>linkbackdoor</creator>\n    <description>" << xml_escape(desc)
      << "</description>\n  </meta>\n"
      << "  <graph defaultedgetype=\"undirected\" mode=\"static\">\n"
      << "    <attributes class=\"node\">\n      <attribute id=\"0\" title=\"role\" type=\"string\"/>\n"
      << "    </attributes>\n"
      << "    <attributes class=\"edge\">\n      <attribute id=\"0\" title=\"role\" type=\"string\"/>\n"
      << "    </attributes>\n    <nodes>\n";
  for (std::size_t i = 0; i < g.n_nodes(); ++i) {
    out << "      <node id=\"" << i << "\" label=\"" << i << "\"><attvalues><attvalue for=\"0\" value=\"" << role[i]
        << "\"/></attvalues></node>\n";
  }
  out << "    </nodes>\n    <edges>\n";
  std::size_t id = 0;
  auto edge = [&](const Edge& e, const char* r) {
    out << "      <edge id=\"" << id++ << "\" source=\"" << e.u << "\" target=\"" << e.v
        << "\"><attvalues><attvalue for=\"0\" value=\"" << r << "\"/></attvalues></edge>\n";
  };
  for (const auto& e : g.edges()) {
    const bool is_trigger = std::binary_search(trig.begin(), trig.end(), e);
    edge(e, is_trigger ? "trigger" : "original");
    ++(is_trigger ? s.trigger_edges : s.original_edges);
  }
  for (const auto& e : targets) {
    edge(e, "target");
    ++s.target_edges;
  }
  out << "    </edges>\n  </graph>\n</gexf>\n";
  return s;
}

VizSummary export_run(const fs::path& run_dir, std::optional<ModelKind> model, std::optional<std::uint64_t> seed,
                      const fs::path& out) {
  const fs::path cfg_path = run_dir / "config.ini";
  if (!fs::exists(cfg_path)) throw std::runtime_error("missing run artifact " + cfg_path.string());
  const ExperimentConfig cfg = load_config(cfg_path);
  const ModelKind kind = model.value_or(cfg.models.front());
  const std::uint64_t s = seed.value_or(cfg.seeds.front());
  const fs::path dir = seed_dir(run_dir, kind, s);
  for (const char* f : {"trigger.txt", "targets.txt"}) {
    if (!fs::exists(dir / f)) throw std::runtime_error("missing run artifact " + (dir / f).string());
  }
  const Trigger trigger = load_trigger(dir / "trigger.txt");
  std::ifstream tin(dir / "targets.txt");
  const auto poison = read_block(tin, "poison", dir / "targets.txt");

  const Dataset ds = load_experiment_dataset(cfg);
  const SplitResult split = experiment_split(ds, s);
  const MixedGraph mixed = mix_trigger(split.train_graph, trigger, poison, cfg.attack_cfg.per_target);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot write " + out.string());
  auto meta = config_pairs(cfg);
  meta.emplace_back("model", std::string(to_string(kind)));
  meta.emplace_back("seed", std::to_string(s));
  return write_gexf(mixed, trigger, poison, os, meta);
}

}  // namespace lbd
