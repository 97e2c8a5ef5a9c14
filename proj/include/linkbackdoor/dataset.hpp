#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "linkbackdoor/graph.hpp"

namespace lbd {

/// A graph plus optional node class labels, as stored on disk.
///
/// On-disk layout, both whitespace separated plain text:
///   <name>.nodes  header `# linkbackdoor nodes=N features=D labels=0|1`, then one
///                 line per node: `id f_1 ... f_D [label]`, ids 0..N-1 in order
///   <name>.edges  header `# linkbackdoor edges=E`, then one line per
///                 undirected edge: `u v`
struct Dataset {
  std::string name;
  Graph graph;
  std::vector<int> labels;  ///< empty when the node file has no label column
};

Dataset load_dataset(const std::filesystem::path& dir, const std::string& name);
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

struct PrepareReport {
  std::string name;
  std::size_t nodes = 0;
  std::size_t features = 0;
  std::size_t classes = 0;
  std::size_t raw_edge_lines = 0;   ///< citation lines in the raw file
  std::size_t unique_edges = 0;     ///< undirected edges kept
  std::size_t dropped_lines = 0;    ///< self citations or unknown ids
};

/// Converts the LINQS text distribution (`<name>.content`, `<name>.cites`)
/// found in `raw_dir` into the node/edge format in `out_dir`. Throws
/// std::runtime_error naming the first missing file when the layout is not
/// recognized. Output is byte-identical across re-runs.
PrepareReport convert_linqs(const std::filesystem::path& raw_dir, const std::string& name,
                            const std::filesystem::path& out_dir);

/// Settings for a planted-partition citation-like graph.
struct SynthConfig {
  std::string name = "synth";
  std::size_t nodes = 2708;
  std::size_t features = 1433;
  std::size_t classes = 7;
  std::size_t edges = 5278;
  std::size_t group_size = 12;      ///< mean size of the tight groups inside a class
  double locality = 0.6;            ///< fraction of edges drawn inside a group
  double homophily = 0.8;           ///< fraction of the remaining edges inside a class
  double group_topic_share = 0.25;  ///< fraction of a node's words drawn from its group's words
  double words_per_node = 18.0;     ///< mean active binary features per node
  double topic_share = 0.7;         ///< fraction of a node's words drawn from its class topic
  double degree_exponent = 2.5;     ///< power-law tail of expected degrees
  std::uint64_t seed = 7;
};

Dataset make_synthetic(const SynthConfig& cfg);

}  // namespace lbd
