#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "linkbackdoor/models.hpp"
#include "linkbackdoor/trigger.hpp"

namespace lbd {

struct VizSummary {
  std::size_t nodes = 0;
  std::size_t injected = 0;
  std::size_t original_edges = 0;
  std::size_t trigger_edges = 0;
  std::size_t target_edges = 0;
};

/// GEXF 1.3 document of a mixed graph. Node attribute `role` is one of
/// original, target, injected, anchor; edge attribute `role` is one of
/// original, trigger, target (the attacked pair itself, not a graph edge).
/// `meta` lands in the document description.
VizSummary write_gexf(const MixedGraph& mixed, const Trigger& trigger, std::span<const Edge> targets,
                      std::ostream& out, const std::vector<std::pair<std::string, std::string>>& meta = {});

/// Rebuilds the poisoned training graph of one run directory (config.ini plus
/// `<model>/seed_<s>/trigger.txt` and `targets.txt`) and writes it to `out`.
/// Defaults to the first configured model and seed. Throws std::runtime_error
/// naming a missing artifact.
VizSummary export_run(const std::filesystem::path& run_dir, std::optional<ModelKind> model,
                      std::optional<std::uint64_t> seed, const std::filesystem::path& out);

}  // namespace lbd
