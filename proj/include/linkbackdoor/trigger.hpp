#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "linkbackdoor/graph.hpp"

namespace lbd {

/// Trigger over slots [t0, t1, i1 .. im]: t0 and t1 stand for the endpoints of
/// a target pair, i_k for the k-th attacker node.
struct Trigger {
  std::size_t m = 0;
  Matrix pattern;   ///< (2+m) x (2+m) symmetric 0/1, zero diagonal
  Matrix features;  ///< m x d in [0,1]
  /// Features at generation time; q_x bounds how many entries may differ.
  Matrix reference;
  std::size_t q_a = 5;
  std::size_t q_x = 0;
  double alpha = 1.0;
  /// Existing nodes standing in for i1..im (no-injection ablation). Empty
  /// when the attacker nodes are injected.
  std::vector<NodeId> anchors;

  std::size_t slot_count() const noexcept { return m + 2; }
  std::size_t edge_count() const;
  bool injects() const noexcept { return anchors.empty(); }
};

/// Slot pairs (s < t) a trigger may wire: every pair touching an attacker
/// slot. With `link_attackers` false the i-i pairs are left out.
std::vector<Edge> admissible_slots(std::size_t m, bool link_attackers = true);

/// Human-readable descriptions of broken invariants; empty when valid.
std::vector<std::string> trigger_violations(const Trigger& t, std::span<const Edge> admissible);

/// Random admissible pattern (each slot kept with probability 1/2, then
/// truncated to q_a at random) and features copied from m random rows of g,
/// which also become the reference.
Trigger gen_trigger(const Graph& g, std::size_t m, std::size_t q_a, std::size_t q_x, double alpha,
                    std::uint64_t seed);

/// Off-diagonal (i,j) <- (g_ij + g_ji) / 2, diagonal <- 0.
Matrix symmetrize(const Matrix& grad);

/// Clamp to [0,1]: ReLU(x) - ReLU(x - 1).
inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

/// Ranked greedy sign step. Structure: admissible slots whose entry would
/// change under A <- F(A - sign(g)) are taken by |g| descending (ties: lower
/// slot index first); removals always apply, additions only while the edge
/// count stays within q_a. Features: entries that would change under
/// X <- F(X - alpha sign(g)) are taken the same way; a change that makes an
/// entry differ from `reference` applies only while fewer than q_x entries
/// differ, a change back always applies.
Trigger update_trigger(const Trigger& t, const Matrix& grad_adj_sym, const Matrix& grad_features,
                       std::span<const Edge> admissible);

/// Where each slot lands for one mixing.
struct Placement {
  Edge target;
  std::vector<NodeId> attackers;  ///< node id per attacker slot
};

struct MixedGraph {
  Graph graph;
  std::size_t n_original = 0;
  std::vector<NodeId> injected;       ///< ids of injected nodes, in order
  std::vector<Placement> placements;  ///< one per target
  std::vector<Edge> trigger_edges;    ///< edges added by the trigger
};

/// Wires the trigger onto every target pair. Injected nodes are shared by
/// all targets unless `per_target` is set, in which case each target gets
/// its own m copies. Throws std::invalid_argument when a target pair is
/// already linked or touches an anchor.
MixedGraph mix_trigger(const Graph& g, const Trigger& t, std::span<const Edge> targets, bool per_target = false);

/// Text format:
///   # linkbackdoor trigger v1
///   m=<m> q_a=<q> q_x=<q> alpha=<a> d=<d>
///   anchors <k> <id>...
///   edges <k>
///   <s> <t>                     slot indices, t0=0 t1=1 i_k=k+1
///   features
///   <m rows of d values>
///   reference
///   <m rows of d values>
/// Extra `# ...` lines after the first are kept as comments and ignored.
void save_trigger(const Trigger& t, const std::filesystem::path& path, const std::string& comment = {});
Trigger load_trigger(const std::filesystem::path& path);

}  // namespace lbd
