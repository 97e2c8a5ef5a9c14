#include <doctest.h>

#include <filesystem>

#include "helpers.hpp"
#include "linkbackdoor/trigger.hpp"

using namespace lbd;

namespace {

Trigger blank(std::size_t m, std::size_t d, std::size_t q_a = 5, std::size_t q_x = 3) {
  Trigger t;
  t.m = m;
  t.q_a = q_a;
  t.q_x = q_x;
  t.pattern = Matrix::Zero(static_cast<Eigen::Index>(m + 2), static_cast<Eigen::Index>(m + 2));
  t.features = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  t.reference = t.features;
  return t;
}

void wire(Trigger& t, int a, int b) { t.pattern(a, b) = t.pattern(b, a) = 1.0; }

Matrix sym_grad(const Trigger& t, std::initializer_list<std::tuple<int, int, double>> entries) {
  Matrix g = Matrix::Zero(t.pattern.rows(), t.pattern.cols());
  for (auto [a, b, v] : entries) g(a, b) = g(b, a) = v;
  return g;
}

}  // namespace

TEST_CASE("admissible slots") {
  CHECK(admissible_slots(1) == std::vector<Edge>{{0, 2}, {1, 2}});
  CHECK(admissible_slots(2) == std::vector<Edge>{{0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
  CHECK(admissible_slots(2, false) == std::vector<Edge>{{0, 2}, {0, 3}, {1, 2}, {1, 3}});
  CHECK(admissible_slots(3).size() == 9);
}

TEST_CASE("generated triggers respect every invariant and are reproducible") {
  const Graph g = testing::random_graph(30, 20, 12, 1);
  for (std::size_t m : {1, 2, 3}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Trigger t = gen_trigger(g, m, 5, 2, 1.0, seed);
      CHECK(trigger_violations(t, admissible_slots(m)).empty());
      CHECK(t.pattern(0, 1) == 0.0);
      if (m == 1) CHECK(t.edge_count() <= 2);
      for (Eigen::Index k = 0; k < t.features.rows(); ++k) {
        bool found = false;
        for (Eigen::Index i = 0; i < g.features().rows() && !found; ++i) found = g.features().row(i) == t.features.row(k);
        CHECK(found);
      }
      CHECK(t.reference == t.features);
    }
  }
  const Trigger a = gen_trigger(g, 2, 5, 2, 1.0, 4), b = gen_trigger(g, 2, 5, 2, 1.0, 4);
  CHECK(a.pattern == b.pattern);
  CHECK(a.features == b.features);
}

TEST_CASE("violations are reported") {
  Trigger t = blank(2, 3, 2);
  CHECK(trigger_violations(t, admissible_slots(2)).empty());
  wire(t, 0, 1);
  CHECK_FALSE(trigger_violations(t, admissible_slots(2)).empty());
  t = blank(2, 3, 2);
  wire(t, 0, 2);
  wire(t, 1, 2);
  wire(t, 2, 3);
  CHECK_FALSE(trigger_violations(t, admissible_slots(2)).empty());
  t = blank(2, 3);
  t.pattern(0, 2) = 1.0;
  CHECK_FALSE(trigger_violations(t, admissible_slots(2)).empty());
  t = blank(2, 3);
  t.features(0, 0) = 1.5;
  CHECK_FALSE(trigger_violations(t, admissible_slots(2)).empty());
  t = blank(2, 3, 5, 1);
  t.features(0, 0) = t.features(1, 1) = 1.0;
  CHECK_FALSE(trigger_violations(t, admissible_slots(2)).empty());
}

TEST_CASE("symmetrize") {
  Matrix a(2, 2), b(2, 2);
  a << 0, 2, 4, 0;
  b << 5, 1, 1, 5;
  CHECK(symmetrize(a) == (Matrix(2, 2) << 0, 3, 3, 0).finished());
  CHECK(symmetrize(b) == (Matrix(2, 2) << 0, 1, 1, 0).finished());
  const Matrix s = symmetrize(Matrix::Random(4, 4));
  CHECK(symmetrize(s) == s);
}

TEST_CASE("sign rule on structure") {
  Trigger t = blank(2, 3);
  wire(t, 0, 2);
  const auto out = update_trigger(t, sym_grad(t, {{0, 2, 0.3}, {1, 3, -0.3}}), Matrix::Zero(2, 3), admissible_slots(2));
  CHECK(out.pattern(0, 2) == 0.0);
  CHECK(out.pattern(2, 0) == 0.0);
  CHECK(out.pattern(1, 3) == 1.0);
  CHECK(out.pattern(3, 1) == 1.0);
}

TEST_CASE("feature clamp arithmetic") {
  Trigger t = blank(1, 2);
  t.features << 0.7, 1.0;
  t.reference = t.features;
  t.alpha = 0.1;
  Matrix g(1, 2);
  g << -1, -1;
  auto out = update_trigger(t, Matrix::Zero(3, 3), g, admissible_slots(1));
  CHECK(out.features(0, 0) == doctest::Approx(0.8));
  CHECK(out.features(0, 1) == 1.0);
  t.alpha = 1.0;
  out = update_trigger(t, Matrix::Zero(3, 3), g, admissible_slots(1));
  CHECK(out.features(0, 0) == 1.0);
  CHECK(out.features(0, 1) == 1.0);
}

TEST_CASE("zero gradients leave the trigger unchanged") {
  const Graph g = testing::random_graph(20, 10, 6, 2);
  const Trigger t = gen_trigger(g, 2, 5, 2, 1.0, 3);
  const auto out = update_trigger(t, Matrix::Zero(4, 4), Matrix::Zero(2, 6), admissible_slots(2));
  CHECK(out.pattern == t.pattern);
  CHECK(out.features == t.features);
}

TEST_CASE("additions stop at the edge budget, removals always apply") {
  Trigger t = blank(2, 3, 2);
  wire(t, 0, 2);
  wire(t, 1, 2);
  const auto grad = sym_grad(t, {{0, 3, -0.9}, {1, 3, -0.8}, {2, 3, -0.7}, {0, 2, 0.1}});
  const auto out = update_trigger(t, grad, Matrix::Zero(2, 3), admissible_slots(2));
  CHECK(out.edge_count() == 1);
  CHECK(out.pattern(0, 2) == 0.0);
  CHECK(out.pattern(1, 2) == 1.0);
  CHECK(out.pattern(0, 3) == 0.0);
  CHECK(trigger_violations(out, admissible_slots(2)).empty());
  const auto next = update_trigger(out, grad, Matrix::Zero(2, 3), admissible_slots(2));
  CHECK(next.edge_count() == 2);
  CHECK(next.pattern(0, 3) == 1.0);
}

TEST_CASE("equal magnitudes resolve to the lower slot index") {
  Trigger t = blank(2, 3, 1);
  const auto grad = sym_grad(t, {{1, 3, -0.5}, {0, 3, -0.5}, {2, 3, -0.5}});
  const auto out = update_trigger(t, grad, Matrix::Zero(2, 3), admissible_slots(2));
  CHECK(out.pattern(0, 3) == 1.0);
  CHECK(out.edge_count() == 1);
}

TEST_CASE("the target pair slot and the diagonal never change") {
  Trigger t = blank(2, 3);
  Matrix grad = Matrix::Constant(4, 4, -1.0);
  const auto out = update_trigger(t, grad, Matrix::Zero(2, 3), admissible_slots(2));
  CHECK(out.pattern(0, 1) == 0.0);
  CHECK(out.pattern.diagonal().isZero());
  CHECK(out.edge_count() == 5);
}

TEST_CASE("feature budget counts deviations from the reference") {
  Trigger t = blank(1, 5, 5, 2);
  Matrix g(1, 5);
  g << -0.5, -0.4, -0.3, -0.2, -0.1;
  auto out = update_trigger(t, Matrix::Zero(3, 3), g, admissible_slots(1));
  CHECK(out.features == (Matrix(1, 5) << 1, 1, 0, 0, 0).finished());
  out = update_trigger(out, Matrix::Zero(3, 3), g, admissible_slots(1));
  CHECK(out.features == (Matrix(1, 5) << 1, 1, 0, 0, 0).finished());
  Matrix back(1, 5);
  back << 0.5, 0, -0.3, 0, 0;
  out = update_trigger(out, Matrix::Zero(3, 3), back, admissible_slots(1));
  CHECK(out.features == (Matrix(1, 5) << 0, 1, 1, 0, 0).finished());
  CHECK(trigger_violations(out, admissible_slots(1)).empty());
}

TEST_CASE("mixing an empty pattern only injects nodes") {
  const Graph g = testing::random_graph(10, 5, 4, 3);
  Trigger t = blank(2, 4);
  t.features.setOnes();
  const std::vector<Edge> targets{{0, 5}};
  const auto mixed = mix_trigger(g, t, targets);
  const Graph expect = inject_nodes(g, 2, t.features);
  CHECK(mixed.graph.edges() == expect.edges());
  CHECK(mixed.graph.features() == expect.features());
  CHECK(mixed.trigger_edges.empty());
  CHECK(mixed.injected == std::vector<NodeId>{10, 11});
}

TEST_CASE("one target wired to i1 raises its degree by two") {
  const Graph g(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}}, Matrix::Zero(6, 2));
  Trigger t = blank(2, 2);
  wire(t, 0, 2);
  wire(t, 1, 2);
  const std::vector<Edge> targets{{0, 3}};
  const auto mixed = mix_trigger(g, t, targets);
  CHECK(mixed.graph.degree(6) == 2);
  CHECK(mixed.graph.has_edge(0, 6));
  CHECK(mixed.graph.has_edge(3, 6));
  CHECK_FALSE(mixed.graph.has_edge(0, 3));
}

TEST_CASE("mixing rejects linked targets") {
  const Graph g(4, {{0, 1}}, Matrix::Zero(4, 1));
  const Trigger t = blank(1, 1);
  const std::vector<Edge> targets{{0, 1}};
  CHECK_THROWS_AS(mix_trigger(g, t, targets), std::invalid_argument);
}

TEST_CASE("shared mixing keeps the clean block and is undone by dropping injected nodes") {
  const Graph g = testing::random_graph(40, 40, 8, 5);
  const Trigger t = gen_trigger(g, 2, 5, 2, 1.0, 8);
  std::vector<Edge> targets;
  for (NodeId a = 0; a + 1 < 40 && targets.size() < 6; a += 6) {
    if (!g.has_edge(a, a + 3)) targets.push_back({a, a + 3});
  }
  for (bool per_target : {false, true}) {
    const auto mixed = mix_trigger(g, t, targets, per_target);
    const std::size_t copies = per_target ? targets.size() : 1;
    CHECK(mixed.graph.n_nodes() == 40 + 2 * copies);
    CHECK(mixed.graph.dense_adjacency().topLeftCorner(40, 40) == g.dense_adjacency());
    CHECK(mixed.graph.features().topRows(40) == g.features());
    std::vector<Edge> kept;
    for (const auto& e : mixed.graph.edges()) {
      if (e.u < 40 && e.v < 40) kept.push_back(e);
    }
    CHECK(kept == g.edges());
    CHECK(mixed.trigger_edges.size() <= t.edge_count() * targets.size());
    CHECK(mixed.placements.size() == targets.size());
  }
}

TEST_CASE("anchored triggers use existing nodes") {
  const Graph g = testing::random_graph(12, 6, 3, 9);
  Trigger t = blank(2, 3);
  t.anchors = {10, 11};
  t.features = g.features().bottomRows(2);
  t.reference = t.features;
  wire(t, 0, 2);
  wire(t, 1, 3);
  const std::vector<Edge> targets{{0, 5}};
  const auto mixed = mix_trigger(g, t, targets);
  CHECK(mixed.graph.n_nodes() == 12);
  CHECK(mixed.graph.features() == g.features());
  const std::vector<Edge> bad{{0, 10}};
  CHECK_THROWS_AS(mix_trigger(g, t, bad), std::invalid_argument);
}

TEST_CASE("trigger files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "lbd_test_trigger";
  std::filesystem::create_directories(dir);
  const Graph g = testing::random_graph(20, 10, 6, 2);
  Trigger t = gen_trigger(g, 2, 5, 3, 0.5, 7);
  t.features(0, 0) = 0.25;
  save_trigger(t, dir / "t.txt", "note=1");
  const Trigger back = load_trigger(dir / "t.txt");
  CHECK(back.m == t.m);
  CHECK(back.q_a == t.q_a);
  CHECK(back.q_x == t.q_x);
  CHECK(back.alpha == t.alpha);
  CHECK(back.pattern == t.pattern);
  CHECK(back.features == t.features);
  CHECK(back.reference == t.reference);
  Trigger a = blank(2, 3);
  a.anchors = {4, 9};
  save_trigger(a, dir / "a.txt");
  CHECK(load_trigger(dir / "a.txt").anchors == a.anchors);
  CHECK_THROWS(load_trigger(dir / "missing.txt"));
}
