#include <doctest.h>

#include <algorithm>

#include <json.hpp>

#include "helpers.hpp"
#include "linkbackdoor/metrics.hpp"

using namespace lbd;

namespace {

double brute_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / static_cast<double>(pos.size() * neg.size());
}

}  // namespace

TEST_CASE("auc counts wins and half ties") {
  // 3 x 4 comparisons: 9 wins, 2 ties, 1 loss
  const std::vector<double> pos{0.9, 0.8, 0.4};
  const std::vector<double> neg{0.1, 0.2, 0.4, 0.8};
  CHECK(auc(pos, neg) == doctest::Approx(10.0 / 12.0));
  CHECK(auc(std::vector<double>{0.9, 0.7}, std::vector<double>{0.1, 0.3}) == 1.0);
  CHECK(auc(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5, 0.5}) == 0.5);
}

TEST_CASE("auc rejects empty lists") {
  const std::vector<double> some{0.3};
  CHECK_THROWS_AS(auc({}, some), std::invalid_argument);
  CHECK_THROWS_AS(auc(some, {}), std::invalid_argument);
}

TEST_CASE("auc matches brute force and is rank invariant") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> pos(1 + rng.below(30)), neg(1 + rng.below(30));
    // coarse grid so ties occur
    for (double& v : pos) v = static_cast<double>(rng.below(10)) / 10.0;
    for (double& v : neg) v = static_cast<double>(rng.below(10)) / 10.0;
    const double a = auc(pos, neg);
    CHECK(a == doctest::Approx(brute_auc(pos, neg)).epsilon(1e-12));
    auto warp = [](std::vector<double> v) {
      for (double& x : v) x = std::exp(3.0 * x) - 7.0;
      return v;
    };
    CHECK(auc(warp(pos), warp(neg)) == doctest::Approx(a).epsilon(1e-12));
  }
}

TEST_CASE("asr tally") {
  std::vector<Edge> q;
  std::vector<double> s;
  for (int i = 0; i < 64; ++i) {
    q.push_back({i, 100 + i});
    s.push_back(i < 52 ? 0.6 : 0.3);
  }
  const AsrResult r = tally_asr(q, s, 0.5);
  CHECK(r.asr == doctest::Approx(0.8125));
  CHECK(r.successes.size() == 52);
  REQUIRE(r.amc);
  CHECK(*r.amc == doctest::Approx(0.6));

  const AsrResult all = tally_asr({{0, 1}, {2, 3}}, {0.5, 0.7}, 0.5);
  CHECK(all.asr == 1.0);
  CHECK(*all.amc == doctest::Approx(0.6));

  const AsrResult none = tally_asr({{0, 1}}, {0.49}, 0.5);
  CHECK(none.asr == 0.0);
  CHECK_FALSE(none.amc.has_value());
  CHECK_THROWS(tally_asr({}, {}, 0.5));
}

TEST_CASE("amc") {
  CHECK(*amc(std::vector<double>{0.61}) == doctest::Approx(0.61));
  CHECK(*amc(std::vector<double>{0.5, 0.5, 0.5}) == 0.5);
  CHECK_FALSE(amc(std::vector<double>{}).has_value());
}

TEST_CASE("feature noise defense") {
  const Graph g = testing::random_graph(10, 5, 20, 2);
  const Trigger t = gen_trigger(g, 2, 5, 2, 1.0, 3);
  const Trigger same = feature_noise_defense(t, 0.0, 1);
  CHECK(same.features == t.features);
  CHECK(same.pattern == t.pattern);

  const Trigger flipped = feature_noise_defense(t, 1.0, 1);
  CHECK(flipped.features == (1.0 - t.features.array()).matrix());
  CHECK(flipped.pattern == t.pattern);

  const Trigger tenth = feature_noise_defense(t, 0.1, 1);
  for (Eigen::Index i = 0; i < t.features.rows(); ++i)
    CHECK((tenth.features.row(i).array() != t.features.row(i).array()).count() == 2);
  CHECK(feature_noise_defense(t, 0.1, 1).features == tenth.features);

  Trigger cont = t;
  cont.features.setConstant(0.25);
  const Trigger resampled = feature_noise_defense(cont, 0.5, 4);
  CHECK(resampled.features.minCoeff() >= 0.0);
  CHECK(resampled.features.maxCoeff() <= 1.0);
  for (Eigen::Index i = 0; i < cont.features.rows(); ++i)
    CHECK((resampled.features.row(i).array() != 0.25).count() == 10);

  CHECK_THROWS_AS(feature_noise_defense(t, 1.5, 1), std::invalid_argument);
}

TEST_CASE("evaluate with an unchanged model reports no drop and no success") {
  const Graph g = testing::random_graph(60, 150, 8, 5);
  const SplitResult split = split_edges(g, 1);
  ModelConfig cfg;
  cfg.hidden = 8;
  cfg.embedding = 4;
  cfg.max_epochs = 40;
  const ModelState clean = train(ModelKind::GAE, split.train_graph, split.split, cfg, 2).state;
  Trigger empty = gen_trigger(split.train_graph, 2, 5, 1, 1.0, 3);
  empty.pattern.setZero();
  auto scores = score_pairs(embed(clean, split.train_graph), split.split.test_neg);
  std::nth_element(scores.begin(), scores.begin() + static_cast<long>(scores.size() / 2), scores.end());
  const double threshold = scores[scores.size() / 2];
  const AttackReport r = evaluate(clean, clean, empty, split, split.split.test_neg, threshold);
  CHECK(r.bpd == 0.0);
  CHECK(r.asr == 0.0);
  CHECK(r.n_success == 0);
  CHECK(r.n_eval_targets > 0);
  CHECK_FALSE(r.amc.has_value());
  CHECK(r.trigger_edges == 0);
  CHECK(r.auc_clean == r.auc_backdoored);
}

TEST_CASE("report serialization") {
  AttackReport r;
  r.dataset = "cora";
  r.model = "GAE";
  r.attack = "link-backdoor";
  r.seed = 3;
  r.asr = 0.8125;
  r.auc_clean = 0.9;
  r.auc_backdoored = 0.88;
  r.bpd = 0.02;
  r.n_eval_targets = 64;
  r.n_success = 52;
  r.trigger_edges = 5;
  CHECK(report_csv_header() ==
        "dataset,model,attack,seed,asr,amc,auc_clean,auc_backdoored,bpd,n_eval_targets,n_success,trigger_edges");
  CHECK(report_csv_row(r) == "cora,GAE,link-backdoor,3,0.8125,,0.9,0.88,0.02,64,52,5");
  r.amc = 0.6125;
  const auto j = nlohmann::json::parse(report_json(r, {{"attack.m", "2"}}));
  CHECK(j["asr"].get<double>() == 0.8125);
  CHECK(j["amc"].get<double>() == 0.6125);
  CHECK(j["n_success"].get<int>() == 52);
  CHECK(j["config"]["attack.m"].get<std::string>() == "2");
  r.amc.reset();
  CHECK(nlohmann::json::parse(report_json(r))["amc"].is_null());
}

TEST_CASE("format_number") {
  CHECK(format_number(0.8125) == "0.8125");
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(1.0 / 3.0) == "0.3333333333");
}
