#include <doctest.h>

#include <sstream>

#include "linkbackdoor/config.hpp"

using namespace lbd;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.ini");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const std::invalid_argument& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("parses sections, comments and lists") {
  const ExperimentConfig c = parse(R"(# experiment
[data]
name = cora
dir = /data

[model]
kinds = gae, GIC
hidden = 16

[attack]
kind = erb
poison_rate = 0.05
per_target = true

[run]
seeds = 0,1,2
sweep_axis = warmup
sweep_values = 0, 50
)");
  CHECK(c.dataset == "cora");
  CHECK(c.data_dir == "/data");
  REQUIRE(c.models.size() == 2);
  CHECK(c.models[0] == ModelKind::GAE);
  CHECK(c.models[1] == ModelKind::GIC);
  CHECK(c.model_cfg.hidden == 16);
  CHECK(c.attack == AttackKind::ERB);
  CHECK(c.attack_cfg.poison_rate == 0.05);
  CHECK(c.attack_cfg.per_target);
  CHECK(c.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(c.sweep_axis == SweepAxis::Warmup);
  CHECK(c.sweep_values == std::vector<double>{0.0, 50.0});
  CHECK_NOTHROW(validate(c));
}

TEST_CASE("errors carry the source line") {
  CHECK(error_of("[attack]\nbogus = 1\n").starts_with("test.ini:2:"));
  CHECK(error_of("[attack]\nm = 2\nm = 3\n").find("duplicate") != std::string::npos);
  CHECK(error_of("m = 2\n").find("outside") != std::string::npos);
  CHECK(error_of("[attack]\nm = two\n").find("attack.m") != std::string::npos);
  CHECK(error_of("[attack]\nm = -1\n").find("attack.m") != std::string::npos);
  CHECK(error_of("[attack]\nper_target = maybe\n").find("true/false") != std::string::npos);
  CHECK(error_of("[attack]\nkind = gta\n").find("gta") != std::string::npos);
  CHECK(error_of("[model]\nkinds = gat\n").find("gat") != std::string::npos);
  CHECK(error_of("[attack\n").find("unterminated") != std::string::npos);
  CHECK(error_of("[attack]\nm\n").find("key = value") != std::string::npos);
}

TEST_CASE("apply_setting overrides one key") {
  ExperimentConfig c;
  apply_setting(c, "attack.q_a", "7");
  apply_setting(c, "pso.population", "10");
  apply_setting(c, "run.out", "elsewhere");
  CHECK(c.attack_cfg.q_a == 7);
  CHECK(c.pso.population == 10);
  CHECK(c.out == "elsewhere");
  CHECK_THROWS_AS(apply_setting(c, "attack.nope", "1"), std::invalid_argument);
}

TEST_CASE("validate rejects inconsistent settings") {
  ExperimentConfig c;
  CHECK_NOTHROW(validate(c));
  c.dataset = "cora";
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = {};
  c.erb_probability = 1.5;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = {};
  c.attack_cfg.poison_rate = 2.0;
  CHECK_THROWS(validate(c));
}

TEST_CASE("render and parse round trip") {
  ExperimentConfig c;
  c.dataset = "citeseer";
  c.data_dir = "/tmp/x";
  c.models = {ModelKind::VGAE, ModelKind::ARVGA};
  c.attack = AttackKind::PSO;
  c.attack_cfg.alpha = 0.75;
  c.attack_cfg.q_x = 3;
  c.model_cfg.lr = 0.005;
  c.pso.c2 = 1.25;
  c.seeds = {4, 9};
  c.transfer_targets = {ModelKind::GIC};
  c.sweep_values = {0.2};
  const std::string text = render_config(c);
  const ExperimentConfig back = parse(text);
  CHECK(render_config(back) == text);
  CHECK(config_pairs(back) == config_pairs(c));
  for (const auto& [k, v] : config_pairs(c)) CHECK(k != "run.out");
}

TEST_CASE("attack kind names") {
  for (auto k : {AttackKind::LinkBackdoor, AttackKind::ERB, AttackKind::Random, AttackKind::PSO, AttackKind::NoInjection})
    CHECK(parse_attack_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_attack_kind("p-backdoor2"), std::invalid_argument);
}
