#include "doctest.h"
#include "killchain/config.hpp"
#include "killchain/error.hpp"
#include "support/fixtures.hpp"

using namespace killchain;

TEST_CASE("defaults") {
  EngineConfig cfg = config_from_json(Json::object());
  CHECK(cfg == EngineConfig{});
  CHECK(cfg.alpha == 4.0);
  CHECK(cfg.prior_temperature == 5.0);
  CHECK(cfg.search.simulations == 2000);
  CHECK(cfg.search.c_puct == 1.5);
  CHECK(cfg.rollout.gamma < 1.0);
}

TEST_CASE("round trip") {
  EngineConfig cfg;
  cfg.reward_weights.stealth = 0.25;
  cfg.alpha = 2.0;
  cfg.rollout.num_rollouts = 7;
  cfg.search.simulations = 99;
  cfg.search.evaluator = EvaluatorKind::trained_pvn;
  cfg.search.leaf_value = LeafValue::reward_to_go;
  cfg.pvn.latent_dim = 16;
  cfg.pvn.policy_loss = PolicyLoss::cross_entropy;
  Json j = config_to_json(cfg);
  CHECK(config_from_json(j) == cfg);
  CHECK(config_from_json(parse_json(dump_json(j), "echo.json")) == cfg);
  CHECK(j["search"]["leaf_value"] == "reward-to-go");
}

TEST_CASE("partial documents keep the other defaults") {
  EngineConfig cfg = config_from_json(parse_json(R"({"search":{"simulations":10},"rollout":{"gamma":0.5}})", "c"));
  CHECK(cfg.search.simulations == 10);
  CHECK(cfg.search.c_puct == 1.5);
  CHECK(cfg.rollout.gamma == 0.5);
  CHECK(cfg.rollout.num_rollouts == RolloutConfig{}.num_rollouts);
}

TEST_CASE("rejections") {
  CHECK_THROWS_WITH_AS(config_from_json(Json{{"serch", Json::object()}}), doctest::Contains("serch"), ValidationError);
  CHECK_THROWS_WITH_AS(config_from_json(Json{{"search", {{"sims", 3}}}}), doctest::Contains("search.sims"),
                       ValidationError);
  CHECK_THROWS_AS(config_from_json(Json{{"alpha", "four"}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(Json{{"alpha", -1.0}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(Json{{"rollout", {{"gamma", 1.0}}}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(Json{{"search", {{"simulations", 0}}}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(Json{{"search", {{"evaluator", "oracle"}}}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(Json{{"pvn", {{"latent_dim", 6}, {"attention_heads", 4}}}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(Json::array()), ValidationError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), IoError);
}

TEST_CASE("fixture config") {
  EngineConfig cfg = load_config(killchain::testing::data_path("fin6_config.json"));
  CHECK(cfg.search.simulations == 2000);
  CHECK(cfg.search.rng_seed == 7);
  CHECK(cfg.rollout.num_rollouts == 32);
  CHECK(cfg.pvn.latent_dim == 8);
}
