#include <gtest/gtest.h>

#include "laic/config.hpp"

using namespace laic;

TEST(Config, DefaultsWithOnlyK) {
  const auto cfg = parse_config({}, {{"k", "10"}});
  EXPECT_EQ(cfg.k, 10u);
  EXPECT_EQ(cfg.tau, 12.5);
  EXPECT_EQ(cfg.kappa, 0.006);
  EXPECT_EQ(cfg.beta, 5u);
  EXPECT_EQ(cfg.train.epochs, 30u);
  EXPECT_EQ(cfg.train.learning_rate, 1e-3);
  EXPECT_EQ(cfg.train.batch_size, 2048u);
  EXPECT_FALSE(cfg.c);
  EXPECT_EQ(cfg.score_kind, ScoreKind::gradnorm);
  EXPECT_EQ(cfg.train.loss, LossVariant::standard_ce);
}

TEST(Config, FlagsOverrideFile) {
  const auto file = parse_key_values("# comment\nbeta=5\nk = 4\n\nscore-kind=msp  # trailing\n");
  const auto cfg = parse_config(file, {{"beta", "7"}});
  EXPECT_EQ(cfg.beta, 7u);
  EXPECT_EQ(cfg.k, 4u);
  EXPECT_EQ(cfg.score_kind, ScoreKind::msp);
}

TEST(Config, BetaZeroMessage) {
  try {
    parse_config({}, {{"k", "10"}, {"beta", "0"}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("β ≥ 1"), std::string::npos) << e.what();
  }
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config({}, {{"k", "10"}, {"gamma", "1"}}), ConfigError);
  EXPECT_THROW(parse_config({}, {{"k", "10"}, {"tau", "fast"}}), ConfigError);
  EXPECT_THROW(parse_config({}, {{"k", "ten"}}), ConfigError);
  EXPECT_THROW(parse_config({}, {{"k", "10"}, {"loss", "hinge"}}), ConfigError);
  try {
    parse_config({}, {{"beta", "3"}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("missing required --k"), std::string::npos);
  }
}

TEST(Config, AutoAndExplicitC) {
  EXPECT_FALSE(parse_config({{"c", "auto"}, {"k", "3"}}).c);
  EXPECT_EQ(*parse_config({{"c", "17"}, {"k", "3"}}).c, 17u);
}

TEST(Config, KeyValueRoundTrip) {
  const auto cfg = parse_config({}, {{"k", "6"}, {"c", "40"}, {"tau", "7.25"}, {"kappa", "0.01"}, {"loss", "secu"},
                                     {"seed", "99"}, {"renormalize", "true"}, {"lr", "0.0003"}});
  const auto again = parse_config(to_key_values(cfg));
  EXPECT_EQ(to_key_values(again), to_key_values(cfg));
  EXPECT_EQ(again.tau, 7.25);
  EXPECT_EQ(again.train.learning_rate, 0.0003);
  EXPECT_TRUE(again.renormalize_counterparts);
  EXPECT_EQ(again.train.loss, LossVariant::secu);
}
