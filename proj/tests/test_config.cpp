#include <gtest/gtest.h>

#include "hstn/config.hpp"

using namespace hstn;

TEST(RunConfig, DefaultsAreTyped) {
  RunConfig c;
  EXPECT_EQ(c.integer("seed"), 1);
  EXPECT_DOUBLE_EQ(c.real("lr"), 1e-4);
  EXPECT_DOUBLE_EQ(c.real("lambda"), 0.1);
  EXPECT_EQ(c.integer("levels"), 3);
  EXPECT_EQ(c.str("method"), "direct");
  EXPECT_EQ(c.type("alpha"), ValueType::real);
}

TEST(RunConfig, LoadsTextWithComments) {
  RunConfig c;
  c.load_text("# run\nseed = 42   # trailing\n\n  model=cnn\nlr = 0.001\n");
  EXPECT_EQ(c.u64("seed"), 42u);
  EXPECT_EQ(c.str("model"), "cnn");
  EXPECT_DOUBLE_EQ(c.real("lr"), 1e-3);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig c;
  EXPECT_THROW(c.load_text("learning_rate = 1"), ConfigError);
  EXPECT_THROW(c.load_text("seed = 1.5"), ConfigError);
  EXPECT_THROW(c.load_text("lr = fast"), ConfigError);
  EXPECT_THROW(c.load_text("lr = inf"), ConfigError);
  EXPECT_THROW(c.load_text("seed"), ConfigError);
  EXPECT_THROW(c.set("epochs", ""), ConfigError);
}

TEST(RunConfig, ErrorNamesTheLine) {
  RunConfig c;
  try {
    c.load_text("seed = 1\nbogus = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(RunConfig, TextRoundTripIsStable) {
  RunConfig a;
  a.set("seed", "7");
  a.set("out", "runs/x");
  RunConfig b;
  b.load_text(a.to_text());
  EXPECT_EQ(b.to_text(), a.to_text());
  EXPECT_EQ(b.str("out"), "runs/x");
}

TEST(RunConfig, ParsesNumberLists) {
  RunConfig c;
  EXPECT_EQ(c.reals("affine_blur"), (std::vector<double>{4, 0}));
  c.set("affine_blur", " 2.5, 1 ,0");
  EXPECT_EQ(c.reals("affine_blur"), (std::vector<double>{2.5, 1, 0}));
  c.set("affine_blur", "2,,0");
  EXPECT_THROW(c.reals("affine_blur"), ConfigError);
}
