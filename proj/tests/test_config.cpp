#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "sig/config.hpp"
#include "sig/errors.hpp"

using namespace sig;

TEST(Config, DefaultsBuildModelConfigs) {
  Config c;
  const auto g = generator_config(c, 14);
  EXPECT_EQ(g.d_h, 64);
  EXPECT_EQ(g.noise_dim, 64);
  EXPECT_DOUBLE_EQ(g.temperature, 0.1);
  const auto d = discriminator_config(c, 14, 40);
  EXPECT_EQ(d.kind, DiscKind::local);
  EXPECT_EQ(d.d_phi, 128);
  EXPECT_DOUBLE_EQ(d.lambda_inter, 1.0);
  const auto t = train_config(c);
  EXPECT_EQ(t.batch_size, 32);
  EXPECT_DOUBLE_EQ(t.adam_g.lr, 1e-4);
  EXPECT_DOUBLE_EQ(t.adam_d.lr, 4e-4);
  EXPECT_DOUBLE_EQ(t.adam_d.beta1, 0.5);
  const auto s = segment_config(c);
  EXPECT_DOUBLE_EQ(s.fps * s.seg_seconds, 60.0);
}

TEST(Config, ParseOverridesAndComments) {
  Config c;
  std::istringstream in("# comment\ntrain.epochs = 7  # trailing\n\n disc.chunks = [10, 5]\n");
  c.parse(in, "test.cfg");
  EXPECT_EQ(c.integer("train.epochs"), 7);
  EXPECT_EQ(c.int_list("disc.chunks"), (std::vector<int>{10, 5}));
  c.set("train.epochs=9");
  EXPECT_EQ(c.integer("train.epochs"), 9);
  EXPECT_TRUE(c.is_set("train.epochs"));
  EXPECT_FALSE(c.is_set("train.seed"));
}

TEST(Config, UnknownKeyNamesFileAndLine) {
  Config c;
  std::istringstream in("train.epochs = 3\ntrain.epoch = 4\n");
  try {
    c.parse(in, "bad.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("bad.cfg:2"), std::string::npos) << what;
    EXPECT_NE(what.find("train.epoch"), std::string::npos) << what;
  }
  EXPECT_THROW(c.set("nope", "1"), ConfigError);
  EXPECT_THROW(c.set("no_equals_sign"), ConfigError);
}

TEST(Config, BadValuesAreConfigErrors) {
  Config c;
  c.set("train.epochs", "ten");
  EXPECT_THROW(c.integer("train.epochs"), ConfigError);
  c.set("train.adversarial_on", "maybe");
  EXPECT_THROW(c.flag("train.adversarial_on"), ConfigError);
  c.set("train.seed", "-3");
  EXPECT_THROW(c.uint("train.seed"), ConfigError);
  Config d;
  d.set("disc.kind", "cnn");
  EXPECT_THROW(discriminator_config(d, 14, 40), ConfigError);
  Config e;
  e.set("train.adversarial_on", "false");
  EXPECT_THROW(train_config(e), ConfigError);
}

TEST(Config, InterSwitchForcesZeroLambda) {
  Config c;
  c.set("disc.inter_on", "false");
  EXPECT_EQ(discriminator_config(c, 14, 40).lambda_inter, 0.0);
}

TEST(Config, EnvironmentSeedFillsUnsetSeeds) {
  Config c;
  c.set("train.seed", "5");
  ::setenv("SIG_SEED", "99", 1);
  c.apply_env_seed();
  ::unsetenv("SIG_SEED");
  EXPECT_EQ(c.uint("train.seed"), 5u);
  EXPECT_EQ(c.uint("synth.seed"), 99u);
  EXPECT_EQ(c.uint("metrics.seed"), 99u);
}

TEST(Config, DumpListsEveryKey) {
  Config c;
  std::ostringstream out;
  c.dump(out);
  std::size_t lines = 0;
  for (char ch : out.str()) lines += ch == '\n';
  EXPECT_EQ(lines, c.values().size());
  EXPECT_NE(out.str().find("gen.temperature = 0.1\n"), std::string::npos);
}
