#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sig/errors.hpp"
#include "sig/nn/optim.hpp"
#include "sig/synthdata.hpp"
#include "sig/training.hpp"

using namespace sig;

namespace {

GeneratorConfig gen_config() {
  GeneratorConfig c;
  c.num_actions = 5;
  c.d_h = c.noise_dim = 6;
  c.d_embed = 4;
  c.deep_width = 8;
  return c;
}

DiscriminatorConfig disc_config() {
  DiscriminatorConfig c;
  c.num_actions = 5;
  c.horizon = 8;
  c.d_h = 6;
  c.d_embed = 4;
  c.d_phi = c.d_psi = 6;
  return c;
}

std::vector<actions::Interaction> toy_data(int n, int persons = 2) {
  synth::SynthConfig s;
  s.actions = 5;
  s.persons = persons;
  s.seed = 3;
  return synth::simulate(s, n, 5, 8);
}

Mat scalar(double v) { return Mat::Constant(1, 1, v); }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sig_test_" + name);
}

}  // namespace

TEST(Losses, HingeExamples) {
  auto hinge = [](double real, double fake) {
    Graph g;
    return g.scalar(d_loss(g, g.constant(scalar(real)), g.constant(scalar(fake))));
  };
  EXPECT_DOUBLE_EQ(hinge(0.5, -0.2), 1.3);
  EXPECT_EQ(hinge(1.0, -1.0), 0.0);
  EXPECT_EQ(hinge(3.0, -7.0), 0.0);
  EXPECT_EQ(hinge(0.0, 0.0), 2.0);
}

TEST(Losses, HingeIsBatchMean) {
  Graph g;
  Mat r(2, 1), f(2, 1);
  r << 0.5, 2.0;
  f << -0.2, 0.0;
  EXPECT_DOUBLE_EQ(g.scalar(d_loss(g, g.constant(r), g.constant(f))), (1.3 + 1.0) / 2.0);
}

TEST(Losses, SupervisionUniformVersusOneHot) {
  const int A = 14;
  TokenMat y(3, 4);
  y << 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 13;
  Graph g;
  std::vector<Var> relaxed;
  for (int t = 0; t < 4; ++t) relaxed.push_back(g.constant(Mat::Constant(3, A, 1.0 / A)));
  const double v = g.scalar(supervision_loss(g, relaxed, y, A));
  EXPECT_NEAR(v, 13.0 / 196.0, 1e-15);
  // brute force
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int t = 0; t < 4; ++t) {
      for (int a = 0; a < A; ++a) s += std::pow(1.0 / A - (y(i, t) == a ? 1.0 : 0.0), 2);
    }
  }
  EXPECT_NEAR(v, s / (3 * 4 * A), 1e-15);
}

TEST(Losses, SupervisionZeroAtTarget) {
  TokenMat y(2, 3);
  y << 0, 1, 2, 2, 1, 0;
  Graph g;
  std::vector<Var> relaxed;
  for (const Mat& m : one_hot_steps(y, 3)) relaxed.push_back(g.constant(m));
  EXPECT_EQ(g.scalar(supervision_loss(g, relaxed, y, 3)), 0.0);
  relaxed.pop_back();
  EXPECT_THROW(supervision_loss(g, relaxed, y, 3), ShapeError);
}

TEST(Losses, GeneratorLossWithoutSupervision) {
  TokenMat y(2, 1);
  y << 0, 1;
  Graph g;
  Mat f(2, 1);
  f << 0.4, -1.0;
  std::vector<Var> relaxed{g.constant(Mat::Constant(2, 2, 0.5))};
  const auto l = g_loss(g, g.constant(f), relaxed, y, 2, 0.0, true);
  EXPECT_DOUBLE_EQ(g.scalar(l.total), 0.3);
  EXPECT_DOUBLE_EQ(g.scalar(l.supervision), 0.25);
  const auto l2 = g_loss(g, g.constant(f), relaxed, y, 2, 1e-3, true);
  EXPECT_DOUBLE_EQ(g.scalar(l2.total), 0.3 + 1e-3 * 0.25);
}

TEST(TrainConfig, NeedsAnActiveLoss) {
  TrainConfig c;
  c.adversarial_on = false;
  EXPECT_THROW(c.validate(), ConfigError);
  c.lambda_sup = 1e-3;
  EXPECT_NO_THROW(c.validate());
  c.lambda_sup = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Trainer, GeneratorUpdateLeavesDiscriminatorUntouched) {
  Trainer t(gen_config(), disc_config(), TrainConfig{}, toy_data(4));
  const Batch batch = make_batch(t.data());
  auto& gen = t.generator();
  auto& disc = t.discriminator();

  const double disc_before = disc.store().checksum();
  const double gen_before = gen.store().checksum();
  {
    disc.store().set_frozen(true);
    Graph g;
    nn::Rng rng(1);
    const auto fake = gen.generate(g, batch.observed, batch.persons, batch.horizon, gen.draw_noise(batch.rows(), rng), true);
    const auto cond = disc.condition(g, batch.observed);
    const auto l = g_loss(g, disc.score(g, cond, fake.relaxed, batch.persons).total, fake.relaxed, batch.target, 5,
                          0.0, true);
    g.backward(l.total);
    for (const auto& n : disc.store().names()) EXPECT_EQ(disc.store().grad(n).cwiseAbs().maxCoeff(), 0.0) << n;
    nn::adam_step(gen.store(), nn::AdamConfig{});
    disc.store().set_frozen(false);
  }
  EXPECT_EQ(disc.store().checksum(), disc_before);
  EXPECT_NE(gen.store().checksum(), gen_before);

  const double gen_mid = gen.store().checksum();
  {
    gen.store().set_frozen(true);
    Graph g;
    nn::Rng rng(2);
    const auto fake = gen.generate(g, batch.observed, batch.persons, batch.horizon, gen.draw_noise(batch.rows(), rng), true);
    const auto cond = disc.condition(g, batch.observed);
    std::vector<Var> real;
    for (const auto& m : one_hot_steps(batch.target, 5)) real.push_back(g.constant(m));
    const Var loss = d_loss(g, disc.score(g, cond, real, batch.persons).total,
                            disc.score(g, cond, fake.relaxed, batch.persons).total);
    g.backward(loss);
    for (const auto& n : gen.store().names()) EXPECT_EQ(gen.store().grad(n).cwiseAbs().maxCoeff(), 0.0) << n;
    nn::adam_step(disc.store(), nn::AdamConfig{});
    gen.store().set_frozen(false);
  }
  EXPECT_EQ(gen.store().checksum(), gen_mid);
  EXPECT_NE(disc.store().checksum(), disc_before);
}

TEST(Trainer, NoGanLeavesDiscriminatorUntouchedAndFitsTargets) {
  TrainConfig cfg;
  cfg.adversarial_on = false;
  cfg.lambda_sup = 1.0;
  cfg.adam_g.lr = 1e-3;
  cfg.adam_g.beta1 = 0.9;
  auto gc = gen_config();
  gc.d_h = gc.noise_dim = 32;
  gc.deep_width = 64;
  Trainer t(gc, disc_config(), cfg, toy_data(4));
  const double disc_before = t.discriminator().store().checksum();
  const Batch batch = make_batch(t.data());
  // Fresh noise every step makes single steps jitter, so the loss is judged
  // on means of consecutive 40-step blocks.
  std::vector<double> blocks(5, 0.0);
  for (int i = 0; i < 200; ++i) {
    const auto st = t.train_step(batch);
    EXPECT_GE(st.g_sup, 0.0);
    blocks[static_cast<std::size_t>(i / 40)] += st.g_sup / 40.0;
  }
  for (std::size_t b = 1; b < blocks.size(); ++b) {
    EXPECT_LE(blocks[b], blocks[b - 1]) << "block " << b;
  }
  EXPECT_LT(blocks.back(), blocks.front());
  EXPECT_EQ(t.discriminator().store().checksum(), disc_before);
}

TEST(Trainer, DiscriminatorLossIsNonNegative) {
  Trainer t(gen_config(), disc_config(), TrainConfig{}, toy_data(6));
  const Batch batch = make_batch(t.data());
  for (int i = 0; i < 5; ++i) EXPECT_GE(t.train_step(batch).d_loss, 0.0);
}

TEST(Trainer, MixedPersonCountsAreBucketed) {
  auto data = toy_data(5, 2);
  const auto three = toy_data(4, 3);
  data.insert(data.end(), three.begin(), three.end());
  TrainConfig cfg;
  cfg.batch_size = 3;
  Trainer t(gen_config(), disc_config(), cfg, data);
  EXPECT_NO_THROW(t.run_epoch());
  EXPECT_EQ(t.step(), 4u);  // ceil(5/3) + ceil(4/3)
}

TEST(Trainer, RejectsHorizonMismatch) {
  auto c = disc_config();
  c.horizon = 9;
  EXPECT_THROW(Trainer(gen_config(), c, TrainConfig{}, toy_data(2)), ValidationError);
}

TEST(Trainer, SameSeedGivesIdenticalMetricsCsv) {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.eval_interval = 1;
  cfg.batch_size = 4;
  std::array<std::string, 2> files;
  for (int run = 0; run < 2; ++run) {
    const auto path = temp_path("metrics_" + std::to_string(run) + ".csv");
    std::filesystem::remove(path);
    MetricsCsv csv(path);
    Trainer t(gen_config(), disc_config(), cfg, toy_data(10));
    t.train([&](const MetricsRow& r) { csv.append(r); });
    files[static_cast<std::size_t>(run)] = slurp(path);
    std::filesystem::remove(path);
  }
  EXPECT_EQ(files[0], files[1]);
  EXPECT_EQ(files[0].rfind(std::string(MetricsCsv::kVersionLine) + "\n" + MetricsCsv::kHeader + "\n", 0), 0u);
  EXPECT_NE(files[0].find("\n3,"), std::string::npos);
  EXPECT_NE(files[0].find(",nan,"), std::string::npos);  // no inception model: SFID column is NaN
}

TEST(MetricsCsv, RoundTripAndHeaderCheck) {
  const auto path = temp_path("csv_rt.csv");
  std::filesystem::remove(path);
  {
    MetricsCsv csv(path);
    csv.append(MetricsRow{5, 1.25, 0.5, std::exp(0.75), 3.0, 1.5, -0.25, 0.0625});
  }
  {
    MetricsCsv again(path);  // appending to a compatible file is fine
    again.append(MetricsRow{10, 1.0, 0.5, std::exp(0.5), std::nan(""), 1.0, 0.0, 0.0});
  }
  const auto rows = MetricsCsv::read(path);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].epoch, 5);
  EXPECT_EQ(rows[0].is, std::exp(0.75));
  EXPECT_TRUE(std::isnan(rows[1].sfid));
  {
    std::ofstream out(path);
    out << "epoch,other\n";
  }
  EXPECT_THROW(MetricsCsv{path}, InputError);
  std::filesystem::remove(path);
}

TEST(Trainer, CheckpointResumesBitIdentically) {
  TrainConfig cfg;
  cfg.batch_size = 4;
  const auto data = toy_data(8);
  const auto path = temp_path("resume.sigg");

  Trainer a(gen_config(), disc_config(), cfg, data);
  a.run_epoch();
  a.save(path);
  std::vector<StepStats> ref;
  for (int i = 0; i < 10; ++i) ref.push_back(a.train_step(make_batch(data)));

  Trainer b(gen_config(), disc_config(), cfg, data);
  b.load(path);
  EXPECT_EQ(b.step(), 2u);
  EXPECT_EQ(b.epoch(), 1);
  for (int i = 0; i < 10; ++i) {
    const auto s = b.train_step(make_batch(data));
    EXPECT_EQ(s.d_loss, ref[static_cast<std::size_t>(i)].d_loss) << i;
    EXPECT_EQ(s.g_adv, ref[static_cast<std::size_t>(i)].g_adv) << i;
    EXPECT_EQ(s.g_sup, ref[static_cast<std::size_t>(i)].g_sup) << i;
  }
  EXPECT_EQ(a.generator().store().checksum(), b.generator().store().checksum());
  EXPECT_EQ(a.discriminator().store().checksum(), b.discriminator().store().checksum());

  auto other = disc_config();
  other.d_h = 7;
  Trainer c(gen_config(), other, cfg, data);
  EXPECT_THROW(c.load(path), Error);
  std::filesystem::remove(path);
}

TEST(Generation, ContinuationsAreSeeded) {
  Trainer t(gen_config(), disc_config(), TrainConfig{}, toy_data(5));
  const auto a = generate_continuations(t.generator(), t.data(), 3);
  const auto b = generate_continuations(t.generator(), t.data(), 3);
  ASSERT_EQ(a.target.size(), 10u);
  EXPECT_EQ(a.target, b.target);
  EXPECT_EQ(a.full[0].size(), 13u);
  const auto real = real_sequences(t.data());
  EXPECT_EQ(real.target.size(), 10u);
  EXPECT_EQ(std::vector<int>(real.full[0].begin(), real.full[0].begin() + 5),
            std::vector<int>(a.full[0].begin(), a.full[0].begin() + 5));
}
