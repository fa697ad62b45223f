#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sig/errors.hpp"
#include "sig/gradsuite.hpp"
#include "sig/nn/checkpoint.hpp"
#include "sig/nn/grad_check.hpp"
#include "sig/nn/graph.hpp"
#include "sig/nn/layers.hpp"
#include "sig/nn/optim.hpp"

using namespace sig;
using namespace sig::nn;

namespace {

Mat row(std::initializer_list<double> xs) {
  Mat m(1, static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) m(0, i++) = x;
  return m;
}

double top_singular_value(const Mat& w) {
  const Eigen::MatrixXd wtw = w.transpose() * w;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(wtw);
  return std::sqrt(es.eigenvalues().maxCoeff());
}

}  // namespace

TEST(Primitives, EveryPrimitivePassesCentralDifferences) {
  const auto suite = primitive_grad_suite(11);
  ASSERT_GE(suite.size(), 30u);
  for (const auto& e : suite) {
    EXPECT_LT(e.report.max_rel_error, 1e-5) << e.name;
    EXPECT_GT(e.report.coords_checked, 0u) << e.name;
  }
}

TEST(Primitives, SoftmaxTemperatureClosedForms) {
  Graph g;
  const Var logits = g.constant(row({0.0, std::log(9.0)}));
  const Mat p1 = g.value(softmax_temperature(g, logits, 1.0));
  EXPECT_NEAR(p1(0, 0), 0.1, 1e-15);
  EXPECT_NEAR(p1(0, 1), 0.9, 1e-15);
  const Mat p2 = g.value(softmax_temperature(g, logits, 0.5));
  EXPECT_NEAR(p2(0, 0), 1.0 / 82.0, 1e-15);
  EXPECT_NEAR(p2(0, 1), 81.0 / 82.0, 1e-15);
  EXPECT_THROW(softmax_temperature(g, logits, 0.0), RangeError);
  EXPECT_THROW(softmax_temperature(g, logits, -1.0), RangeError);
}

TEST(Primitives, ShapeMismatchThrows) {
  Graph g;
  const Var a = g.constant(Mat::Ones(2, 3));
  const Var b = g.constant(Mat::Ones(3, 2));
  EXPECT_THROW(add(g, a, b), ShapeError);
  EXPECT_THROW(matmul(g, a, a), ShapeError);
}

TEST(Lstm, ZeroWeightsZeroStateGiveZeroHidden) {
  Graph g;
  const Eigen::Index d = 4;
  LstmWeights w;
  w.wx = g.constant(Mat::Zero(4 * d, 3));
  w.wh = g.constant(Mat::Zero(4 * d, d));
  w.bias = g.constant(Mat::Zero(1, 4 * d));
  const Var x = g.constant(Mat::Random(2, 3));
  const Var s = g.constant(Mat::Zero(2, 2 * d));
  const Mat out = g.value(lstm_step(g, x, s, w));
  EXPECT_EQ(out.leftCols(d).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Lstm, LayerNormGateStatistics) {
  Rng rng(3);
  const Mat pre = gaussian(7, 4 * 9, rng, 3.0).array() + 2.5;
  const Mat n = normalize_blocks(pre, 4);
  for (Eigen::Index r = 0; r < n.rows(); ++r) {
    for (Eigen::Index b = 0; b < 4; ++b) {
      const auto seg = n.row(r).segment(b * 9, 9);
      const double mean = seg.mean();
      const double var = (seg.array() - mean).square().mean();
      EXPECT_NEAR(mean, 0.0, 1e-9);
      EXPECT_NEAR(var, 1.0, 1e-9);
    }
  }
}

TEST(Lstm, GatesStayInUnitInterval) {
  ParamStore store;
  Rng rng(5);
  LstmCell cell(store, "c", 3, 6, true, rng);
  Graph g;
  const Var x = g.constant(gaussian(4, 3, rng, 10.0));
  const Var s = cell.step(g, store, x, cell.zero_state(g, 4));
  const Mat out = g.value(s);
  EXPECT_LE(out.leftCols(6).cwiseAbs().maxCoeff(), 1.0);
  EXPECT_TRUE(out.allFinite());
}

TEST(BatchNorm, EvalModeIsDeterministicAffine) {
  ParamStore store;
  BatchNorm bn(store, "bn", 3);
  Rng rng(2);
  // Move the running statistics away from their initial values.
  for (int i = 0; i < 3; ++i) {
    Graph g;
    bn.forward(g, store, g.constant(gaussian(8, 3, rng, 2.0)), true);
  }
  const Mat x = gaussian(5, 3, rng);
  Graph g1, g2;
  const Mat a = g1.value(bn.forward(g1, store, g1.constant(x), false));
  const Mat b = g2.value(bn.forward(g2, store, g2.constant(x), false));
  EXPECT_EQ(a, b);
  // Affine: f(2x) - f(x) == f(x) - f(0)
  Graph g3;
  const Mat x2 = 2.0 * x;
  const Mat z = Mat::Zero(5, 3);
  const Mat f2 = g3.value(bn.forward(g3, store, g3.constant(x2), false));
  const Mat f0 = g3.value(bn.forward(g3, store, g3.constant(z), false));
  EXPECT_LT(((f2 - a) - (a - f0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SpectralNorm, DiagonalConvergesToUnitTopSingularValue) {
  ParamStore store;
  Rng rng(1);
  SpectralLinear layer(store, "l", 2, 2, false, true, rng);
  store.value("l.W") << 3.0, 0.0, 0.0, 1.0;
  for (int i = 0; i < 50; ++i) layer.power_iterate(store);
  const Mat w = layer.applied_weight(store);
  EXPECT_NEAR(w(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(w(1, 1), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(w(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(w(1, 0), 0.0, 1e-12);
}

TEST(SpectralNorm, OrthogonalWeightIsUnchanged) {
  ParamStore store;
  Rng rng(4);
  SpectralLinear layer(store, "l", 6, 6, false, true, rng);
  const Mat q = random_orthogonal(6, rng);
  store.value("l.W") = q;
  layer.power_iterate(store);
  EXPECT_LT((layer.applied_weight(store) - q).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SpectralNorm, RandomMatrixAgainstEigenOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParamStore store;
    Rng rng(100 + seed);
    SpectralLinear layer(store, "l", 8, 8, false, true, rng);
    store.value("l.W") = gaussian(8, 8, rng);
    for (int i = 0; i < 20; ++i) layer.power_iterate(store);
    EXPECT_LT(std::abs(top_singular_value(layer.applied_weight(store)) - 1.0), 1e-3) << "seed " << seed;
  }
}

TEST(SpectralNorm, ZeroMatrixPassesThrough) {
  ParamStore store;
  Rng rng(4);
  SpectralLinear layer(store, "l", 3, 2, false, true, rng);
  store.value("l.W").setZero();
  layer.power_iterate(store);
  EXPECT_EQ(layer.applied_weight(store).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  ParamStore store;
  store.add("w", Tensor(row({1.0, -2.0, 3.0})));
  const Mat before = store.value("w");
  adam_step(store, AdamConfig{});
  EXPECT_EQ(store.value("w"), before);
  EXPECT_EQ(store.step_count(), 1u);
}

TEST(Adam, FirstStepClosedForm) {
  ParamStore store;
  store.add("w", Tensor(row({0.0})));
  store.grad("w")(0, 0) = 1.0;
  const AdamConfig cfg{0.1, 0.0, 0.0, 1e-8};
  adam_step(store, cfg);
  EXPECT_DOUBLE_EQ(store.value("w")(0, 0), -0.1 * (1.0 / (1.0 + 1e-8)));
  EXPECT_EQ(store.grad("w")(0, 0), 0.0);
}

TEST(Adam, DescendsQuadratic) {
  ParamStore store;
  store.add("x", Tensor(row({1.0})));
  double prev = 1.0;
  for (int i = 0; i < 2; ++i) {
    store.grad("x")(0, 0) = store.value("x")(0, 0);  // d/dx ½x²
    adam_step(store, AdamConfig{0.1, 0.5, 0.999, 1e-8});
    const double now = std::abs(store.value("x")(0, 0));
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(Adam, NonFiniteGradientRejectedBeforeUpdate) {
  ParamStore store;
  store.add("a", Tensor(row({1.0})));
  store.add("b", Tensor(row({2.0})));
  store.grad("a")(0, 0) = 1.0;
  store.grad("b")(0, 0) = std::nan("");
  EXPECT_THROW(adam_step(store, AdamConfig{}), GradError);
  EXPECT_EQ(store.value("a")(0, 0), 1.0);
  EXPECT_EQ(store.step_count(), 0u);
}

TEST(GradCheck, QuadraticIsExact) {
  ParamStore store;
  Rng rng(9);
  store.add("W", Tensor(gaussian(4, 5, rng)));
  const Mat x = gaussian(5, 1, rng);
  std::array<ParamStore*, 1> stores{&store};
  const auto report = grad_check(stores, [&](bool backward) {
    Graph g;
    const Var wx = matmul(g, g.param(store, "W"), g.constant(x));
    const Var loss = scale(g, sum_all(g, mul(g, wx, wx)), 0.5);
    if (backward) g.backward(loss);
    return g.scalar(loss);
  });
  EXPECT_LT(report.max_rel_error, 1e-7);
  EXPECT_EQ(report.coords_checked, 20u);
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
  ParamStore store;
  store.add("W", Tensor(Mat::Ones(3, 3)));
  std::array<ParamStore*, 1> stores{&store};
  const auto report = grad_check(stores, [&](bool) { return 4.0; });
  EXPECT_EQ(report.max_rel_error, 0.0);
  EXPECT_EQ(report.worst_analytic, 0.0);
  EXPECT_EQ(report.worst_numeric, 0.0);
}

TEST(GradCheck, NonFiniteLossThrows) {
  ParamStore store;
  store.add("W", Tensor(Mat::Ones(1, 1)));
  std::array<ParamStore*, 1> stores{&store};
  EXPECT_THROW(grad_check(stores, [&](bool) { return std::nan(""); }), GradError);
}

TEST(ParamStore, SortedNamesAndFrozenLeaves) {
  ParamStore store;
  store.add("b", Tensor(Mat::Ones(1, 2)));
  store.add("a", Tensor(Mat::Ones(1, 2)));
  EXPECT_EQ(store.names(), (std::vector<std::string>{"a", "b"}));
  store.set_frozen(true);
  Graph g;
  const Var a = g.param(store, "a");
  EXPECT_FALSE(g.requires_grad(a));
  g.backward(sum_all(g, a));
  EXPECT_EQ(store.grad("a").cwiseAbs().maxCoeff(), 0.0);
}

TEST(Checkpoint, RoundTripIsExact) {
  ParamStore store;
  Rng rng(8);
  store.add("layer.W", Tensor(gaussian(3, 4, rng)));
  store.add("layer.b", Tensor(gaussian(1, 4, rng), 1));
  store.add_buffer("layer.u", Tensor(gaussian(1, 3, rng), 1));
  store.moments("layer.W").m = gaussian(3, 4, rng);
  store.moments("layer.W").v = gaussian(3, 4, rng).cwiseAbs();
  store.set_step_count(17);

  Checkpoint ck;
  export_store(store, "m/", ck);
  const auto path = std::filesystem::temp_directory_path() / "sig_test_ckpt.sigg";
  write_checkpoint(path, ck);
  const Checkpoint back = read_checkpoint(path);
  EXPECT_EQ(back.kind, CheckpointKind::gan);

  ParamStore fresh;
  fresh.add("layer.W", Tensor(Mat::Zero(3, 4)));
  fresh.add("layer.b", Tensor(Mat::Zero(1, 4), 1));
  fresh.add_buffer("layer.u", Tensor(Mat::Zero(1, 3), 1));
  import_store(fresh, "m/", back);
  EXPECT_EQ(fresh.value("layer.W"), store.value("layer.W"));
  EXPECT_EQ(fresh.value("layer.b"), store.value("layer.b"));
  EXPECT_EQ(fresh.buffer("layer.u"), store.buffer("layer.u"));
  EXPECT_EQ(fresh.moments("layer.W").m, store.moments("layer.W").m);
  EXPECT_EQ(fresh.moments("layer.W").v, store.moments("layer.W").v);
  EXPECT_EQ(fresh.step_count(), 17u);
  std::filesystem::remove(path);
}

TEST(Checkpoint, ShapeMismatchOnImportThrows) {
  ParamStore store;
  store.add("w", Tensor(Mat::Ones(2, 2)));
  Checkpoint ck;
  export_store(store, "", ck);
  ParamStore other;
  other.add("w", Tensor(Mat::Ones(2, 3)));
  EXPECT_THROW(import_store(other, "", ck), Error);
}

TEST(Checkpoint, RejectsForeignFile) {
  const auto path = std::filesystem::temp_directory_path() / "sig_test_bad.sigg";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE and some bytes";
  }
  EXPECT_THROW(read_checkpoint(path), Error);
  std::filesystem::remove(path);
}
