#include "sig/gradsuite.hpp"

#include <array>
#include <functional>
#include <random>

#include "sig/discriminator.hpp"
#include "sig/generator.hpp"
#include "sig/nn/layers.hpp"
#include "sig/seed.hpp"
#include "sig/training.hpp"

namespace sig {

namespace {

using nn::Graph;
using nn::Mat;
using nn::ParamStore;
using nn::Var;

struct Case {
  std::string name;
  std::function<void(ParamStore&, nn::Rng&)> setup;
  std::function<Var(Graph&, ParamStore&)> build;
};

/// Weighted sum of an op's output so that every entry gets a distinct
/// upstream gradient.
GradSuiteEntry run_case(const Case& c, std::uint64_t seed) {
  ParamStore store;
  nn::Rng rng(seed);
  c.setup(store, rng);
  Mat weights;
  auto loss = [&](bool backward) {
    Graph g;
    Var out = c.build(g, store);
    if (weights.size() == 0) {
      nn::Rng wr(mix64(seed));
      weights = nn::gaussian(g.value(out).rows(), g.value(out).cols(), wr);
    }
    Var l = nn::sum_all(g, nn::mul(g, out, g.constant(weights)));
    const double v = g.scalar(l);
    if (backward) g.backward(l);
    return v;
  };
  std::array<ParamStore*, 1> stores{&store};
  return {c.name, nn::grad_check(stores, loss, 1e-5, 400, seed)};
}

void add_random(ParamStore& s, const std::string& name, Eigen::Index r, Eigen::Index c, nn::Rng& rng) {
  s.add(name, nn::Tensor(nn::gaussian(r, c, rng)));
}

/// Random matrix whose rows are probability vectors.
Mat random_distributions(Eigen::Index r, Eigen::Index c, nn::Rng& rng) {
  Mat m = nn::gaussian(r, c, rng).array().exp().matrix();
  for (Eigen::Index i = 0; i < r; ++i) m.row(i) /= m.row(i).sum();
  return m;
}

std::vector<Case> primitive_cases() {
  auto ab = [](Eigen::Index r, Eigen::Index c) {
    return [r, c](ParamStore& s, nn::Rng& rng) {
      add_random(s, "a", r, c, rng);
      add_random(s, "b", r, c, rng);
    };
  };
  auto a_only = [](Eigen::Index r, Eigen::Index c) {
    return [r, c](ParamStore& s, nn::Rng& rng) { add_random(s, "a", r, c, rng); };
  };
  auto A = [](Graph& g, ParamStore& s) { return g.param(s, "a"); };
  auto B = [](Graph& g, ParamStore& s) { return g.param(s, "b"); };

  std::vector<Case> cs;
  cs.push_back({"add", ab(3, 4), [=](Graph& g, ParamStore& s) { return nn::add(g, A(g, s), B(g, s)); }});
  cs.push_back({"sub", ab(3, 4), [=](Graph& g, ParamStore& s) { return nn::sub(g, A(g, s), B(g, s)); }});
  cs.push_back({"mul", ab(3, 4), [=](Graph& g, ParamStore& s) { return nn::mul(g, A(g, s), B(g, s)); }});
  cs.push_back({"scale", a_only(3, 4), [=](Graph& g, ParamStore& s) { return nn::scale(g, A(g, s), -1.7); }});
  cs.push_back({"add_const", a_only(3, 4), [=](Graph& g, ParamStore& s) { return nn::add_const(g, A(g, s), 0.3); }});
  cs.push_back({"matmul",
                [](ParamStore& s, nn::Rng& rng) {
                  add_random(s, "a", 3, 4, rng);
                  add_random(s, "b", 4, 5, rng);
                },
                [=](Graph& g, ParamStore& s) { return nn::matmul(g, A(g, s), B(g, s)); }});
  cs.push_back({"linear",
                [](ParamStore& s, nn::Rng& rng) {
                  add_random(s, "x", 3, 4, rng);
                  add_random(s, "W", 5, 4, rng);
                  add_random(s, "b", 1, 5, rng);
                },
                [](Graph& g, ParamStore& s) {
                  return nn::linear(g, g.param(s, "x"), g.param(s, "W"), g.param(s, "b"));
                }});
  cs.push_back({"relu", a_only(4, 5), [=](Graph& g, ParamStore& s) { return nn::relu(g, A(g, s)); }});
  cs.push_back({"leaky_relu", a_only(4, 5), [=](Graph& g, ParamStore& s) { return nn::leaky_relu(g, A(g, s), 0.2); }});
  cs.push_back({"tanh", a_only(4, 5), [=](Graph& g, ParamStore& s) { return nn::tanh(g, A(g, s)); }});
  cs.push_back({"sigmoid", a_only(4, 5), [=](Graph& g, ParamStore& s) { return nn::sigmoid(g, A(g, s)); }});
  cs.push_back({"concat_cols", ab(3, 2), [=](Graph& g, ParamStore& s) {
                  const std::array<Var, 2> p{A(g, s), B(g, s)};
                  return nn::concat_cols(g, p);
                }});
  cs.push_back({"concat_rows", ab(3, 2), [=](Graph& g, ParamStore& s) {
                  const std::array<Var, 2> p{A(g, s), B(g, s)};
                  return nn::concat_rows(g, p);
                }});
  cs.push_back({"slice_cols", a_only(3, 6), [=](Graph& g, ParamStore& s) { return nn::slice_cols(g, A(g, s), 1, 3); }});
  cs.push_back({"slice_rows", a_only(6, 3), [=](Graph& g, ParamStore& s) { return nn::slice_rows(g, A(g, s), 2, 3); }});
  cs.push_back({"group_max", a_only(6, 4), [=](Graph& g, ParamStore& s) { return nn::group_max(g, A(g, s), 3); }});
  cs.push_back({"group_mean", a_only(6, 4), [=](Graph& g, ParamStore& s) { return nn::group_mean(g, A(g, s), 2); }});
  cs.push_back({"block_mean", a_only(6, 4), [=](Graph& g, ParamStore& s) { return nn::block_mean(g, A(g, s), 3); }});
  cs.push_back({"repeat_rows", a_only(2, 3), [=](Graph& g, ParamStore& s) { return nn::repeat_rows(g, A(g, s), 3); }});
  cs.push_back({"tile_rows", a_only(2, 3), [=](Graph& g, ParamStore& s) { return nn::tile_rows(g, A(g, s), 3); }});
  cs.push_back({"rowwise_dot", ab(4, 3), [=](Graph& g, ParamStore& s) { return nn::rowwise_dot(g, A(g, s), B(g, s)); }});
  cs.push_back({"mul_col",
                [](ParamStore& s, nn::Rng& rng) {
                  add_random(s, "a", 4, 3, rng);
                  add_random(s, "b", 4, 1, rng);
                },
                [=](Graph& g, ParamStore& s) { return nn::mul_col(g, A(g, s), B(g, s)); }});
  cs.push_back({"add_col",
                [](ParamStore& s, nn::Rng& rng) {
                  add_random(s, "a", 4, 3, rng);
                  add_random(s, "b", 4, 1, rng);
                },
                [=](Graph& g, ParamStore& s) { return nn::add_col(g, A(g, s), B(g, s)); }});
  cs.push_back({"row_sum", a_only(4, 3), [=](Graph& g, ParamStore& s) { return nn::row_sum(g, A(g, s)); }});
  cs.push_back({"sum_all", a_only(4, 3), [=](Graph& g, ParamStore& s) { return nn::sum_all(g, A(g, s)); }});
  cs.push_back({"mean_all", a_only(4, 3), [=](Graph& g, ParamStore& s) { return nn::mean_all(g, A(g, s)); }});
  cs.push_back({"squared_error_sum", a_only(4, 3), [=](Graph& g, ParamStore& s) {
                  nn::Rng r(11);
                  return nn::squared_error_sum(g, A(g, s), nn::gaussian(4, 3, r));
                }});
  cs.push_back({"softmax_temperature", a_only(4, 5), [=](Graph& g, ParamStore& s) {
                  return nn::softmax_temperature(g, A(g, s), 0.7);
                }});
  cs.push_back({"softmax_cross_entropy", a_only(4, 5), [=](Graph& g, ParamStore& s) {
                  nn::Rng r(12);
                  return nn::softmax_cross_entropy(g, A(g, s), random_distributions(4, 5, r));
                }});
  cs.push_back({"embed_ids", a_only(5, 3), [=](Graph& g, ParamStore& s) {
                  const std::array<int, 4> ids{4, 0, 4, 2};
                  return nn::embed_ids(g, A(g, s), ids);
                }});
  cs.push_back({"attenuation",
                [](ParamStore& s, nn::Rng&) { s.add("a", nn::Tensor::matrix(1, 1, 0.3)); },
                [=](Graph& g, ParamStore& s) {
                  Mat taus(4, 1);
                  taus << 1, 2, 5, 18;
                  return nn::attenuation(g, A(g, s), taus);
                }});
  cs.push_back({"spectral_normalize", a_only(5, 4), [=](Graph& g, ParamStore& s) {
                  nn::Rng r(13);
                  Mat u = nn::gaussian(1, 5, r);
                  u /= u.norm();
                  return nn::spectral_normalize(g, A(g, s), u);
                }});
  for (bool ln : {false, true}) {
    cs.push_back({ln ? "lstm_step_layernorm" : "lstm_step",
                  [ln](ParamStore& s, nn::Rng& rng) {
                    add_random(s, "x", 3, 4, rng);
                    add_random(s, "state", 3, 10, rng);
                    s.add("wx", nn::Tensor(nn::gaussian(20, 4, rng, 0.5)));
                    s.add("wh", nn::Tensor(nn::gaussian(20, 5, rng, 0.5)));
                    if (ln) {
                      s.add("gain", nn::Tensor(Mat::Constant(1, 20, 1.0) + nn::gaussian(1, 20, rng, 0.1)));
                      add_random(s, "shift", 1, 20, rng);
                    } else {
                      add_random(s, "bias", 1, 20, rng);
                    }
                  },
                  [ln](Graph& g, ParamStore& s) {
                    nn::LstmWeights w;
                    w.wx = g.param(s, "wx");
                    w.wh = g.param(s, "wh");
                    if (ln) {
                      w.ln_gain = g.param(s, "gain");
                      w.ln_bias = g.param(s, "shift");
                    } else {
                      w.bias = g.param(s, "bias");
                    }
                    return nn::lstm_step(g, g.param(s, "x"), g.param(s, "state"), w);
                  }});
  }
  for (bool train : {true, false}) {
    cs.push_back({train ? "batchnorm_train" : "batchnorm_eval",
                  [](ParamStore& s, nn::Rng& rng) {
                    add_random(s, "x", 6, 3, rng);
                    s.add("gamma", nn::Tensor(Mat::Constant(1, 3, 1.0) + nn::gaussian(1, 3, rng, 0.2)));
                    add_random(s, "beta", 1, 3, rng);
                    s.add_buffer("mean", nn::Tensor(nn::gaussian(1, 3, rng, 0.3)));
                    s.add_buffer("var", nn::Tensor(Mat::Constant(1, 3, 1.5)));
                  },
                  [train](Graph& g, ParamStore& s) {
                    // Fresh copies: train mode would otherwise drift the buffers between evaluations.
                    Mat mean = s.buffer("mean");
                    Mat var = s.buffer("var");
                    nn::BatchNormState st{&mean, &var, 0.9, 1e-5, train};
                    return nn::batchnorm(g, g.param(s, "x"), g.param(s, "gamma"), g.param(s, "beta"), st);
                  }});
  }
  return cs;
}

}  // namespace

std::vector<GradSuiteEntry> primitive_grad_suite(std::uint64_t seed) {
  std::vector<GradSuiteEntry> out;
  std::uint64_t k = 0;
  for (const auto& c : primitive_cases()) out.push_back(run_case(c, derive_seed(seed, {k++})));
  return out;
}

std::vector<GradSuiteEntry> loss_grad_suite(std::uint64_t seed) {
  constexpr int kActions = 5, kPersons = 2, kObs = 6, kHorizon = 8, kSamples = 3;
  GeneratorConfig gc;
  gc.num_actions = kActions;
  gc.d_h = gc.noise_dim = 6;
  gc.d_embed = 5;
  gc.deep_width = 8;
  DiscriminatorConfig dc;
  dc.num_actions = kActions;
  dc.horizon = kHorizon;
  dc.d_h = 6;
  dc.d_embed = 5;
  dc.d_phi = 7;
  dc.d_psi = 7;
  Generator gen(gc, derive_seed(seed, {1}));
  Discriminator disc(dc, derive_seed(seed, {2}));
  // Move the attenuation exponents off their initial value.
  for (const auto& n : disc.store().names()) {
    if (n.find("beta_raw") != std::string::npos) disc.store().value(n)(0, 0) = 0.4;
  }
  for (int i = 0; i < 3; ++i) {
    gen.power_iterate();
    disc.power_iterate();
  }

  nn::Rng rng(derive_seed(seed, {3}));
  std::uniform_int_distribution<int> tok(0, kActions - 1);
  TokenMat observed(kSamples * kPersons, kObs), target(kSamples * kPersons, kHorizon);
  for (Eigen::Index r = 0; r < observed.rows(); ++r) {
    for (Eigen::Index t = 0; t < kObs; ++t) observed(r, t) = tok(rng);
    for (Eigen::Index t = 0; t < kHorizon; ++t) target(r, t) = tok(rng);
  }
  const Mat noise = gen.draw_noise(observed.rows(), rng);
  const auto real_steps = one_hot_steps(target, kActions);

  auto d_objective = [&](bool backward) {
    Graph g;
    const auto fake = gen.generate(g, observed, kPersons, kHorizon, noise, true);
    const Conditioning c = disc.condition(g, observed);
    std::vector<Var> real;
    for (const auto& m : real_steps) real.push_back(g.constant(m));
    Var l = d_loss(g, disc.score(g, c, real, kPersons).total, disc.score(g, c, fake.relaxed, kPersons).total);
    const double v = g.scalar(l);
    if (backward) g.backward(l);
    return v;
  };
  auto g_objective = [&](bool backward) {
    Graph g;
    const auto fake = gen.generate(g, observed, kPersons, kHorizon, noise, true);
    const Conditioning c = disc.condition(g, observed);
    const Var scores = disc.score(g, c, fake.relaxed, kPersons).total;
    const auto l = g_loss(g, scores, fake.relaxed, target, kActions, 1e-3, true);
    const double v = g.scalar(l.total);
    if (backward) g.backward(l.total);
    return v;
  };

  std::array<nn::ParamStore*, 2> stores{&gen.store(), &disc.store()};
  std::vector<GradSuiteEntry> out;
  out.push_back({"loss_D", nn::grad_check(stores, d_objective, 1e-5, 1500, derive_seed(seed, {4}))});
  out.push_back({"loss_G", nn::grad_check(stores, g_objective, 1e-5, 1500, derive_seed(seed, {5}))});
  return out;
}

}  // namespace sig
