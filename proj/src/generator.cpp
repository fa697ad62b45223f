#include "sig/generator.hpp"

#include <array>

#include "sig/errors.hpp"

namespace sig {

void GeneratorConfig::validate() const {
  if (num_actions < 2) throw ConfigError("gen: need at least two actions");
  if (d_h < 1 || d_embed < 1 || deep_width < 1) throw ConfigError("gen: dimensions must be positive");
  if (noise_dim != d_h) throw ConfigError("gen.noise_dim must equal gen.d_h (noise is added to the code)");
  if (!(temperature > 0.0)) throw ConfigError("gen.temperature must be positive");
}

Mat max_pool(const Mat& vectors, Eigen::Index group) {
  Graph g;
  return g.value(nn::group_max(g, g.constant(vectors), group));
}

Generator::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  nn::Rng rng(seed);
  const Eigen::Index a = cfg_.num_actions;
  const Eigen::Index h = cfg_.d_h;
  embed_ = nn::Embedding(store_, "gen.embed", a, cfg_.d_embed, rng);
  encoder_ = nn::LstmCell(store_, "gen.encoder", cfg_.d_embed, h, cfg_.layer_norm, rng);
  decoder_ = nn::LstmCell(store_, "gen.decoder", cfg_.d_embed + h, h, cfg_.layer_norm, rng);
  // No bias ahead of batchnorm: the mean subtraction would cancel it.
  out1_ = nn::SpectralLinear(store_, "gen.out1", h + a + h, cfg_.deep_width, false, cfg_.spectral, rng);
  out_bn_ = nn::BatchNorm(store_, "gen.out_bn", cfg_.deep_width);
  out2_ = nn::SpectralLinear(store_, "gen.out2", cfg_.deep_width, a, true, cfg_.spectral, rng);
}

Var Generator::encode(Graph& g, const TokenMat& observed) {
  if (observed.cols() == 0) throw InputError("generator: observed sequence is empty");
  Var state = encoder_.zero_state(g, observed.rows());
  for (Eigen::Index t = 0; t < observed.cols(); ++t) {
    const auto ids = token_column(observed, t);
    state = encoder_.step(g, store_, embed_.lookup(g, store_, ids), state);
  }
  return encoder_.hidden(g, state);
}

Generator::Output Generator::generate(Graph& g, const TokenMat& observed, int persons, int horizon,
                                      const Mat& noise, bool train, nn::Rng* sampler) {
  if (horizon < 1) throw InputError("generator: horizon must be at least 1");
  if (persons < 1 || observed.rows() % persons != 0) throw InputError("generator: rows not divisible by persons");
  const Eigen::Index rows = observed.rows();
  if (noise.rows() != rows || noise.cols() != cfg_.noise_dim) throw ShapeError("generator: noise shape");
  const Eigen::Index a = cfg_.num_actions;

  Var code = encode(g, observed);
  Var h0 = nn::add(g, code, g.constant(noise));
  std::array<Var, 2> init{h0, g.constant(Mat::Zero(rows, cfg_.d_h))};
  Var state = nn::concat_cols(g, init);

  Mat first = Mat::Zero(rows, a);
  for (Eigen::Index r = 0; r < rows; ++r) first(r, observed(r, observed.cols() - 1)) = 1.0;
  Var prev = g.constant(std::move(first));

  Output out;
  out.relaxed.reserve(static_cast<std::size_t>(horizon));
  out.tokens.resize(rows, horizon);
  for (int tau = 0; tau < horizon; ++tau) {
    Var h_prev = decoder_.hidden(g, state);
    Var pooled = nn::repeat_rows(g, nn::group_max(g, h_prev, persons), persons);
    std::array<Var, 2> dec_in{embed_.project(g, store_, prev), pooled};
    state = decoder_.step(g, store_, nn::concat_cols(g, dec_in), state);
    Var h = decoder_.hidden(g, state);
    std::array<Var, 3> deep_in{h, prev, pooled};
    Var z = out1_.forward(g, store_, nn::concat_cols(g, deep_in));
    z = nn::leaky_relu(g, out_bn_.forward(g, store_, z, train), cfg_.leaky_slope);
    Var logits = out2_.forward(g, store_, z);
    if (!g.value(logits).allFinite()) throw GenError("generator produced non-finite logits at step " + std::to_string(tau));
    Var y = nn::softmax_temperature(g, logits, cfg_.temperature);
    const Mat& yv = g.value(y);
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::Index best = 0;
      if (cfg_.sample && sampler != nullptr) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double draw = u(*sampler);
        best = a - 1;
        for (Eigen::Index c = 0; c < a; ++c) {
          draw -= yv(r, c);
          if (draw <= 0) {
            best = c;
            break;
          }
        }
      } else {
        yv.row(r).maxCoeff(&best);
      }
      out.tokens(r, tau) = static_cast<int>(best);
    }
    out.relaxed.push_back(y);
    prev = y;
  }
  return out;
}

Mat Generator::draw_noise(Eigen::Index rows, nn::Rng& rng) const { return nn::gaussian(rows, cfg_.noise_dim, rng); }

void Generator::power_iterate() {
  out1_.power_iterate(store_);
  out2_.power_iterate(store_);
}

}  // namespace sig
