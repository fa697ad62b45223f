#include "sig/nn/layers.hpp"

#include <cmath>

#include "sig/errors.hpp"

namespace sig::nn {

Mat uniform_fan_in(Eigen::Index d_out, Eigen::Index d_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(d_out, d_in);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Mat gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Mat random_orthogonal(Eigen::Index d, Rng& rng) {
  const Eigen::MatrixXd a = gaussian(d, d, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  // Sign fix so the draw is uniform over the orthogonal group.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

// ---------------------------------------------------------------------------

SpectralLinear::SpectralLinear(ParamStore& store, std::string prefix, Eigen::Index d_in,
                               Eigen::Index d_out, bool bias, bool spectral, Rng& rng)
    : w_(prefix + ".W"),
      b_(prefix + ".b"),
      u_(prefix + ".u"),
      d_in_(d_in),
      d_out_(d_out),
      bias_(bias),
      spectral_(spectral) {
  store.add(w_, Tensor(uniform_fan_in(d_out, d_in, rng)));
  if (bias_) store.add(b_, Tensor::vector(static_cast<std::size_t>(d_out)));
  if (spectral_) {
    Mat u = gaussian(1, d_out, rng);
    u /= u.norm();
    store.add_buffer(u_, Tensor(u, 1));
  }
}

Var SpectralLinear::applied_weight(Graph& g, ParamStore& store) const {
  Var w = g.param(store, w_);
  if (!spectral_) return w;
  return spectral_normalize(g, w, store.buffer(u_));
}

Mat SpectralLinear::applied_weight(const ParamStore& store) const {
  const Mat& w = store.value(w_);
  if (!spectral_) return w;
  const double s = sigma_estimate(store);
  if (s < 1e-12) return w;
  return w / s;
}

Var SpectralLinear::forward(Graph& g, ParamStore& store, Var x) const {
  Var w = applied_weight(g, store);
  Var b = bias_ ? g.param(store, b_) : Var{};
  return linear(g, x, w, b);
}

void SpectralLinear::power_iterate(ParamStore& store) const {
  if (!spectral_) return;
  const Mat& w = store.value(w_);
  Mat& u = store.buffer(u_);
  RowVec v = u.row(0) * w;
  const double vn = v.norm();
  if (vn < 1e-12) return;
  v /= vn;
  RowVec nu = v * w.transpose();
  const double un = nu.norm();
  if (un < 1e-12) return;
  u.row(0) = nu / un;
}

double SpectralLinear::sigma_estimate(const ParamStore& store) const {
  return (store.buffer(u_).row(0) * store.value(w_)).norm();
}

// ---------------------------------------------------------------------------

Embedding::Embedding(ParamStore& store, std::string name, Eigen::Index vocab, Eigen::Index dim, Rng& rng)
    : name_(std::move(name)), vocab_(vocab), dim_(dim) {
  store.add(name_, Tensor(gaussian(vocab, dim, rng)));
}

Var Embedding::lookup(Graph& g, ParamStore& store, std::span<const int> ids) const {
  return embed_ids(g, g.param(store, name_), ids);
}

Var Embedding::project(Graph& g, ParamStore& store, Var distributions) const {
  return matmul(g, distributions, g.param(store, name_));
}

// ---------------------------------------------------------------------------

LstmCell::LstmCell(ParamStore& store, std::string prefix, Eigen::Index d_in, Eigen::Index d_h,
                   bool layer_norm, Rng& rng)
    : prefix_(std::move(prefix)), d_in_(d_in), d_h_(d_h), ln_(layer_norm) {
  store.add(prefix_ + ".Wx", Tensor(uniform_fan_in(4 * d_h, d_in, rng)));
  Mat wh(4 * d_h, d_h);
  for (Eigen::Index b = 0; b < 4; ++b) wh.middleRows(b * d_h, d_h) = random_orthogonal(d_h, rng);
  store.add(prefix_ + ".Wh", Tensor(wh));
  RowVec shift = RowVec::Zero(4 * d_h);
  shift.segment(d_h, d_h).setConstant(1.0);
  if (ln_) {
    store.add(prefix_ + ".ln_gain", Tensor(Mat::Ones(1, 4 * d_h), 1));
    store.add(prefix_ + ".ln_bias", Tensor(Mat(shift), 1));
  } else {
    store.add(prefix_ + ".b", Tensor(Mat(shift), 1));
  }
}

Var LstmCell::step(Graph& g, ParamStore& store, Var x, Var state) const {
  LstmWeights w;
  w.wx = g.param(store, prefix_ + ".Wx");
  w.wh = g.param(store, prefix_ + ".Wh");
  if (ln_) {
    w.ln_gain = g.param(store, prefix_ + ".ln_gain");
    w.ln_bias = g.param(store, prefix_ + ".ln_bias");
  } else {
    w.bias = g.param(store, prefix_ + ".b");
  }
  return lstm_step(g, x, state, w);
}

Var LstmCell::zero_state(Graph& g, Eigen::Index rows) const { return g.constant(Mat::Zero(rows, 2 * d_h_)); }

Var LstmCell::run(Graph& g, ParamStore& store, std::span<const Var> inputs, Var state) const {
  for (Var x : inputs) state = step(g, store, x, state);
  return state;
}

Var LstmCell::hidden(Graph& g, Var state) const { return slice_cols(g, state, 0, d_h_); }

// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(ParamStore& store, std::string prefix, Eigen::Index d) : prefix_(std::move(prefix)), d_(d) {
  store.add(prefix_ + ".gamma", Tensor(Mat::Ones(1, d), 1));
  store.add(prefix_ + ".beta", Tensor::vector(static_cast<std::size_t>(d)));
  store.add_buffer(prefix_ + ".running_mean", Tensor::vector(static_cast<std::size_t>(d)));
  store.add_buffer(prefix_ + ".running_var", Tensor(Mat::Ones(1, d), 1));
}

Var BatchNorm::forward(Graph& g, ParamStore& store, Var x, bool train) const {
  BatchNormState st;
  st.running_mean = &store.buffer(prefix_ + ".running_mean");
  st.running_var = &store.buffer(prefix_ + ".running_var");
  st.train = train;
  return batchnorm(g, x, g.param(store, prefix_ + ".gamma"), g.param(store, prefix_ + ".beta"), st);
}

}  // namespace sig::nn
