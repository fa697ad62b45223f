#include "sig/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "sig/errors.hpp"
#include "sig/nn/checkpoint.hpp"
#include "sig/nn/optim.hpp"

namespace sig::metrics {

namespace {

double entropy_of_counts(const std::map<int, std::size_t>& counts, std::size_t total) {
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

void require_tokens(std::span<const Sequence> sequences) {
  if (sequences.empty()) throw InputError("entropy of an empty sequence set");
  for (const auto& s : sequences) {
    if (s.empty()) throw InputError("entropy of an empty sequence");
  }
}

using TokenRows = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

TokenRows stack(std::span<const Sequence> seqs, std::span<const std::size_t> idx) {
  const auto len = static_cast<Eigen::Index>(seqs[idx[0]].size());
  TokenRows t(static_cast<Eigen::Index>(idx.size()), len);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& s = seqs[idx[r]];
    if (static_cast<Eigen::Index>(s.size()) != len) throw InputError("inception batch mixes sequence lengths");
    for (Eigen::Index c = 0; c < len; ++c) t(static_cast<Eigen::Index>(r), c) = s[static_cast<std::size_t>(c)];
  }
  return t;
}

std::vector<int> column(const TokenRows& t, Eigen::Index c) {
  std::vector<int> out(static_cast<std::size_t>(t.rows()));
  for (Eigen::Index r = 0; r < t.rows(); ++r) out[static_cast<std::size_t>(r)] = t(r, c);
  return out;
}

/// Index lists of equal-length sequences, each split into chunks of at most `chunk`.
std::vector<std::vector<std::size_t>> length_batches(std::span<const Sequence> seqs,
                                                     std::span<const std::size_t> order, std::size_t chunk) {
  std::map<std::size_t, std::vector<std::size_t>> by_len;
  for (std::size_t i : order) by_len[seqs[i].size()].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [_, v] : by_len) {
    for (std::size_t at = 0; at < v.size(); at += chunk) {
      out.emplace_back(v.begin() + static_cast<std::ptrdiff_t>(at),
                       v.begin() + static_cast<std::ptrdiff_t>(std::min(v.size(), at + chunk)));
    }
  }
  return out;
}

}  // namespace

double marginal_entropy(std::span<const Sequence> sequences) {
  require_tokens(sequences);
  std::map<int, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& s : sequences) {
    for (int a : s) ++counts[a];
    total += s.size();
  }
  return entropy_of_counts(counts, total);
}

double conditional_entropy(std::span<const Sequence> sequences) {
  require_tokens(sequences);
  double acc = 0.0;
  for (const auto& s : sequences) {
    std::map<int, std::size_t> counts;
    for (int a : s) ++counts[a];
    acc += entropy_of_counts(counts, s.size());
  }
  return acc / static_cast<double>(sequences.size());
}

double inception_score(double h_m, double h_c) { return std::exp(h_m - h_c); }

EntropyReport entropy_report(std::span<const Sequence> sequences) {
  EntropyReport r;
  r.h_m = marginal_entropy(sequences);
  r.h_c = conditional_entropy(sequences);
  r.is = inception_score(r.h_m, r.h_c);
  return r;
}

Mat action_proportions(std::span<const Sequence> sequences, int num_actions) {
  Mat p = Mat::Zero(static_cast<Eigen::Index>(sequences.size()), num_actions);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    if (s.empty()) throw InputError("proportions of an empty sequence");
    for (int a : s) {
      if (a < 0 || a >= num_actions) throw RangeError("token outside action set");
      p(static_cast<Eigen::Index>(i), a) += 1.0;
    }
    p.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(s.size());
  }
  return p;
}

// ---------------------------------------------------------------------------

GaussianStats fit_gaussian(const Mat& features) {
  if (features.rows() < 2) throw InputError("need at least two feature rows to fit a Gaussian");
  GaussianStats st;
  st.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - st.mean.transpose();
  st.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  st.cov = 0.5 * (st.cov + st.cov.transpose());
  st.cov.diagonal().array() += kCovRegularizer;
  return st;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError(std::string("eigendecomposition failed for ") + what);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8) throw NumericalError(std::string(what) + " is not positive semi-definite");
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows()) {
    throw ShapeError("frechet_distance: dimension mismatch");
  }
  if (!a.cov.allFinite() || !b.cov.allFinite()) throw NumericalError("frechet_distance: non-finite covariance");
  const Eigen::MatrixXd s1 = psd_sqrt(a.cov, "covariance");
  Eigen::MatrixXd inner = s1 * b.cov * s1;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("frechet_distance: eigendecomposition failed");
  double tr_root = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double ev = es.eigenvalues()(i);
    if (ev < -1e-8) throw NumericalError("frechet_distance: covariance product has a negative eigenvalue");
    tr_root += std::sqrt(std::max(ev, 0.0));
  }
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_root;
}

// ---------------------------------------------------------------------------

InceptionModel::InceptionModel(const InceptionConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.num_actions < 2 || cfg_.d_h < 1 || cfg_.d_embed < 1 || cfg_.feature_dim < 1) {
    throw ConfigError("metrics: invalid inception model dimensions");
  }
  nn::Rng rng(seed);
  embed_ = nn::Embedding(store_, "incep.embed", cfg_.num_actions, cfg_.d_embed, rng);
  fwd_ = nn::LstmCell(store_, "incep.fwd", cfg_.d_embed, cfg_.d_h, false, rng);
  bwd_ = nn::LstmCell(store_, "incep.bwd", cfg_.d_embed, cfg_.d_h, false, rng);
  hidden_ = nn::SpectralLinear(store_, "incep.hidden", 2 * cfg_.d_h, cfg_.feature_dim, true, false, rng);
  out_ = nn::SpectralLinear(store_, "incep.out", cfg_.feature_dim, cfg_.num_actions, true, false, rng);
}

InceptionModel::Forward InceptionModel::forward(nn::Graph& g, const TokenRows& tokens) {
  if (tokens.cols() == 0) throw InputError("inception: empty sequences");
  std::vector<nn::Var> emb;
  emb.reserve(static_cast<std::size_t>(tokens.cols()));
  for (Eigen::Index t = 0; t < tokens.cols(); ++t) emb.push_back(embed_.lookup(g, store_, column(tokens, t)));
  nn::Var sf = fwd_.zero_state(g, tokens.rows());
  for (auto& e : emb) sf = fwd_.step(g, store_, e, sf);
  nn::Var sb = bwd_.zero_state(g, tokens.rows());
  for (auto it = emb.rbegin(); it != emb.rend(); ++it) sb = bwd_.step(g, store_, *it, sb);
  const std::array<nn::Var, 2> both{fwd_.hidden(g, sf), bwd_.hidden(g, sb)};
  Forward f;
  f.features = nn::leaky_relu(g, hidden_.forward(g, store_, nn::concat_cols(g, both)), cfg_.leaky_slope);
  f.logits = out_.forward(g, store_, f.features);
  return f;
}

Mat InceptionModel::features(std::span<const Sequence> sequences) {
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  Mat out(static_cast<Eigen::Index>(sequences.size()), cfg_.feature_dim);
  const bool was_frozen = store_.frozen();
  store_.set_frozen(true);
  for (const auto& idx : length_batches(sequences, order, 256)) {
    nn::Graph g;
    const auto f = forward(g, stack(sequences, idx));
    const Mat& v = g.value(f.features);
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(idx[r])) = v.row(static_cast<Eigen::Index>(r));
  }
  store_.set_frozen(was_frozen);
  return out;
}

Mat InceptionModel::predict(std::span<const Sequence> sequences) {
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  Mat out(static_cast<Eigen::Index>(sequences.size()), cfg_.num_actions);
  const bool was_frozen = store_.frozen();
  store_.set_frozen(true);
  for (const auto& idx : length_batches(sequences, order, 256)) {
    nn::Graph g;
    const auto f = forward(g, stack(sequences, idx));
    const Mat p = g.value(nn::softmax_temperature(g, f.logits, 1.0));
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(idx[r])) = p.row(static_cast<Eigen::Index>(r));
  }
  store_.set_frozen(was_frozen);
  return out;
}

void InceptionModel::save(const std::filesystem::path& path) const {
  nn::Checkpoint ck;
  ck.kind = nn::CheckpointKind::inception;
  Mat cfgv(1, 5);
  cfgv << cfg_.num_actions, cfg_.d_h, cfg_.d_embed, cfg_.feature_dim, cfg_.leaky_slope;
  ck.tensors.emplace("incep.config", nn::Tensor(cfgv, 1));
  nn::export_store(store_, "", ck);
  nn::write_checkpoint(path, ck);
}

InceptionModel InceptionModel::load(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::read_checkpoint(path);
  if (ck.kind != nn::CheckpointKind::inception) {
    throw InputError(path.string() + " is not an inception model checkpoint");
  }
  auto it = ck.tensors.find("incep.config");
  if (it == ck.tensors.end() || it->second.size() != 5) throw InputError(path.string() + ": missing inception config");
  const Mat& c = it->second.values();
  InceptionConfig cfg;
  cfg.num_actions = static_cast<int>(c(0, 0));
  cfg.d_h = static_cast<int>(c(0, 1));
  cfg.d_embed = static_cast<int>(c(0, 2));
  cfg.feature_dim = static_cast<int>(c(0, 3));
  cfg.leaky_slope = c(0, 4);
  InceptionModel m(cfg, 0);
  nn::import_store(m.store_, "", ck);
  return m;
}

InceptionTrainReport inception_train(InceptionModel& model, std::span<const Sequence> sequences,
                                     const InceptionTrainConfig& cfg) {
  if (sequences.size() < 100) throw InputError("inception training needs at least 100 sequences");
  const int a = model.config().num_actions;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(order.size())));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  const Mat targets = action_proportions(sequences, a);
  auto batch_targets = [&](const std::vector<std::size_t>& idx) {
    Mat t(static_cast<Eigen::Index>(idx.size()), a);
    for (std::size_t r = 0; r < idx.size(); ++r) t.row(static_cast<Eigen::Index>(r)) = targets.row(static_cast<Eigen::Index>(idx[r]));
    return t;
  };

  nn::ParamStore& store = model.store();
  nn::AdamConfig adam{cfg.lr, 0.5, 0.999, 1e-8};
  auto val_loss = [&]() {
    store.set_frozen(true);
    double total = 0.0;
    for (const auto& idx : length_batches(sequences, val, 256)) {
      nn::Graph g;
      const auto f = model.forward(g, stack(sequences, idx));
      total += g.scalar(nn::softmax_cross_entropy(g, f.logits, batch_targets(idx))) * static_cast<double>(idx.size());
    }
    store.set_frozen(false);
    return total / static_cast<double>(val.size());
  };

  InceptionTrainReport rep;
  rep.best_val_loss = val_loss();
  std::map<std::string, Mat> best;
  for (const auto& n : store.names()) best[n] = store.value(n);
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double tl = 0.0;
    std::size_t seen = 0;
    for (const auto& idx : length_batches(sequences, train, static_cast<std::size_t>(cfg.batch_size))) {
      nn::Graph g;
      const auto f = model.forward(g, stack(sequences, idx));
      nn::Var loss = nn::softmax_cross_entropy(g, f.logits, batch_targets(idx));
      const double lv = g.scalar(loss);
      if (!std::isfinite(lv)) throw NumericalError("inception training diverged (loss is not finite)");
      g.backward(loss);
      nn::adam_step(store, adam);
      tl += lv * static_cast<double>(idx.size());
      seen += idx.size();
    }
    rep.epochs = epoch + 1;
    rep.final_train_loss = tl / static_cast<double>(seen);
    const double vl = val_loss();
    if (vl < rep.best_val_loss - cfg.min_delta) {
      rep.best_val_loss = vl;
      since_best = 0;
      for (const auto& n : store.names()) best[n] = store.value(n);
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  for (const auto& [n, v] : best) store.value(n) = v;
  return rep;
}

double sfid(std::span<const Sequence> real, std::span<const Sequence> generated, InceptionModel& model) {
  const auto need = static_cast<std::size_t>(model.config().feature_dim) + 1;
  if (real.size() < need || generated.size() < need) {
    throw InputError("sfid needs at least " + std::to_string(need) + " sequences per set");
  }
  const GaussianStats a = fit_gaussian(model.features(real));
  const GaussianStats b = fit_gaussian(model.features(generated));
  return frechet_distance(a, b);
}

}  // namespace sig::metrics
