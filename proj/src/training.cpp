#include "sig/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "sig/errors.hpp"
#include "sig/nn/checkpoint.hpp"
#include "sig/seed.hpp"

namespace sig {

namespace {

constexpr std::uint64_t kTagGen = 1, kTagDisc = 2, kTagDNoise = 3, kTagGNoise = 4, kTagShuffle = 5, kTagEval = 6,
                        kTagSample = 7;

/// Freezes a store for the lifetime of the guard.
class FreezeGuard {
 public:
  FreezeGuard(nn::ParamStore& s, bool frozen) : store_(s), prev_(s.frozen()) { s.set_frozen(frozen); }
  ~FreezeGuard() { store_.set_frozen(prev_); }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  nn::ParamStore& store_;
  bool prev_;
};

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Mat gen_meta(const GeneratorConfig& c) {
  Mat m(1, 10);
  m << c.num_actions, c.d_h, c.d_embed, c.noise_dim, c.temperature, c.deep_width, c.layer_norm ? 1 : 0,
      c.spectral ? 1 : 0, c.leaky_slope, c.sample ? 1 : 0;
  return m;
}

Mat disc_meta(const DiscriminatorConfig& c) {
  Mat m(1, 12);
  m << c.num_actions, c.horizon, static_cast<int>(c.kind), c.d_h, c.d_embed, c.d_phi, c.d_psi, c.lambda_inter,
      c.spectral ? 1 : 0, c.leaky_slope, c.indiv_on ? 1 : 0, c.inter_on ? 1 : 0;
  return m;
}

Mat chunks_meta(const DiscriminatorConfig& c) {
  Mat m(1, static_cast<Eigen::Index>(c.chunks.size()) + 1);
  m(0, 0) = static_cast<double>(c.chunks.size());
  for (std::size_t i = 0; i < c.chunks.size(); ++i) m(0, static_cast<Eigen::Index>(i) + 1) = c.chunks[i];
  return m;
}

const Mat& meta_tensor(const nn::Checkpoint& ck, const std::string& name, Eigen::Index min_size,
                       const std::filesystem::path& path) {
  auto it = ck.tensors.find(name);
  if (it == ck.tensors.end() || it->second.values().size() < min_size) {
    throw InputError(path.string() + ": missing or short tensor '" + name + "'");
  }
  return it->second.values();
}

nn::Checkpoint read_gan(const std::filesystem::path& path) {
  nn::Checkpoint ck = nn::read_checkpoint(path);
  if (ck.kind != nn::CheckpointKind::gan) throw InputError(path.string() + " is not a GAN checkpoint");
  return ck;
}

GanModel configs_from(const nn::Checkpoint& ck, const std::filesystem::path& path) {
  GanModel m;
  const Mat& g = meta_tensor(ck, "meta.gen", 10, path);
  m.gen.num_actions = static_cast<int>(g(0, 0));
  m.gen.d_h = static_cast<int>(g(0, 1));
  m.gen.d_embed = static_cast<int>(g(0, 2));
  m.gen.noise_dim = static_cast<int>(g(0, 3));
  m.gen.temperature = g(0, 4);
  m.gen.deep_width = static_cast<int>(g(0, 5));
  m.gen.layer_norm = g(0, 6) != 0.0;
  m.gen.spectral = g(0, 7) != 0.0;
  m.gen.leaky_slope = g(0, 8);
  m.gen.sample = g(0, 9) != 0.0;
  const Mat& d = meta_tensor(ck, "meta.disc", 12, path);
  m.disc.num_actions = static_cast<int>(d(0, 0));
  m.disc.horizon = static_cast<int>(d(0, 1));
  m.disc.kind = static_cast<DiscKind>(static_cast<int>(d(0, 2)));
  m.disc.d_h = static_cast<int>(d(0, 3));
  m.disc.d_embed = static_cast<int>(d(0, 4));
  m.disc.d_phi = static_cast<int>(d(0, 5));
  m.disc.d_psi = static_cast<int>(d(0, 6));
  m.disc.lambda_inter = d(0, 7);
  m.disc.spectral = d(0, 8) != 0.0;
  m.disc.leaky_slope = d(0, 9);
  m.disc.indiv_on = d(0, 10) != 0.0;
  m.disc.inter_on = d(0, 11) != 0.0;
  const Mat& c = meta_tensor(ck, "meta.disc_chunks", 1, path);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(c(0, 0)); ++i) m.disc.chunks.push_back(static_cast<int>(c(0, i + 1)));
  return m;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda_sup >= 0.0)) throw ConfigError("train.lambda_sup must be non-negative");
  if (!adversarial_on && lambda_sup == 0.0) {
    throw ConfigError("no active loss: enable train.adversarial_on or set train.lambda_sup > 0");
  }
  if (epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (d_steps < 1) throw ConfigError("train.d_steps must be positive");
  if (eval_interval < 0 || save_interval < 0 || eval_samples < 0) {
    throw ConfigError("train.eval_interval, train.save_interval and train.eval_samples must be non-negative");
  }
  for (const auto* a : {&adam_g, &adam_d}) {
    if (!(a->lr > 0.0) || !(a->beta1 >= 0.0 && a->beta1 < 1.0) || !(a->beta2 >= 0.0 && a->beta2 < 1.0) ||
        !(a->eps > 0.0)) {
      throw ConfigError("train: invalid Adam settings");
    }
  }
}

Var d_loss(Graph& g, Var real_scores, Var fake_scores) {
  Var fake_term = nn::relu(g, nn::add_const(g, fake_scores, 1.0));
  Var real_term = nn::relu(g, nn::add_const(g, nn::scale(g, real_scores, -1.0), 1.0));
  return nn::mean_all(g, nn::add(g, fake_term, real_term));
}

Var supervision_loss(Graph& g, std::span<const Var> relaxed, const TokenMat& target, int num_actions) {
  if (relaxed.empty() || static_cast<Eigen::Index>(relaxed.size()) != target.cols()) {
    throw ShapeError("supervision loss: " + std::to_string(relaxed.size()) + " steps vs " +
                     std::to_string(target.cols()) + " targets");
  }
  const auto onehot = one_hot_steps(target, num_actions);
  Var acc;
  for (std::size_t t = 0; t < relaxed.size(); ++t) {
    const Mat& y = g.value(relaxed[t]);
    if (y.rows() != onehot[t].rows() || y.cols() != onehot[t].cols()) {
      throw ShapeError("supervision loss: step " + std::to_string(t) + " shape mismatch");
    }
    Var e = nn::squared_error_sum(g, relaxed[t], onehot[t]);
    acc = acc.valid() ? nn::add(g, acc, e) : e;
  }
  const double entries = static_cast<double>(target.rows()) * static_cast<double>(target.cols()) * num_actions;
  return nn::scale(g, acc, 1.0 / entries);
}

GeneratorLosses g_loss(Graph& g, Var fake_scores, std::span<const Var> relaxed, const TokenMat& target,
                       int num_actions, double lambda_sup, bool adversarial_on) {
  GeneratorLosses l;
  l.supervision = supervision_loss(g, relaxed, target, num_actions);
  if (adversarial_on) {
    l.adversarial = nn::scale(g, nn::mean_all(g, fake_scores), -1.0);
    l.total = lambda_sup > 0.0 ? nn::add(g, l.adversarial, nn::scale(g, l.supervision, lambda_sup)) : l.adversarial;
  } else {
    l.total = nn::scale(g, l.supervision, lambda_sup);
  }
  return l;
}

// ---------------------------------------------------------------------------

MetricsCsv::MetricsCsv(std::filesystem::path path) : path_(std::move(path)) {
  std::error_code ec;
  if (std::filesystem::exists(path_, ec) && std::filesystem::file_size(path_, ec) > 0) {
    std::ifstream in(path_);
    std::string a, b;
    std::getline(in, a);
    std::getline(in, b);
    if (a != kVersionLine || b != kHeader) {
      throw InputError(path_.string() + ": existing file does not carry the metrics v1 header");
    }
    return;
  }
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw InputError("cannot open " + path_.string() + " for writing");
  out << kVersionLine << '\n' << kHeader << '\n';
}

void MetricsCsv::append(const MetricsRow& r) {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw InputError("cannot append to " + path_.string());
  out << r.epoch << ',' << fmt(r.h_m) << ',' << fmt(r.h_c) << ',' << fmt(r.is) << ',' << fmt(r.sfid) << ','
      << fmt(r.d_loss) << ',' << fmt(r.g_adv) << ',' << fmt(r.g_sup) << '\n';
}

std::vector<MetricsRow> MetricsCsv::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<MetricsRow> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#' || line == kHeader) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError(n, path.string() + ": bad number '" + cell + "'");
      }
    }
    if (v.size() != 8) throw ParseError(n, path.string() + ": expected 8 columns");
    rows.push_back({static_cast<int>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7]});
  }
  return rows;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const GeneratorConfig& gen, const DiscriminatorConfig& disc, const TrainConfig& cfg,
                 std::vector<actions::Interaction> data)
    : gen_cfg_(gen),
      disc_cfg_(disc),
      cfg_(cfg),
      data_(std::move(data)),
      gen_(gen, derive_seed(cfg.seed, {kTagGen})),
      disc_(disc, derive_seed(cfg.seed, {kTagDisc})) {
  cfg_.validate();
  if (gen.num_actions != disc.num_actions) throw ConfigError("generator and discriminator disagree on |A|");
  if (data_.empty()) throw InputError("training dataset is empty");
  for (const auto& s : data_) {
    actions::validate(s, gen.num_actions);
    if (s.horizon != disc.horizon) {
      throw ValidationError("sample " + s.id + " has horizon " + std::to_string(s.horizon) +
                            ", the discriminator expects " + std::to_string(disc.horizon));
    }
  }
}

std::string Trainer::diagnostics(const Batch& batch, const std::string& what) const {
  std::ostringstream os;
  os << what << " at epoch " << epoch_ << ", step " << step_ << "\nbatch (N=" << batch.persons
     << ", B=" << batch.samples << ")\nparameter norms:\n";
  for (const nn::ParamStore* s : {&gen_.store(), &disc_.store()}) {
    for (const auto& n : s->names()) {
      const Mat& g = s->grad(n);
      os << "  " << n << " value=" << s->value(n).norm() << " grad=" << (g.size() ? g.norm() : 0.0) << '\n';
    }
  }
  return os.str();
}

StepStats Trainer::train_step(const Batch& batch) {
  StepStats st;
  const int a = gen_cfg_.num_actions;
  const Eigen::Index rows = batch.rows();
  nn::Rng sampler(derive_seed(cfg_.seed, {kTagSample, step_}));
  auto check = [&](double v, const char* what) {
    if (!std::isfinite(v)) throw NumericalError(diagnostics(batch, std::string(what) + " is not finite"));
  };

  if (cfg_.adversarial_on) {
    const auto real_steps = one_hot_steps(batch.target, a);
    FreezeGuard fg(gen_.store(), true);
    FreezeGuard fd(disc_.store(), false);
    for (int k = 0; k < cfg_.d_steps; ++k) {
      disc_.power_iterate();
      Graph g;
      nn::Rng rng(derive_seed(cfg_.seed, {kTagDNoise, step_, static_cast<std::uint64_t>(k)}));
      const Mat noise = gen_.draw_noise(rows, rng);
      const auto fake = gen_.generate(g, batch.observed, batch.persons, batch.horizon, noise, true, &sampler);
      const Conditioning cond = disc_.condition(g, batch.observed);
      std::vector<Var> real;
      real.reserve(real_steps.size());
      for (const auto& m : real_steps) real.push_back(g.constant(m));
      const auto rs = disc_.score(g, cond, real, batch.persons);
      const auto fs = disc_.score(g, cond, fake.relaxed, batch.persons);
      Var loss = d_loss(g, rs.total, fs.total);
      const double v = g.scalar(loss);
      check(v, "discriminator loss");
      g.backward(loss);
      try {
        nn::adam_step(disc_.store(), cfg_.adam_d);
      } catch (const GradError& e) {
        throw NumericalError(diagnostics(batch, e.what()));
      }
      st.d_loss += v / cfg_.d_steps;
    }
  }

  {
    FreezeGuard fg(gen_.store(), false);
    FreezeGuard fd(disc_.store(), true);
    gen_.power_iterate();
    Graph g;
    nn::Rng rng(derive_seed(cfg_.seed, {kTagGNoise, step_}));
    const Mat noise = gen_.draw_noise(rows, rng);
    const auto fake = gen_.generate(g, batch.observed, batch.persons, batch.horizon, noise, true, &sampler);
    Var fake_scores;
    if (cfg_.adversarial_on) {
      const Conditioning cond = disc_.condition(g, batch.observed);
      fake_scores = disc_.score(g, cond, fake.relaxed, batch.persons).total;
    }
    const auto l = g_loss(g, fake_scores, fake.relaxed, batch.target, a, cfg_.lambda_sup, cfg_.adversarial_on);
    const double total = g.scalar(l.total);
    check(total, "generator loss");
    st.g_sup = g.scalar(l.supervision);
    st.g_adv = l.adversarial.valid() ? g.scalar(l.adversarial) : 0.0;
    g.backward(l.total);
    try {
      nn::adam_step(gen_.store(), cfg_.adam_g);
    } catch (const GradError& e) {
      throw NumericalError(diagnostics(batch, e.what()));
    }
  }
  ++step_;
  return st;
}

StepStats Trainer::run_epoch() {
  auto buckets = bucket_by_persons(data_);
  std::mt19937_64 rng(derive_seed(cfg_.seed, {kTagShuffle, static_cast<std::uint64_t>(epoch_)}));
  std::vector<std::vector<const actions::Interaction*>> batches;
  for (auto& b : buckets) {
    std::shuffle(b.begin(), b.end(), rng);
    for (std::size_t at = 0; at < b.size(); at += static_cast<std::size_t>(cfg_.batch_size)) {
      std::vector<const actions::Interaction*> ptrs;
      for (std::size_t i = at; i < std::min(b.size(), at + static_cast<std::size_t>(cfg_.batch_size)); ++i) {
        ptrs.push_back(&data_[b[i]]);
      }
      batches.push_back(std::move(ptrs));
    }
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  StepStats mean;
  for (const auto& ptrs : batches) {
    const StepStats s = train_step(make_batch(ptrs));
    mean.d_loss += s.d_loss;
    mean.g_adv += s.g_adv;
    mean.g_sup += s.g_sup;
  }
  const auto n = static_cast<double>(batches.size());
  mean.d_loss /= n;
  mean.g_adv /= n;
  mean.g_sup /= n;
  ++epoch_;
  return mean;
}

void Trainer::train(const std::function<void(const MetricsRow&)>& on_row,
                    const std::function<void(const Trainer&)>& on_save) {
  while (epoch_ < cfg_.epochs) {
    const StepStats s = run_epoch();
    if (cfg_.eval_interval > 0 && epoch_ % cfg_.eval_interval == 0 && on_row) on_row(evaluate(s));
    if (cfg_.save_interval > 0 && epoch_ % cfg_.save_interval == 0 && on_save) on_save(*this);
  }
}

MetricsRow Trainer::evaluate(const StepStats& last) {
  const std::size_t n = cfg_.eval_samples > 0 ? std::min<std::size_t>(data_.size(), static_cast<std::size_t>(cfg_.eval_samples))
                                              : data_.size();
  const std::span<const actions::Interaction> subset(data_.data(), n);
  const Continuations gen = generate_continuations(gen_, subset, derive_seed(cfg_.seed, {kTagEval}));
  MetricsRow row;
  row.epoch = epoch_;
  const auto rep = metrics::entropy_report(gen.target);
  row.h_m = rep.h_m;
  row.h_c = rep.h_c;
  row.is = rep.is;
  row.sfid = std::numeric_limits<double>::quiet_NaN();
  if (inception_) {
    const Continuations real = real_sequences(subset);
    try {
      row.sfid = metrics::sfid(real.full, gen.full, *inception_);
    } catch (const InputError&) {
      // Too few sequences for a full-rank covariance: leave NaN.
    }
  }
  row.d_loss = last.d_loss;
  row.g_adv = last.g_adv;
  row.g_sup = last.g_sup;
  return row;
}

void Trainer::save(const std::filesystem::path& path) const {
  nn::Checkpoint ck;
  ck.kind = nn::CheckpointKind::gan;
  ck.tensors.emplace("meta.gen", nn::Tensor(gen_meta(gen_cfg_), 1));
  ck.tensors.emplace("meta.disc", nn::Tensor(disc_meta(disc_cfg_), 1));
  ck.tensors.emplace("meta.disc_chunks", nn::Tensor(chunks_meta(disc_cfg_), 1));
  Mat counters(1, 2);
  counters << epoch_, static_cast<double>(step_);
  ck.tensors.emplace("train.counters", nn::Tensor(counters, 1));
  nn::export_store(gen_.store(), "gen/", ck);
  nn::export_store(disc_.store(), "disc/", ck);
  nn::write_checkpoint(path, ck);
}

void Trainer::load(const std::filesystem::path& path) {
  const nn::Checkpoint ck = read_gan(path);
  if (meta_tensor(ck, "meta.gen", 10, path) != gen_meta(gen_cfg_) ||
      meta_tensor(ck, "meta.disc", 12, path) != disc_meta(disc_cfg_) ||
      meta_tensor(ck, "meta.disc_chunks", 1, path) != chunks_meta(disc_cfg_)) {
    throw InputError(path.string() + " was written for a different model configuration");
  }
  nn::import_store(gen_.store(), "gen/", ck);
  nn::import_store(disc_.store(), "disc/", ck);
  const Mat& c = meta_tensor(ck, "train.counters", 2, path);
  epoch_ = static_cast<int>(c(0, 0));
  step_ = static_cast<std::uint64_t>(c(0, 1));
}

// ---------------------------------------------------------------------------

Continuations generate_continuations(Generator& gen, std::span<const actions::Interaction> samples,
                                     std::uint64_t seed, int batch_size) {
  const GeneratorConfig& cfg = gen.config();
  std::vector<TokenMat> per_sample(samples.size());
  FreezeGuard fg(gen.store(), true);
  for (const auto& bucket : bucket_by_persons(samples)) {
    for (std::size_t at = 0; at < bucket.size(); at += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(bucket.size(), at + static_cast<std::size_t>(batch_size));
      std::vector<const actions::Interaction*> ptrs;
      for (std::size_t i = at; i < end; ++i) ptrs.push_back(&samples[bucket[i]]);
      const Batch b = make_batch(ptrs);
      Mat noise(b.rows(), cfg.noise_dim);
      for (std::size_t i = at; i < end; ++i) {
        nn::Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(bucket[i])}));
        noise.middleRows(static_cast<Eigen::Index>(i - at) * b.persons, b.persons) = gen.draw_noise(b.persons, rng);
      }
      nn::Rng sampler(derive_seed(seed, {kTagSample, static_cast<std::uint64_t>(bucket[at])}));
      Graph g;
      const auto out = gen.generate(g, b.observed, b.persons, b.horizon, noise, false, &sampler);
      for (std::size_t i = at; i < end; ++i) {
        per_sample[bucket[i]] = out.tokens.middleRows(static_cast<Eigen::Index>(i - at) * b.persons, b.persons);
      }
    }
  }
  Continuations c;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& x = samples[s].observed();
    const TokenMat& y = per_sample[s];
    for (Eigen::Index p = 0; p < y.rows(); ++p) {
      metrics::Sequence tgt(y.row(p).begin(), y.row(p).end());
      metrics::Sequence full(x.row(p).begin(), x.row(p).end());
      full.insert(full.end(), tgt.begin(), tgt.end());
      c.target.push_back(std::move(tgt));
      c.full.push_back(std::move(full));
    }
  }
  return c;
}

Continuations real_sequences(std::span<const actions::Interaction> samples) {
  Continuations c;
  for (const auto& s : samples) {
    for (Eigen::Index p = 0; p < s.tokens.rows(); ++p) {
      const auto row = s.tokens.row(p);
      c.full.emplace_back(row.begin(), row.end());
      c.target.emplace_back(row.begin() + s.t_obs, row.end());
    }
  }
  return c;
}

GanModel read_gan_configs(const std::filesystem::path& path) { return configs_from(read_gan(path), path); }

Generator load_generator(const std::filesystem::path& path) {
  const nn::Checkpoint ck = read_gan(path);
  Generator gen(configs_from(ck, path).gen, 0);
  nn::import_store(gen.store(), "gen/", ck);
  return gen;
}

}  // namespace sig
