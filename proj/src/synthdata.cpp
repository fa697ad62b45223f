#include "sig/synthdata.hpp"

#include <cmath>
#include <random>

#include "sig/errors.hpp"
#include "sig/seed.hpp"

namespace sig::synth {

namespace {

void check_stochastic(const Mat& p, int actions, std::size_t which) {
  const std::string tag = "synth: transition matrix " + std::to_string(which);
  if (p.rows() != actions || p.cols() != actions) throw ConfigError(tag + " is not " + std::to_string(actions) + " square");
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    if ((p.row(r).array() < 0.0).any() || !p.row(r).allFinite()) throw ConfigError(tag + " has a negative entry");
    if (std::abs(p.row(r).sum() - 1.0) > 1e-12) {
      throw ConfigError(tag + " row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

int draw(const nn::RowVec& probs, std::mt19937_64& rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    u -= probs(i);
    if (u < 0.0) return static_cast<int>(i);
  }
  // Rounding left a sliver of mass: take the last nonzero entry.
  for (Eigen::Index i = probs.size() - 1; i > 0; --i) {
    if (probs(i) > 0.0) return static_cast<int>(i);
  }
  return 0;
}

}  // namespace

void SynthConfig::validate() const {
  if (actions < 2) throw ConfigError("synth.actions must be at least 2");
  if (persons < 1) throw ConfigError("synth.persons must be positive");
  if (!(coupling >= 0.0 && coupling <= 1.0)) throw ConfigError("synth.coupling must lie in [0, 1]");
  if (!(dwell >= 0.0 && dwell <= 1.0)) throw ConfigError("synth.dwell must lie in [0, 1]");
  if (!(stickiness >= 0.0 && stickiness <= 1.0)) throw ConfigError("synth.stickiness must lie in [0, 1]");
  if (burn_in < 0) throw ConfigError("synth.burn_in must be non-negative");
  if (transitions.empty() && personas < 1) throw ConfigError("synth.personas must be positive");
  for (std::size_t i = 0; i < transitions.size(); ++i) check_stochastic(transitions[i], actions, i);
}

std::vector<Mat> default_transitions(int actions, int personas, double stickiness, std::uint64_t seed) {
  std::vector<Mat> out;
  for (int p = 0; p < personas; ++p) {
    std::mt19937_64 rng(derive_seed(seed, {0x7472616eULL, static_cast<std::uint64_t>(p)}));
    std::exponential_distribution<double> expo(1.0);
    Mat m(actions, actions);
    for (int r = 0; r < actions; ++r) {
      double total = 0.0;
      for (int c = 0; c < actions; ++c) {
        m(r, c) = c == r ? 0.0 : expo(rng);
        total += m(r, c);
      }
      m.row(r) *= (1.0 - stickiness) / total;
      m(r, r) = stickiness;
      m.row(r) /= m.row(r).sum();
    }
    out.push_back(std::move(m));
  }
  return out;
}

Mat apply_dwell(const Mat& p, double dwell) {
  Mat out = p;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double diag = p(r, r);
    if (diag >= dwell) continue;
    const double rest = 1.0 - diag;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      out(r, c) = c == r ? dwell : (rest > 0.0 ? p(r, c) * (1.0 - dwell) / rest : 0.0);
    }
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

nn::RowVec stationary_distribution(const Mat& p, int max_iter, double tol) {
  nn::RowVec pi = nn::RowVec::Constant(p.rows(), 1.0 / static_cast<double>(p.rows()));
  for (int i = 0; i < max_iter; ++i) {
    // Lazy chain (I + P)/2 has the same fixed point and avoids periodic orbits.
    nn::RowVec next = 0.5 * (pi + pi * p);
    next /= next.sum();
    const double delta = (next - pi).cwiseAbs().sum();
    pi = next;
    if (delta < tol) break;
  }
  return pi;
}

std::vector<int> simulate_chain(const Mat& p, int steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(steps));
  int s = draw(stationary_distribution(p), rng);
  for (int t = 0; t < steps; ++t) {
    s = draw(p.row(s), rng);
    out.push_back(s);
  }
  return out;
}

std::vector<actions::Interaction> simulate(const SynthConfig& cfg, int n_samples, int t_obs, int horizon) {
  cfg.validate();
  if (n_samples < 0 || t_obs < 1 || horizon < 1) throw ConfigError("synth: sample count and lengths must be positive");
  std::vector<Mat> chains =
      cfg.transitions.empty() ? default_transitions(cfg.actions, cfg.personas, cfg.stickiness, cfg.seed) : cfg.transitions;
  std::vector<nn::RowVec> start;
  for (auto& m : chains) {
    if (cfg.dwell > 0.0) m = apply_dwell(m, cfg.dwell);
    start.push_back(stationary_distribution(m));
  }
  const int n = cfg.persons;
  const int len = t_obs + horizon;
  std::vector<actions::Interaction> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    std::mt19937_64 rng(derive_seed(cfg.seed, {0x73616d70ULL, static_cast<std::uint64_t>(i)}));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<int> cur(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p) cur[static_cast<std::size_t>(p)] = draw(start[static_cast<std::size_t>(p) % chains.size()], rng);
    actions::Interaction s;
    s.id = "synth/" + std::to_string(i);
    s.t_obs = t_obs;
    s.horizon = horizon;
    s.tokens.resize(n, len);
    for (int t = 0; t < cfg.burn_in + len; ++t) {
      for (int p = 0; p < n; ++p) {
        auto& a = cur[static_cast<std::size_t>(p)];
        if (n > 1 && unit(rng) < cfg.coupling) {
          int other = std::uniform_int_distribution<int>(0, n - 2)(rng);
          if (other >= p) ++other;
          a = cur[static_cast<std::size_t>(other)];
        } else {
          a = draw(chains[static_cast<std::size_t>(p) % chains.size()].row(a), rng);
        }
        if (t >= cfg.burn_in) s.tokens(p, t - cfg.burn_in) = a;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sig::synth
