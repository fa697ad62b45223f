#include "sig/nn/optim.hpp"

#include <cmath>

#include "sig/errors.hpp"

namespace sig::nn {

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  const auto names = store.names();
  for (const auto& n : names) {
    if (!store.grad(n).allFinite()) throw GradError("non-finite gradient for " + n);
  }
  const double t = static_cast<double>(store.step_count() + 1);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& n : names) {
    Mat& p = store.value(n);
    Mat& g = store.grad(n);
    auto& mom = store.moments(n);
    mom.m = cfg.beta1 * mom.m + (1.0 - cfg.beta1) * g;
    mom.v = cfg.beta2 * mom.v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    p.array() -= cfg.lr * (mom.m.array() / c1) / ((mom.v.array() / c2).sqrt() + cfg.eps);
    g.setZero();
  }
  store.set_step_count(store.step_count() + 1);
}

}  // namespace sig::nn
