#include "sig/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "sig/errors.hpp"

namespace sig::nn {

namespace {

struct Coord {
  ParamStore* store;
  std::string name;
  Eigen::Index index;
};

double checked(double v) {
  if (!std::isfinite(v)) throw GradError("grad_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckReport grad_check(std::span<ParamStore* const> stores, const std::function<double(bool)>& loss,
                           double eps, std::size_t max_coords, std::uint64_t seed) {
  for (ParamStore* s : stores) s->zero_grad();
  checked(loss(true));

  std::vector<Coord> coords;
  for (ParamStore* s : stores) {
    for (const auto& n : s->names()) {
      const Eigen::Index sz = s->value(n).size();
      for (Eigen::Index i = 0; i < sz; ++i) coords.push_back({s, n, i});
    }
  }
  if (coords.size() > max_coords) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
  }

  GradCheckReport rep;
  for (const Coord& c : coords) {
    double& p = c.store->value(c.name).data()[c.index];
    const double analytic = c.store->grad(c.name).data()[c.index];
    const double orig = p;
    p = orig + eps;
    const double fp = checked(loss(false));
    p = orig - eps;
    const double fm = checked(loss(false));
    p = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    ++rep.coords_checked;
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_param = c.name + "[" + std::to_string(c.index) + "]";
      rep.worst_analytic = analytic;
      rep.worst_numeric = numeric;
    }
  }
  for (ParamStore* s : stores) s->zero_grad();
  return rep;
}

}  // namespace sig::nn
