#include "sig/batch.hpp"

#include <map>

#include "sig/errors.hpp"

namespace sig {

Batch make_batch(std::span<const Interaction* const> samples) {
  if (samples.empty()) throw InputError("empty batch");
  Batch b;
  b.samples = static_cast<int>(samples.size());
  b.persons = samples[0]->persons();
  b.t_obs = samples[0]->t_obs;
  b.horizon = samples[0]->horizon;
  b.observed.resize(b.rows(), b.t_obs);
  b.target.resize(b.rows(), b.horizon);
  Eigen::Index r = 0;
  for (const Interaction* s : samples) {
    if (s->persons() != b.persons || s->t_obs != b.t_obs || s->horizon != b.horizon) {
      throw InputError("batch mixes interaction shapes (sample '" + s->id + "')");
    }
    b.observed.middleRows(r, b.persons) = s->observed();
    b.target.middleRows(r, b.persons) = s->target();
    r += b.persons;
  }
  return b;
}

Batch make_batch(std::span<const Interaction> samples) {
  std::vector<const Interaction*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(std::span<const Interaction* const>(ptrs));
}

std::vector<int> token_column(const TokenMat& tokens, Eigen::Index t) {
  std::vector<int> out(static_cast<std::size_t>(tokens.rows()));
  for (Eigen::Index r = 0; r < tokens.rows(); ++r) out[static_cast<std::size_t>(r)] = tokens(r, t);
  return out;
}

std::vector<Mat> one_hot_steps(const TokenMat& tokens, int num_actions) {
  std::vector<Mat> out;
  out.reserve(static_cast<std::size_t>(tokens.cols()));
  for (Eigen::Index t = 0; t < tokens.cols(); ++t) {
    Mat m = Mat::Zero(tokens.rows(), num_actions);
    for (Eigen::Index r = 0; r < tokens.rows(); ++r) {
      const int id = tokens(r, t);
      if (id < 0 || id >= num_actions) throw RangeError("token outside action set");
      m(r, id) = 1.0;
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<std::vector<std::size_t>> bucket_by_persons(std::span<const Interaction> samples) {
  std::map<int, std::vector<std::size_t>> by_n;
  for (std::size_t i = 0; i < samples.size(); ++i) by_n[samples[i].persons()].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [_, v] : by_n) out.push_back(std::move(v));
  return out;
}

}  // namespace sig
