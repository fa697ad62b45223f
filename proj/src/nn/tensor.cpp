#include "sig/nn/tensor.hpp"

#include "sig/errors.hpp"

namespace sig::nn {

Tensor::Tensor(Mat values, std::size_t rank) : values_(std::move(values)) {
  if (rank == 1) {
    if (values_.rows() != 1) {
      throw ShapeError("rank-1 tensor must be stored as a single row");
    }
    dims_ = {static_cast<std::size_t>(values_.cols())};
  } else if (rank == 2) {
    dims_ = {static_cast<std::size_t>(values_.rows()), static_cast<std::size_t>(values_.cols())};
  } else {
    throw ShapeError("only rank 1 and 2 tensors are supported");
  }
}

Tensor Tensor::vector(std::size_t n, double fill) {
  return Tensor(Mat::Constant(1, static_cast<Eigen::Index>(n), fill), 1);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor(Mat::Constant(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols), fill), 2);
}

Mat& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.count(name) != 0 || buffers_.count(name) != 0) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  Entry e;
  e.grad = Mat::Zero(init.values().rows(), init.values().cols());
  e.moments.m = e.grad;
  e.moments.v = e.grad;
  e.value = std::move(init);
  return params_.emplace(name, std::move(e)).first->second.value.values();
}

Mat& ParamStore::add_buffer(const std::string& name, Tensor init) {
  if (params_.count(name) != 0 || buffers_.count(name) != 0) {
    throw ConfigError("duplicate buffer name: " + name);
  }
  return buffers_.emplace(name, std::move(init)).first->second.values();
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

Mat& ParamStore::value(const std::string& name) { return entry(name).value.values(); }
const Mat& ParamStore::value(const std::string& name) const { return entry(name).value.values(); }
Mat& ParamStore::grad(const std::string& name) { return entry(name).grad; }
const Mat& ParamStore::grad(const std::string& name) const { return entry(name).grad; }
ParamStore::Moments& ParamStore::moments(const std::string& name) { return entry(name).moments; }
const ParamStore::Moments& ParamStore::moments(const std::string& name) const { return entry(name).moments; }
const Tensor& ParamStore::tensor(const std::string& name) const { return entry(name).value; }

Mat& ParamStore::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ConfigError("unknown buffer: " + name);
  return it->second.values();
}

const Mat& ParamStore::buffer(const std::string& name) const { return buffer_tensor(name).values(); }

const Tensor& ParamStore::buffer_tensor(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ConfigError("unknown buffer: " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [k, _] : params_) out.push_back(k);
  return out;
}

std::vector<std::string> ParamStore::buffer_names() const {
  std::vector<std::string> out;
  out.reserve(buffers_.size());
  for (const auto& [k, _] : buffers_) out.push_back(k);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : params_) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : params_) e.grad.setZero();
}

double ParamStore::checksum() const {
  double acc = 0.0;
  double w = 1.0;
  for (const auto& [_, e] : params_) {
    const Mat& v = e.value.values();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      acc += w * v.data()[i];
      w = w * 1.000001 + 1e-3;
    }
  }
  return acc;
}

}  // namespace sig::nn
