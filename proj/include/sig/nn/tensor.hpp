#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sig::nn {

/// Row-major dense matrix; rows index batch items throughout the library.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using ColVec = Eigen::VectorXd;

/// Rank-1 or rank-2 tensor of 64-bit reals. Rank-1 tensors are stored as a
/// single row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Mat values, std::size_t rank = 2);

  static Tensor vector(std::size_t n, double fill = 0.0);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  std::size_t rank() const noexcept { return dims_.size(); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }

  Mat& values() noexcept { return values_; }
  const Mat& values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  bool all_finite() const { return values_.allFinite(); }

 private:
  std::vector<std::size_t> dims_;
  Mat values_;
};

/// Owns trainable parameters, their gradients, optimizer moments and
/// non-trainable buffers (running statistics, power-iteration vectors).
/// Iteration is in sorted-name order.
class ParamStore {
 public:
  struct Moments {
    Mat m;
    Mat v;
  };

  Mat& add(const std::string& name, Tensor init);
  Mat& add_buffer(const std::string& name, Tensor init);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  bool contains_buffer(const std::string& name) const { return buffers_.count(name) != 0; }

  Mat& value(const std::string& name);
  const Mat& value(const std::string& name) const;
  Mat& grad(const std::string& name);
  const Mat& grad(const std::string& name) const;
  Mat& buffer(const std::string& name);
  const Mat& buffer(const std::string& name) const;
  Moments& moments(const std::string& name);
  const Moments& moments(const std::string& name) const;

  const Tensor& tensor(const std::string& name) const;
  const Tensor& buffer_tensor(const std::string& name) const;

  std::vector<std::string> names() const;
  std::vector<std::string> buffer_names() const;

  std::size_t parameter_count() const;
  void zero_grad();

  /// Frozen stores hand out graph leaves that do not collect gradients.
  bool frozen() const noexcept { return frozen_; }
  void set_frozen(bool f) noexcept { frozen_ = f; }

  std::uint64_t step_count() const noexcept { return step_count_; }
  void set_step_count(std::uint64_t s) noexcept { step_count_ = s; }

  /// Order-dependent checksum over parameter values.
  double checksum() const;

 private:
  struct Entry {
    Tensor value;
    Mat grad;
    Moments moments;
  };
  std::map<std::string, Entry> params_;
  std::map<std::string, Tensor> buffers_;
  std::uint64_t step_count_ = 0;
  bool frozen_ = false;

  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
};

}  // namespace sig::nn
