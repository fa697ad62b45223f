#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sig/nn/graph.hpp"
#include "sig/nn/layers.hpp"
#include "sig/nn/tensor.hpp"

namespace sig::metrics {

using nn::Mat;
using Sequence = std::vector<int>;

/// Entropy (nats) of action frequencies pooled over all sequences.
double marginal_entropy(std::span<const Sequence> sequences);
/// Mean over sequences of each sequence's action-frequency entropy (nats).
double conditional_entropy(std::span<const Sequence> sequences);

struct EntropyReport {
  double h_m = 0.0;
  double h_c = 0.0;
  double is = 1.0;  // exp(h_m − h_c)
};

EntropyReport entropy_report(std::span<const Sequence> sequences);
/// exp(h_m − h_c)
double inception_score(double h_m, double h_c);

/// Per-sequence action proportions, rows × num_actions.
Mat action_proportions(std::span<const Sequence> sequences, int num_actions);

// ---------------------------------------------------------------------------

struct GaussianStats {
  nn::ColVec mean;
  Eigen::MatrixXd cov;
};

inline constexpr double kCovRegularizer = 1e-6;

/// Sample mean and unbiased covariance of feature rows, plus
/// kCovRegularizer·I. Needs at least two rows.
GaussianStats fit_gaussian(const Mat& features);

/// ‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^½), the root taken through the
/// symmetric product Σ₁^½ Σ₂ Σ₁^½. Eigenvalues below −1e-8 raise
/// NumericalError; smaller negatives are clamped to zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// ---------------------------------------------------------------------------

struct InceptionConfig {
  int num_actions = 14;
  int d_h = 64;  // per direction
  int d_embed = 64;
  int feature_dim = 64;
  double leaky_slope = 0.2;
};

struct InceptionTrainConfig {
  double lr = 1e-3;
  int batch_size = 64;
  int max_epochs = 2000;
  int patience = 50;
  double min_delta = 1e-4;
  double val_fraction = 0.1;
  std::uint64_t seed = 7;
};

struct InceptionTrainReport {
  int epochs = 0;
  double best_val_loss = 0.0;
  double final_train_loss = 0.0;
};

/// Bidirectional LSTM encoder with an MLP head predicting each sequence's
/// action proportions. The penultimate activation (feature_dim wide) is the
/// feature space for SFID.
class InceptionModel {
 public:
  InceptionModel(const InceptionConfig& cfg, std::uint64_t seed);

  const InceptionConfig& config() const noexcept { return cfg_; }
  nn::ParamStore& store() noexcept { return store_; }
  const nn::ParamStore& store() const noexcept { return store_; }

  struct Forward {
    nn::Var features;  // rows × feature_dim
    nn::Var logits;    // rows × num_actions
  };
  /// `tokens` rows are equal-length sequences.
  Forward forward(nn::Graph& g, const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& tokens);

  /// Evaluation without gradients; sequences may differ in length.
  Mat features(std::span<const Sequence> sequences);
  Mat predict(std::span<const Sequence> sequences);

  void save(const std::filesystem::path& path) const;
  /// Reads a checkpoint written by save(); throws InputError when the file
  /// holds a different model kind or dimensions.
  static InceptionModel load(const std::filesystem::path& path);

 private:
  InceptionConfig cfg_;
  nn::ParamStore store_;
  nn::Embedding embed_;
  nn::LstmCell fwd_, bwd_;
  nn::SpectralLinear hidden_, out_;
};

/// Fits the model to per-sequence action proportions (cross-entropy) with
/// Adam until validation loss stops improving by min_delta for `patience`
/// epochs or max_epochs is reached. Needs at least 100 sequences.
InceptionTrainReport inception_train(InceptionModel& model, std::span<const Sequence> sequences,
                                     const InceptionTrainConfig& cfg);

/// Fréchet distance between Gaussian fits of the model features of two
/// sequence sets; each set needs more than feature_dim sequences.
double sfid(std::span<const Sequence> real, std::span<const Sequence> generated, InceptionModel& model);

}  // namespace sig::metrics
