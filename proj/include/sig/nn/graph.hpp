#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sig/nn/tensor.hpp"

namespace sig::nn {

/// Handle to a node of a Graph.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

/// Reverse-mode tape over the fused primitives below. A Graph lives for one
/// forward/backward pass; parameter leaves are cached per (store, name) so a
/// weight reused across time steps accumulates into a single gradient.
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Mat&)>;

  Graph() { nodes_.reserve(1024); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value);
  Var param(ParamStore& store, const std::string& name);
  /// Leaf that collects a gradient but belongs to no store.
  Var input(Mat value);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  /// Gradient of the last backward() target w.r.t. a leaf v; empty when none
  /// flowed. Intermediate gradients are released during backward().
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }
  double scalar(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and pushes gradients to every reachable node;
  /// parameter gradients are added to their stores.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by primitive implementations.
  Var emit(Mat value, bool requires_grad, Backward backward);
  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g.matrix();
    } else {
      n.grad += g.matrix();
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Backward backward;
  };
  struct Leaf {
    ParamStore* store;
    std::string name;
    Var var;
  };
  std::vector<Node> nodes_;
  std::vector<Leaf> leaves_;
  std::map<std::pair<const ParamStore*, std::string>, Var> leaf_cache_;
};

// ---------------------------------------------------------------------------
// Primitives. Row i of every operand is batch item i unless stated otherwise.

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
Var add_const(Graph& g, Var a, double c);

/// a · b
Var matmul(Graph& g, Var a, Var b);
/// x · Wᵀ (+ bias row broadcast when `bias` is valid). W is d_out × d_in.
Var linear(Graph& g, Var x, Var weight, Var bias = {});

Var relu(Graph& g, Var a);
Var leaky_relu(Graph& g, Var a, double slope);
Var tanh(Graph& g, Var a);
Var sigmoid(Graph& g, Var a);

Var concat_cols(Graph& g, std::span<const Var> parts);
Var concat_rows(Graph& g, std::span<const Var> parts);
Var slice_cols(Graph& g, Var a, Eigen::Index start, Eigen::Index len);
Var slice_rows(Graph& g, Var a, Eigen::Index start, Eigen::Index len);

/// Coordinate-wise max over consecutive groups of `group` rows.
Var group_max(Graph& g, Var a, Eigen::Index group);
/// Mean over consecutive groups of `group` rows.
Var group_mean(Graph& g, Var a, Eigen::Index group);
/// Mean of `blocks` stacked row blocks of equal height.
Var block_mean(Graph& g, Var a, Eigen::Index blocks);
/// Each row repeated `times` times consecutively.
Var repeat_rows(Graph& g, Var a, Eigen::Index times);
/// Whole matrix stacked `times` times.
Var tile_rows(Graph& g, Var a, Eigen::Index times);

/// Row-wise inner product, rows × 1.
Var rowwise_dot(Graph& g, Var a, Var b);
/// Scales row i of `a` by col(i); `col` is rows × 1.
Var mul_col(Graph& g, Var a, Var col);
/// Adds s(i) to every entry of row i; `col` is rows × 1.
Var add_col(Graph& g, Var a, Var col);
/// Row sums, rows × 1.
Var row_sum(Graph& g, Var a);

Var sum_all(Graph& g, Var a);
Var mean_all(Graph& g, Var a);

/// Σ (a − target)² over all entries, 1 × 1.
Var squared_error_sum(Graph& g, Var a, const Mat& target);

/// Row-wise softmax(logits / temperature). Throws RangeError when
/// temperature ≤ 0.
Var softmax_temperature(Graph& g, Var logits, double temperature);

/// Mean over rows of −Σ_j target_ij · log softmax(logits)_ij, 1 × 1.
Var softmax_cross_entropy(Graph& g, Var logits, const Mat& target);

/// Gathers rows of the embedding table for integer ids.
Var embed_ids(Graph& g, Var table, std::span<const int> ids);

/// τ^(−1/exp(raw)) for each entry of the rows × 1 constant `taus`;
/// `raw` is a 1 × 1 variable.
Var attenuation(Graph& g, Var raw, const Mat& taus);

/// W / σ̂ with σ̂ = ‖Wᵀu‖ (= uᵀWv, v = Wᵀu / ‖Wᵀu‖). `u` is held fixed.
/// When σ̂ < 1e-12 the weight passes through unchanged.
Var spectral_normalize(Graph& g, Var weight, const Mat& u);

struct LstmWeights {
  Var wx;       // 4d × d_in, gate blocks ordered input, forget, output, candidate
  Var wh;       // 4d × d
  Var bias;     // 1 × 4d, unused when layer norm is on
  Var ln_gain;  // 1 × 4d, optional
  Var ln_bias;  // 1 × 4d, optional
};

/// One LSTM step. `state` is rows × 2d holding [h | c]; returns the new
/// [h | c]. With ln_gain set, each gate block's pre-activation is normalized
/// to zero mean / unit variance per row before scale and shift.
Var lstm_step(Graph& g, Var x, Var state, const LstmWeights& w);

/// Epsilon inside the layer-norm square root.
inline constexpr double kLayerNormEps = 1e-10;

/// Per-row normalization of each of `blocks` equal column blocks to zero
/// mean and unit variance (the layer norm inside lstm_step, before gain and
/// shift). Optionally returns the inverse deviations, rows × blocks.
Mat normalize_blocks(const Mat& pre, Eigen::Index blocks, Mat* inv_sigma = nullptr);

struct BatchNormState {
  Mat* running_mean;  // 1 × d
  Mat* running_var;   // 1 × d
  double momentum = 0.9;
  double eps = 1e-5;
  bool train = true;
};

/// Batch normalization over rows. Train mode uses batch statistics and
/// updates running averages (running ← momentum·running + (1−momentum)·batch);
/// eval mode applies the running statistics.
Var batchnorm(Graph& g, Var x, Var gamma, Var beta, const BatchNormState& state);

}  // namespace sig::nn
