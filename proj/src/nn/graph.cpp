#include "sig/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "sig/errors.hpp"

namespace sig::nn {

namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

bool any_grad(const Graph& g, std::initializer_list<Var> vars) {
  for (Var v : vars) {
    if (v.valid() && g.requires_grad(v)) return true;
  }
  return false;
}

// Forward kernels evaluate every element of a row through the same code path
// whatever the row's position or alignment. Eigen's own expressions switch
// between packet and scalar paths by address, so permuting batch rows would
// otherwise perturb the last bits.

using Packet = Eigen::internal::packet_traits<double>::type;
constexpr Eigen::Index kPacket = Eigen::internal::packet_traits<double>::size;

/// Applies a packet function to n contiguous values. The ragged end goes
/// through a padded packet so no element takes a scalar path.
template <typename Op>
void map_packets(double* p, Eigen::Index n, Op op) {
  using namespace Eigen::internal;
  Eigen::Index j = 0;
  for (; j + kPacket <= n; j += kPacket) pstoreu(p + j, op(ploadu<Packet>(p + j)));
  if (j < n) {
    double buf[kPacket] = {};
    std::copy(p + j, p + n, buf);
    pstoreu(buf, op(ploadu<Packet>(buf)));
    std::copy(buf, buf + (n - j), p + j);
  }
}

Packet packet_exp(const Packet& x) { return Eigen::internal::pexp(x); }

Packet packet_sigmoid(const Packet& x) {
  using namespace Eigen::internal;
  const Packet one = pset1<Packet>(1.0);
  return pdiv(one, padd(one, pexp(pnegate(x))));
}

/// tanh(x) = 2·σ(2x) − 1
Packet packet_tanh(const Packet& x) {
  using namespace Eigen::internal;
  const Packet two = pset1<Packet>(2.0);
  return psub(pmul(two, packet_sigmoid(pmul(two, x))), pset1<Packet>(1.0));
}

/// Applies op to columns [col, col + width) of every row.
template <typename Op>
void map_cols(Mat& m, Eigen::Index col, Eigen::Index width, Op op) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) map_packets(m.data() + r * m.cols() + col, width, op);
}

void map_all(Mat& m, Packet (*op)(const Packet&)) { map_cols(m, 0, m.cols(), op); }

/// out += a·wᵀ. Each element is a packet dot product over k with a fixed
/// reduction tree and a fused scalar tail, the same for every row.
template <typename Lhs>
void accumulate_product_t(const Lhs& a, const Mat& w, Mat& out) {
  using namespace Eigen::internal;
  const Eigen::Index depth = a.cols();
  const Eigen::Index n = w.rows();
  const Eigen::Index body = depth - depth % kPacket;
  const Packet zero = pset1<Packet>(0.0);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double* x = a.data() + r * a.outerStride();
    double* o = out.data() + r * n;
    Eigen::Index j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* w0 = w.data() + j * depth;
      const double* w1 = w0 + depth;
      const double* w2 = w1 + depth;
      const double* w3 = w2 + depth;
      Packet c0 = zero, c1 = zero, c2 = zero, c3 = zero;
      for (Eigen::Index k = 0; k < body; k += kPacket) {
        const Packet xk = ploadu<Packet>(x + k);
        c0 = pmadd(xk, ploadu<Packet>(w0 + k), c0);
        c1 = pmadd(xk, ploadu<Packet>(w1 + k), c1);
        c2 = pmadd(xk, ploadu<Packet>(w2 + k), c2);
        c3 = pmadd(xk, ploadu<Packet>(w3 + k), c3);
      }
      double s0 = predux(c0), s1 = predux(c1), s2 = predux(c2), s3 = predux(c3);
      for (Eigen::Index k = body; k < depth; ++k) {
        s0 = std::fma(x[k], w0[k], s0);
        s1 = std::fma(x[k], w1[k], s1);
        s2 = std::fma(x[k], w2[k], s2);
        s3 = std::fma(x[k], w3[k], s3);
      }
      o[j] += s0;
      o[j + 1] += s1;
      o[j + 2] += s2;
      o[j + 3] += s3;
    }
    for (; j < n; ++j) {
      const double* wj = w.data() + j * depth;
      Packet c = zero;
      for (Eigen::Index k = 0; k < body; k += kPacket) c = pmadd(ploadu<Packet>(x + k), ploadu<Packet>(wj + k), c);
      double sj = predux(c);
      for (Eigen::Index k = body; k < depth; ++k) sj = std::fma(x[k], wj[k], sj);
      o[j] += sj;
    }
  }
}

/// out += a·b with b row-major. Every element is a chain of fused multiply-adds
/// over k in order, whichever register tile or tail handles its column.
template <typename Lhs>
void accumulate_product(const Lhs& a, const Mat& b, Mat& out) {
  using Eigen::internal::pmadd;
  using Eigen::internal::ploadu;
  using Eigen::internal::pset1;
  using Eigen::internal::pstoreu;
  constexpr Eigen::Index P = kPacket;
  const Eigen::Index n = b.cols();
  const Eigen::Index depth = a.cols();
  const double* bd = b.data();
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double* o = out.data() + r * n;
    Eigen::Index j = 0;
    for (; j + 4 * P <= n; j += 4 * P) {
      Packet c0 = ploadu<Packet>(o + j), c1 = ploadu<Packet>(o + j + P);
      Packet c2 = ploadu<Packet>(o + j + 2 * P), c3 = ploadu<Packet>(o + j + 3 * P);
      for (Eigen::Index k = 0; k < depth; ++k) {
        const Packet s = pset1<Packet>(a(r, k));
        const double* br = bd + k * n + j;
        c0 = pmadd(s, ploadu<Packet>(br), c0);
        c1 = pmadd(s, ploadu<Packet>(br + P), c1);
        c2 = pmadd(s, ploadu<Packet>(br + 2 * P), c2);
        c3 = pmadd(s, ploadu<Packet>(br + 3 * P), c3);
      }
      pstoreu(o + j, c0);
      pstoreu(o + j + P, c1);
      pstoreu(o + j + 2 * P, c2);
      pstoreu(o + j + 3 * P, c3);
    }
    for (; j + P <= n; j += P) {
      Packet c = ploadu<Packet>(o + j);
      for (Eigen::Index k = 0; k < depth; ++k) c = pmadd(pset1<Packet>(a(r, k)), ploadu<Packet>(bd + k * n + j), c);
      pstoreu(o + j, c);
    }
    for (; j < n; ++j) {
      double c = o[j];
      for (Eigen::Index k = 0; k < depth; ++k) c = std::fma(a(r, k), bd[k * n + j], c);
      o[j] = c;
    }
  }
}

double row_total(const double* p, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) s += p[j];
  return s;
}

}  // namespace

Var Graph::constant(Mat value) { return emit(std::move(value), false, nullptr); }

Var Graph::input(Mat value) { return emit(std::move(value), true, nullptr); }

Var Graph::param(ParamStore& store, const std::string& name) {
  const auto key = std::make_pair(static_cast<const ParamStore*>(&store), name);
  if (auto it = leaf_cache_.find(key); it != leaf_cache_.end()) return it->second;
  Var v = emit(store.value(name), !store.frozen(), nullptr);
  leaf_cache_.emplace(key, v);
  if (!store.frozen()) leaves_.push_back({&store, name, v});
  return v;
}

double Graph::scalar(Var v) const {
  const Mat& m = value(v);
  if (m.size() != 1) throw ShapeError("scalar(): node is not 1x1");
  return m(0, 0);
}

Var Graph::emit(Mat value, bool requires_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Graph::backward(Var loss) {
  if (value(loss).size() != 1) throw ShapeError("backward(): loss must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Mat::Ones(1, 1);
  for (std::int64_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0 || !n.backward) continue;
    // The closure may accumulate into earlier nodes only, so n stays valid.
    n.backward(*this, n.grad);
    n.grad = Mat();
  }
  for (const Leaf& leaf : leaves_) {
    const Mat& gr = nodes_[leaf.var.id].grad;
    if (gr.size() != 0) leaf.store->grad(leaf.name) += gr;
  }
}

// ---------------------------------------------------------------------------

Var add(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "add");
  return g.emit(g.value(a) + g.value(b), any_grad(g, {a, b}), [a, b](Graph& gr, const Mat& d) {
    gr.accumulate(a, d);
    gr.accumulate(b, d);
  });
}

Var sub(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "sub");
  return g.emit(g.value(a) - g.value(b), any_grad(g, {a, b}), [a, b](Graph& gr, const Mat& d) {
    gr.accumulate(a, d);
    gr.accumulate(b, -d);
  });
}

Var mul(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "mul");
  return g.emit(g.value(a).cwiseProduct(g.value(b)), any_grad(g, {a, b}),
                [a, b](Graph& gr, const Mat& d) {
                  if (gr.requires_grad(a)) gr.accumulate(a, d.cwiseProduct(gr.value(b)));
                  if (gr.requires_grad(b)) gr.accumulate(b, d.cwiseProduct(gr.value(a)));
                });
}

Var scale(Graph& g, Var a, double s) {
  return g.emit(g.value(a) * s, g.requires_grad(a),
                [a, s](Graph& gr, const Mat& d) { gr.accumulate(a, d * s); });
}

Var add_const(Graph& g, Var a, double c) {
  return g.emit(g.value(a).array() + c, g.requires_grad(a),
                [a](Graph& gr, const Mat& d) { gr.accumulate(a, d); });
}

Var matmul(Graph& g, Var a, Var b) {
  const Mat& A = g.value(a);
  const Mat& B = g.value(b);
  if (A.cols() != B.rows()) throw ShapeError("matmul: inner dimensions differ");
  Mat out = Mat::Zero(A.rows(), B.cols());
  accumulate_product(A, B, out);
  return g.emit(std::move(out), any_grad(g, {a, b}), [a, b](Graph& gr, const Mat& d) {
    if (gr.requires_grad(a)) {
      Mat da(d.rows(), gr.value(b).rows());
      da.noalias() = d * gr.value(b).transpose();
      gr.accumulate(a, da);
    }
    if (gr.requires_grad(b)) {
      Mat db(gr.value(a).cols(), d.cols());
      db.noalias() = gr.value(a).transpose() * d;
      gr.accumulate(b, db);
    }
  });
}

Var linear(Graph& g, Var x, Var weight, Var bias) {
  const Mat& X = g.value(x);
  const Mat& W = g.value(weight);
  if (X.cols() != W.cols()) {
    throw ShapeError("linear: input width " + std::to_string(X.cols()) + " does not match weight " +
                     std::to_string(W.rows()) + "x" + std::to_string(W.cols()));
  }
  Mat out = Mat::Zero(X.rows(), W.rows());
  accumulate_product_t(X, W, out);
  if (bias.valid()) {
    const Mat& b = g.value(bias);
    if (b.rows() != 1 || b.cols() != W.rows()) throw ShapeError("linear: bias shape");
    out.rowwise() += b.row(0);
  }
  return g.emit(std::move(out), any_grad(g, {x, weight, bias}),
                [x, weight, bias](Graph& gr, const Mat& d) {
                  if (gr.requires_grad(x)) {
                    Mat dx(d.rows(), gr.value(weight).cols());
                    dx.noalias() = d * gr.value(weight);
                    gr.accumulate(x, dx);
                  }
                  if (gr.requires_grad(weight)) {
                    Mat dw(d.cols(), gr.value(x).cols());
                    dw.noalias() = d.transpose() * gr.value(x);
                    gr.accumulate(weight, dw);
                  }
                  if (bias.valid() && gr.requires_grad(bias)) {
                    gr.accumulate(bias, d.colwise().sum());
                  }
                });
}

Var relu(Graph& g, Var a) {
  return g.emit(g.value(a).cwiseMax(0.0), g.requires_grad(a), [a](Graph& gr, const Mat& d) {
    gr.accumulate(a, (gr.value(a).array() > 0.0).select(d, 0.0));
  });
}

Var leaky_relu(Graph& g, Var a, double slope) {
  const Mat& A = g.value(a);
  Mat out = (A.array() > 0.0).select(A, A * slope);
  return g.emit(std::move(out), g.requires_grad(a), [a, slope](Graph& gr, const Mat& d) {
    gr.accumulate(a, (gr.value(a).array() > 0.0).select(d, d * slope));
  });
}

Var tanh(Graph& g, Var a) {
  Mat out = g.value(a);
  map_all(out, packet_tanh);
  auto y = std::make_shared<Mat>(out);
  return g.emit(std::move(out), g.requires_grad(a), [a, y](Graph& gr, const Mat& d) {
    gr.accumulate(a, d.array() * (1.0 - y->array().square()));
  });
}

Var sigmoid(Graph& g, Var a) {
  Mat out = g.value(a);
  map_all(out, packet_sigmoid);
  auto y = std::make_shared<Mat>(out);
  return g.emit(std::move(out), g.requires_grad(a), [a, y](Graph& gr, const Mat& d) {
    gr.accumulate(a, d.array() * y->array() * (1.0 - y->array()));
  });
}

Var concat_cols(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = g.value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Var p : parts) {
    if (g.value(p).rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += g.value(p).cols();
    rg = rg || g.requires_grad(p);
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    const Mat& v = g.value(p);
    out.middleCols(at, v.cols()) = v;
    at += v.cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return g.emit(std::move(out), rg, [ins](Graph& gr, const Mat& d) {
    Eigen::Index at2 = 0;
    for (Var p : ins) {
      const Eigen::Index c = gr.value(p).cols();
      if (gr.requires_grad(p)) gr.accumulate(p, d.middleCols(at2, c));
      at2 += c;
    }
  });
}

Var concat_rows(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = g.value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (Var p : parts) {
    if (g.value(p).cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += g.value(p).rows();
    rg = rg || g.requires_grad(p);
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    const Mat& v = g.value(p);
    out.middleRows(at, v.rows()) = v;
    at += v.rows();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return g.emit(std::move(out), rg, [ins](Graph& gr, const Mat& d) {
    Eigen::Index at2 = 0;
    for (Var p : ins) {
      const Eigen::Index r = gr.value(p).rows();
      if (gr.requires_grad(p)) gr.accumulate(p, d.middleRows(at2, r));
      at2 += r;
    }
  });
}

Var slice_cols(Graph& g, Var a, Eigen::Index start, Eigen::Index len) {
  const Mat& A = g.value(a);
  if (start < 0 || len < 0 || start + len > A.cols()) throw ShapeError("slice_cols: out of range");
  const Eigen::Index cols = A.cols();
  return g.emit(A.middleCols(start, len), g.requires_grad(a),
                [a, start, len, cols](Graph& gr, const Mat& d) {
                  Mat full = Mat::Zero(d.rows(), cols);
                  full.middleCols(start, len) = d;
                  gr.accumulate(a, full);
                });
}

Var slice_rows(Graph& g, Var a, Eigen::Index start, Eigen::Index len) {
  const Mat& A = g.value(a);
  if (start < 0 || len < 0 || start + len > A.rows()) throw ShapeError("slice_rows: out of range");
  const Eigen::Index rows = A.rows();
  return g.emit(A.middleRows(start, len), g.requires_grad(a),
                [a, start, len, rows](Graph& gr, const Mat& d) {
                  Mat full = Mat::Zero(rows, d.cols());
                  full.middleRows(start, len) = d;
                  gr.accumulate(a, full);
                });
}

Var group_max(Graph& g, Var a, Eigen::Index group) {
  const Mat& A = g.value(a);
  if (group <= 0 || A.rows() % group != 0) throw ShapeError("group_max: rows not divisible by group");
  const Eigen::Index out_rows = A.rows() / group;
  Mat out(out_rows, A.cols());
  auto arg = std::make_shared<std::vector<Eigen::Index>>(static_cast<std::size_t>(out.size()));
  for (Eigen::Index r = 0; r < out_rows; ++r) {
    for (Eigen::Index c = 0; c < A.cols(); ++c) {
      Eigen::Index best = r * group;
      for (Eigen::Index k = 1; k < group; ++k) {
        if (A(r * group + k, c) > A(best, c)) best = r * group + k;
      }
      out(r, c) = A(best, c);
      (*arg)[static_cast<std::size_t>(r * A.cols() + c)] = best;
    }
  }
  const Eigen::Index in_rows = A.rows();
  return g.emit(std::move(out), g.requires_grad(a), [a, arg, in_rows](Graph& gr, const Mat& d) {
    Mat full = Mat::Zero(in_rows, d.cols());
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      for (Eigen::Index c = 0; c < d.cols(); ++c) {
        full((*arg)[static_cast<std::size_t>(r * d.cols() + c)], c) += d(r, c);
      }
    }
    gr.accumulate(a, full);
  });
}

Var group_mean(Graph& g, Var a, Eigen::Index group) {
  const Mat& A = g.value(a);
  if (group <= 0 || A.rows() % group != 0) throw ShapeError("group_mean: rows not divisible by group");
  const Eigen::Index out_rows = A.rows() / group;
  Mat out = Mat::Zero(out_rows, A.cols());
  for (Eigen::Index r = 0; r < out_rows; ++r) {
    for (Eigen::Index k = 0; k < group; ++k) out.row(r) += A.row(r * group + k);
  }
  out /= static_cast<double>(group);
  return g.emit(std::move(out), g.requires_grad(a), [a, group](Graph& gr, const Mat& d) {
    Mat full(d.rows() * group, d.cols());
    const double inv = 1.0 / static_cast<double>(group);
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      for (Eigen::Index k = 0; k < group; ++k) full.row(r * group + k) = d.row(r) * inv;
    }
    gr.accumulate(a, full);
  });
}

Var block_mean(Graph& g, Var a, Eigen::Index blocks) {
  const Mat& A = g.value(a);
  if (blocks <= 0 || A.rows() % blocks != 0) throw ShapeError("block_mean: rows not divisible by blocks");
  const Eigen::Index h = A.rows() / blocks;
  Mat out = A.topRows(h);
  for (Eigen::Index k = 1; k < blocks; ++k) out += A.middleRows(k * h, h);
  out /= static_cast<double>(blocks);
  return g.emit(std::move(out), g.requires_grad(a), [a, blocks](Graph& gr, const Mat& d) {
    Mat full(d.rows() * blocks, d.cols());
    const Mat part = d / static_cast<double>(blocks);
    for (Eigen::Index k = 0; k < blocks; ++k) full.middleRows(k * d.rows(), d.rows()) = part;
    gr.accumulate(a, full);
  });
}

Var repeat_rows(Graph& g, Var a, Eigen::Index times) {
  const Mat& A = g.value(a);
  if (times <= 0) throw ShapeError("repeat_rows: times must be positive");
  Mat out(A.rows() * times, A.cols());
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    for (Eigen::Index k = 0; k < times; ++k) out.row(r * times + k) = A.row(r);
  }
  return g.emit(std::move(out), g.requires_grad(a), [a, times](Graph& gr, const Mat& d) {
    Mat acc = Mat::Zero(d.rows() / times, d.cols());
    for (Eigen::Index r = 0; r < acc.rows(); ++r) {
      for (Eigen::Index k = 0; k < times; ++k) acc.row(r) += d.row(r * times + k);
    }
    gr.accumulate(a, acc);
  });
}

Var tile_rows(Graph& g, Var a, Eigen::Index times) {
  const Mat& A = g.value(a);
  if (times <= 0) throw ShapeError("tile_rows: times must be positive");
  Mat out(A.rows() * times, A.cols());
  for (Eigen::Index k = 0; k < times; ++k) out.middleRows(k * A.rows(), A.rows()) = A;
  const Eigen::Index h = A.rows();
  return g.emit(std::move(out), g.requires_grad(a), [a, times, h](Graph& gr, const Mat& d) {
    Mat acc = d.topRows(h);
    for (Eigen::Index k = 1; k < times; ++k) acc += d.middleRows(k * h, h);
    gr.accumulate(a, acc);
  });
}

Var rowwise_dot(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "rowwise_dot");
  const Mat prod = g.value(a).cwiseProduct(g.value(b));
  Mat out(prod.rows(), 1);
  for (Eigen::Index r = 0; r < prod.rows(); ++r) out(r, 0) = row_total(prod.row(r).data(), prod.cols());
  return g.emit(std::move(out), any_grad(g, {a, b}), [a, b](Graph& gr, const Mat& d) {
    if (gr.requires_grad(a)) {
      Mat da = gr.value(b);
      da.array().colwise() *= d.col(0).array();
      gr.accumulate(a, da);
    }
    if (gr.requires_grad(b)) {
      Mat db = gr.value(a);
      db.array().colwise() *= d.col(0).array();
      gr.accumulate(b, db);
    }
  });
}

Var mul_col(Graph& g, Var a, Var col) {
  const Mat& A = g.value(a);
  const Mat& C = g.value(col);
  if (C.cols() != 1 || C.rows() != A.rows()) throw ShapeError("mul_col: column shape");
  Mat out = A;
  out.array().colwise() *= C.col(0).array();
  return g.emit(std::move(out), any_grad(g, {a, col}), [a, col](Graph& gr, const Mat& d) {
    if (gr.requires_grad(a)) {
      Mat da = d;
      da.array().colwise() *= gr.value(col).col(0).array();
      gr.accumulate(a, da);
    }
    if (gr.requires_grad(col)) {
      gr.accumulate(col, d.cwiseProduct(gr.value(a)).rowwise().sum());
    }
  });
}

Var add_col(Graph& g, Var a, Var col) {
  const Mat& A = g.value(a);
  const Mat& C = g.value(col);
  if (C.cols() != 1 || C.rows() != A.rows()) throw ShapeError("add_col: column shape");
  Mat out = A;
  out.colwise() += C.col(0);
  return g.emit(std::move(out), any_grad(g, {a, col}), [a, col](Graph& gr, const Mat& d) {
    gr.accumulate(a, d);
    if (gr.requires_grad(col)) gr.accumulate(col, d.rowwise().sum());
  });
}

Var row_sum(Graph& g, Var a) {
  const Mat& A = g.value(a);
  Mat out(A.rows(), 1);
  for (Eigen::Index r = 0; r < A.rows(); ++r) out(r, 0) = row_total(A.row(r).data(), A.cols());
  const Eigen::Index cols = A.cols();
  return g.emit(std::move(out), g.requires_grad(a), [a, cols](Graph& gr, const Mat& d) {
    Mat full(d.rows(), cols);
    full.colwise() = d.col(0);
    gr.accumulate(a, full);
  });
}

Var sum_all(Graph& g, Var a) {
  Mat out(1, 1);
  out(0, 0) = g.value(a).sum();
  const auto rows = g.value(a).rows();
  const auto cols = g.value(a).cols();
  return g.emit(std::move(out), g.requires_grad(a), [a, rows, cols](Graph& gr, const Mat& d) {
    gr.accumulate(a, Mat::Constant(rows, cols, d(0, 0)));
  });
}

Var mean_all(Graph& g, Var a) {
  const double n = static_cast<double>(g.value(a).size());
  if (n == 0) throw ShapeError("mean_all: empty input");
  return scale(g, sum_all(g, a), 1.0 / n);
}

Var squared_error_sum(Graph& g, Var a, const Mat& target) {
  require_same_shape(g.value(a), target, "squared_error_sum");
  auto diff = std::make_shared<Mat>(g.value(a) - target);
  Mat out(1, 1);
  out(0, 0) = diff->squaredNorm();
  return g.emit(std::move(out), g.requires_grad(a), [a, diff](Graph& gr, const Mat& d) {
    gr.accumulate(a, *diff * (2.0 * d(0, 0)));
  });
}

Var softmax_temperature(Graph& g, Var logits, double temperature) {
  if (!(temperature > 0.0)) throw RangeError("softmax temperature must be positive");
  const Mat& Z = g.value(logits);
  Mat y = Z / temperature;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    double* p = y.row(r).data();
    for (Eigen::Index c = 0; c < y.cols(); ++c) p[c] -= m;
    map_packets(p, y.cols(), packet_exp);
    const double total = row_total(p, y.cols());
    for (Eigen::Index c = 0; c < y.cols(); ++c) p[c] /= total;
  }
  auto out = std::make_shared<Mat>(y);
  return g.emit(std::move(y), g.requires_grad(logits),
                [logits, out, temperature](Graph& gr, const Mat& d) {
                  const Mat& Y = *out;
                  Mat dz = Y.cwiseProduct(d);
                  const ColVec s = dz.rowwise().sum();
                  dz -= (Y.array().colwise() * s.array()).matrix();
                  gr.accumulate(logits, dz / temperature);
                });
}

Var softmax_cross_entropy(Graph& g, Var logits, const Mat& target) {
  require_same_shape(g.value(logits), target, "softmax_cross_entropy");
  const Mat& Z = g.value(logits);
  auto p = std::make_shared<Mat>(Z.rows(), Z.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < Z.rows(); ++r) {
    const double m = Z.row(r).maxCoeff();
    const double lse = m + std::log((Z.row(r).array() - m).exp().sum());
    p->row(r) = (Z.row(r).array() - lse).exp();
    loss -= (target.row(r).array() * (Z.row(r).array() - lse)).sum();
  }
  const double rows = static_cast<double>(Z.rows());
  Mat out(1, 1);
  out(0, 0) = loss / rows;
  Mat t = target;
  return g.emit(std::move(out), g.requires_grad(logits),
                [logits, p, t = std::move(t), rows](Graph& gr, const Mat& d) {
                  // d/dz of −Σ t log softmax(z) = softmax(z)·Σt − t
                  Mat dz = *p;
                  dz.array().colwise() *= t.rowwise().sum().array();
                  dz -= t;
                  gr.accumulate(logits, dz * (d(0, 0) / rows));
                });
}

Var embed_ids(Graph& g, Var table, std::span<const int> ids) {
  const Mat& E = g.value(table);
  Mat out(static_cast<Eigen::Index>(ids.size()), E.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= E.rows()) throw RangeError("embed_ids: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = E.row(ids[i]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const auto rows = E.rows();
  return g.emit(std::move(out), g.requires_grad(table),
                [table, idv = std::move(idv), rows](Graph& gr, const Mat& d) {
                  Mat full = Mat::Zero(rows, d.cols());
                  for (std::size_t i = 0; i < idv.size(); ++i) {
                    full.row(idv[i]) += d.row(static_cast<Eigen::Index>(i));
                  }
                  gr.accumulate(table, full);
                });
}

Var attenuation(Graph& g, Var raw, const Mat& taus) {
  if (g.value(raw).size() != 1) throw ShapeError("attenuation: raw must be 1x1");
  if (taus.cols() != 1) throw ShapeError("attenuation: taus must be a column");
  if ((taus.array() < 1.0).any()) throw RangeError("attenuation: chunk offsets start at 1");
  const double inv_beta = std::exp(-g.scalar(raw));
  auto log_tau = std::make_shared<Mat>(taus.array().log());
  auto out = std::make_shared<Mat>((-inv_beta * log_tau->array()).exp());
  Mat val = *out;
  return g.emit(std::move(val), g.requires_grad(raw),
                [raw, log_tau, out, inv_beta](Graph& gr, const Mat& d) {
                  // a = exp(−ln τ · e^{−r}),  da/dr = a · ln τ · e^{−r}
                  Mat dr(1, 1);
                  dr(0, 0) = (d.array() * out->array() * log_tau->array()).sum() * inv_beta;
                  gr.accumulate(raw, dr);
                });
}

Var spectral_normalize(Graph& g, Var weight, const Mat& u) {
  const Mat& W = g.value(weight);
  if (u.rows() != 1 || u.cols() != W.rows()) throw ShapeError("spectral_normalize: u shape");
  RowVec wtu = u.row(0) * W;  // (Wᵀu)ᵀ
  const double sigma = wtu.norm();
  if (sigma < 1e-12) {
    return g.emit(W, g.requires_grad(weight), [weight](Graph& gr, const Mat& d) { gr.accumulate(weight, d); });
  }
  RowVec v = wtu / sigma;
  Mat out = W / sigma;
  auto wbar = std::make_shared<Mat>(out);
  RowVec uu = u.row(0);
  return g.emit(std::move(out), g.requires_grad(weight),
                [weight, wbar, uu, v, sigma](Graph& gr, const Mat& d) {
                  // ∂L/∂W = (G − ⟨G, W̄⟩ u vᵀ) / σ
                  const double inner = d.cwiseProduct(*wbar).sum();
                  Mat dw = d;
                  dw.noalias() -= inner * (uu.transpose() * v);
                  gr.accumulate(weight, dw / sigma);
                });
}

// ---------------------------------------------------------------------------

namespace {

struct LstmCache {
  Mat gates;      // activated gates [i f o c~]
  Mat normed;     // layer-normed pre-activations (when ln on)
  Mat inv_sigma;  // rows × 4
  Mat tanh_c;     // tanh(c')
};

}  // namespace

Mat normalize_blocks(const Mat& pre, Eigen::Index blocks, Mat* inv_sigma) {
  if (blocks < 1 || pre.cols() % blocks != 0) throw ShapeError("normalize_blocks: width not divisible by blocks");
  const Eigen::Index d = pre.cols() / blocks;
  Mat out(pre.rows(), pre.cols());
  if (inv_sigma) inv_sigma->resize(pre.rows(), blocks);
  for (Eigen::Index r = 0; r < pre.rows(); ++r) {
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const double* seg = pre.row(r).data() + b * d;
      double* dst = out.row(r).data() + b * d;
      const double mean = row_total(seg, d) / static_cast<double>(d);
      double var = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) var += (seg[j] - mean) * (seg[j] - mean);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      if (inv_sigma) (*inv_sigma)(r, b) = inv;
      for (Eigen::Index j = 0; j < d; ++j) dst[j] = (seg[j] - mean) * inv;
    }
  }
  return out;
}

Var lstm_step(Graph& g, Var x, Var state, const LstmWeights& w) {
  const Mat& X = g.value(x);
  const Mat& S = g.value(state);
  const Mat& Wx = g.value(w.wx);
  const Mat& Wh = g.value(w.wh);
  const Eigen::Index d = Wh.cols();
  const Eigen::Index rows = X.rows();
  if (Wx.rows() != 4 * d || Wh.rows() != 4 * d) throw ShapeError("lstm_step: gate weight rows");
  if (Wx.cols() != X.cols()) throw ShapeError("lstm_step: input width mismatch");
  if (S.rows() != rows || S.cols() != 2 * d) throw ShapeError("lstm_step: state must be rows x 2d");
  const bool ln = w.ln_gain.valid();

  Mat pre = Mat::Zero(rows, 4 * d);
  accumulate_product_t(X, Wx, pre);
  accumulate_product_t(S.leftCols(d), Wh, pre);

  auto cache = std::make_shared<LstmCache>();
  if (ln) {
    const Mat& gain = g.value(w.ln_gain);
    const Mat& shift = g.value(w.ln_bias);
    cache->normed = normalize_blocks(pre, 4, &cache->inv_sigma);
    pre = cache->normed;
    pre.array().rowwise() *= gain.row(0).array();
    pre.rowwise() += shift.row(0);
  } else if (w.bias.valid()) {
    pre.rowwise() += g.value(w.bias).row(0);
  }

  Mat& gates = pre;
  map_cols(gates, 0, 3 * d, packet_sigmoid);
  map_cols(gates, 3 * d, d, packet_tanh);

  Mat out(rows, 2 * d);
  auto c_new = out.rightCols(d);
  c_new = gates.middleCols(d, d).cwiseProduct(S.rightCols(d)) +
          gates.leftCols(d).cwiseProduct(gates.rightCols(d));
  cache->tanh_c = c_new;
  map_all(cache->tanh_c, packet_tanh);
  out.leftCols(d) = gates.middleCols(2 * d, d).cwiseProduct(cache->tanh_c);
  cache->gates = std::move(gates);

  const bool rg = any_grad(g, {x, state, w.wx, w.wh, w.bias, w.ln_gain, w.ln_bias});
  return g.emit(std::move(out), rg, [x, state, w, cache, d, ln](Graph& gr, const Mat& dout) {
    const Mat& G = cache->gates;
    const Mat& S0 = gr.value(state);
    const auto dh = dout.leftCols(d);
    const auto dc = dout.rightCols(d);
    const auto gi = G.leftCols(d);
    const auto gf = G.middleCols(d, d);
    const auto go = G.middleCols(2 * d, d);
    const auto gc = G.rightCols(d);

    Mat dc_tot = dc + (dh.array() * go.array() * (1.0 - cache->tanh_c.array().square())).matrix();
    Mat da(G.rows(), 4 * d);
    da.leftCols(d) = (dc_tot.array() * gc.array() * gi.array() * (1.0 - gi.array())).matrix();
    da.middleCols(d, d) = (dc_tot.array() * S0.rightCols(d).array() * gf.array() * (1.0 - gf.array())).matrix();
    da.middleCols(2 * d, d) = (dh.array() * cache->tanh_c.array() * go.array() * (1.0 - go.array())).matrix();
    da.rightCols(d) = (dc_tot.array() * gi.array() * (1.0 - gc.array().square())).matrix();

    Mat dpre;
    if (ln) {
      const Mat& nrm = cache->normed;
      if (gr.requires_grad(w.ln_gain)) gr.accumulate(w.ln_gain, da.cwiseProduct(nrm).colwise().sum());
      if (gr.requires_grad(w.ln_bias)) gr.accumulate(w.ln_bias, da.colwise().sum());
      Mat dn = da;
      dn.array().rowwise() *= gr.value(w.ln_gain).row(0).array();
      dpre.resize(dn.rows(), dn.cols());
      for (Eigen::Index r = 0; r < dn.rows(); ++r) {
        for (Eigen::Index b = 0; b < 4; ++b) {
          const auto dseg = dn.row(r).segment(b * d, d);
          const auto nseg = nrm.row(r).segment(b * d, d);
          const double mdn = dseg.mean();
          const double mdnn = dseg.cwiseProduct(nseg).mean();
          dpre.row(r).segment(b * d, d) =
              cache->inv_sigma(r, b) * (dseg.array() - mdn - nseg.array() * mdnn);
        }
      }
    } else {
      if (w.bias.valid() && gr.requires_grad(w.bias)) gr.accumulate(w.bias, da.colwise().sum());
      dpre = std::move(da);
    }

    if (gr.requires_grad(x)) {
      Mat dx(dpre.rows(), gr.value(w.wx).cols());
      dx.noalias() = dpre * gr.value(w.wx);
      gr.accumulate(x, dx);
    }
    if (gr.requires_grad(state)) {
      Mat ds(dpre.rows(), 2 * d);
      ds.leftCols(d).noalias() = dpre * gr.value(w.wh);
      ds.rightCols(d) = dc_tot.cwiseProduct(gf);
      gr.accumulate(state, ds);
    }
    if (gr.requires_grad(w.wx)) {
      Mat dwx(4 * d, gr.value(x).cols());
      dwx.noalias() = dpre.transpose() * gr.value(x);
      gr.accumulate(w.wx, dwx);
    }
    if (gr.requires_grad(w.wh)) {
      Mat dwh(4 * d, d);
      dwh.noalias() = dpre.transpose() * S0.leftCols(d);
      gr.accumulate(w.wh, dwh);
    }
  });
}

Var batchnorm(Graph& g, Var x, Var gamma, Var beta, const BatchNormState& st) {
  const Mat& X = g.value(x);
  const Eigen::Index d = X.cols();
  const Mat& ga = g.value(gamma);
  const Mat& be = g.value(beta);
  if (ga.cols() != d || be.cols() != d) throw ShapeError("batchnorm: parameter width");
  auto xhat = std::make_shared<Mat>();
  auto inv_std = std::make_shared<RowVec>();
  const bool train = st.train;
  if (train) {
    if (X.rows() < 2) throw ShapeError("batchnorm: train mode needs at least two rows");
    const RowVec mean = X.colwise().mean();
    Mat centered = X.rowwise() - mean;
    const RowVec var = centered.array().square().colwise().mean();
    *inv_std = (var.array() + st.eps).rsqrt();
    *xhat = centered.array().rowwise() * inv_std->array();
    const double n = static_cast<double>(X.rows());
    *st.running_mean = st.momentum * *st.running_mean + (1.0 - st.momentum) * mean;
    *st.running_var = st.momentum * *st.running_var + (1.0 - st.momentum) * (var * (n / (n - 1.0)));
  } else {
    *inv_std = (st.running_var->array() + st.eps).rsqrt();
    *xhat = (X.rowwise() - st.running_mean->row(0)).array().rowwise() * inv_std->array();
  }
  Mat out = xhat->array().rowwise() * ga.row(0).array();
  out.rowwise() += be.row(0);
  return g.emit(std::move(out), any_grad(g, {x, gamma, beta}),
                [x, gamma, beta, xhat, inv_std, train](Graph& gr, const Mat& dy) {
                  if (gr.requires_grad(gamma)) gr.accumulate(gamma, dy.cwiseProduct(*xhat).colwise().sum());
                  if (gr.requires_grad(beta)) gr.accumulate(beta, dy.colwise().sum());
                  if (!gr.requires_grad(x)) return;
                  Mat dxhat = dy.array().rowwise() * gr.value(gamma).row(0).array();
                  if (!train) {
                    gr.accumulate(x, (dxhat.array().rowwise() * inv_std->array()).matrix());
                    return;
                  }
                  const RowVec m1 = dxhat.colwise().mean();
                  const RowVec m2 = dxhat.cwiseProduct(*xhat).colwise().mean();
                  Mat dx = dxhat.rowwise() - m1;
                  dx -= (xhat->array().rowwise() * m2.array()).matrix();
                  dx.array().rowwise() *= inv_std->array();
                  gr.accumulate(x, dx);
                });
}

}  // namespace sig::nn
