// idevc/graph.hpp
//
// Reverse-mode automatic differentiation over dense matrices.
//
// A Graph is a tape: every builder call appends a node whose parents already
// exist, so insertion order is a topological order. Values are computed
// eagerly when a node is appended; forward() re-runs the whole tape after
// rebinding named inputs. backward() seeds a 1x1 output with 1 and sweeps the
// tape in reverse.
//
// Broadcasting is limited to adding a 1 x cols row vector to every row
// (add_row). Everything else requires matching shapes.

#ifndef IDEVC_GRAPH_HPP
#define IDEVC_GRAPH_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idevc/errors.hpp"
#include "idevc/matrix.hpp"

namespace idevc {

struct NodeId {
  std::size_t index = std::numeric_limits<std::size_t>::max();
  bool operator==(const NodeId&) const = default;
};

enum class Op {
  Leaf,
  MatMul,
  Add,
  AddRow,
  Sub,
  Mul,
  Div,
  Scale,
  AddScalar,
  Tanh,
  Softplus,
  Exp,
  Log,
  Sqrt,
  Square,
  Sum,
  Mean,
  RowSum,
  RowLogSumExp,
  SqDist,
  Transpose,
  Diag,
  GatherRows,
  ConcatCols,
  StopGrad,
  Clip,
};

inline std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::AddRow: return "add_row";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Tanh: return "tanh";
    case Op::Softplus: return "softplus";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Square: return "square";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::RowSum: return "row_sum";
    case Op::RowLogSumExp: return "row_logsumexp";
    case Op::SqDist: return "sqdist";
    case Op::Transpose: return "transpose";
    case Op::Diag: return "diag";
    case Op::GatherRows: return "gather_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::StopGrad: return "stop_grad";
    case Op::Clip: return "clip";
  }
  return "?";
}

/// Numerically stable softplus, log(1 + e^x).
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Max-shifted log-sum-exp of a span. Every log-mean-exp in the library goes
/// through here.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

class Graph {
 public:
  // ---- leaves -------------------------------------------------------------

  /// Differentiable leaf.
  NodeId parameter(std::string name, Matrix value) { return leaf(std::move(name), std::move(value), true); }

  /// Named input; forward() can rebind it. Not differentiated unless
  /// requires_grad is set.
  NodeId input(std::string name, Matrix value, bool requires_grad = false) {
    return leaf(std::move(name), std::move(value), requires_grad);
  }

  NodeId constant(Matrix value) { return leaf({}, std::move(value), false); }

  // ---- operations ---------------------------------------------------------

  NodeId matmul(NodeId a, NodeId b) { return push(Op::MatMul, {a, b}); }
  NodeId add(NodeId a, NodeId b) { return push(Op::Add, {a, b}); }
  /// a (n x d) plus row vector r (1 x d) on every row.
  NodeId add_row(NodeId a, NodeId r) { return push(Op::AddRow, {a, r}); }
  NodeId sub(NodeId a, NodeId b) { return push(Op::Sub, {a, b}); }
  NodeId mul(NodeId a, NodeId b) { return push(Op::Mul, {a, b}); }
  NodeId div(NodeId a, NodeId b) { return push(Op::Div, {a, b}); }
  NodeId scale(NodeId a, double alpha) { return push(Op::Scale, {a}, alpha); }
  NodeId neg(NodeId a) { return scale(a, -1.0); }
  NodeId add_scalar(NodeId a, double alpha) { return push(Op::AddScalar, {a}, alpha); }
  NodeId tanh(NodeId a) { return push(Op::Tanh, {a}); }
  NodeId softplus(NodeId a) { return push(Op::Softplus, {a}); }
  NodeId exp(NodeId a) { return push(Op::Exp, {a}); }
  NodeId log(NodeId a) { return push(Op::Log, {a}); }
  NodeId sqrt(NodeId a) { return push(Op::Sqrt, {a}); }
  NodeId square(NodeId a) { return push(Op::Square, {a}); }
  /// Sum of all entries, 1x1.
  NodeId sum(NodeId a) { return push(Op::Sum, {a}); }
  /// Mean of all entries, 1x1.
  NodeId mean(NodeId a) { return push(Op::Mean, {a}); }
  /// Per-row sum, n x 1.
  NodeId row_sum(NodeId a) { return push(Op::RowSum, {a}); }
  /// Per-row log-sum-exp, n x 1.
  NodeId row_logsumexp(NodeId a) { return push(Op::RowLogSumExp, {a}); }
  /// Pairwise squared Euclidean distances between rows: out(i, j) = |a_i - b_j|^2.
  NodeId sqdist(NodeId a, NodeId b) { return push(Op::SqDist, {a, b}); }
  NodeId transpose(NodeId a) { return push(Op::Transpose, {a}); }
  /// Diagonal of a square matrix as an n x 1 column.
  NodeId diag(NodeId a) { return push(Op::Diag, {a}); }
  NodeId gather_rows(NodeId a, std::vector<std::size_t> rows) {
    return push(Op::GatherRows, {a}, 0.0, 0.0, std::move(rows));
  }
  NodeId concat_cols(NodeId a, NodeId b) { return push(Op::ConcatCols, {a, b}); }
  /// Identity on values, blocks gradient flow.
  NodeId stop_grad(NodeId a) { return push(Op::StopGrad, {a}); }
  /// Clamp to [lo, hi]; gradient passes only where the input was inside.
  NodeId clip(NodeId a, double lo, double hi) { return push(Op::Clip, {a}, lo, hi); }

  // ---- evaluation ---------------------------------------------------------

  const Matrix& value(NodeId id) const { return node(id).value; }
  double scalar(NodeId id) const {
    const auto& v = node(id).value;
    if (v.rows() != 1 || v.cols() != 1) throw ContractError("node " + describe(id.index) + " is not 1x1");
    return v(0, 0);
  }

  /// Gradient accumulated by the last backward(); zero-shaped if the node does
  /// not depend on any differentiable leaf.
  const Matrix& grad(NodeId id) const { return node(id).grad; }

  bool requires_grad(NodeId id) const { return node(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  Op op(NodeId id) const { return node(id).op; }
  std::span<const NodeId> parents(NodeId id) const { return node(id).parents; }

  /// Total number of entries clamped by clip nodes during the last evaluation.
  std::size_t clip_count() const noexcept {
    std::size_t n = 0;
    for (const auto& nd : nodes_) n += nd.clipped;
    return n;
  }

  /// Names a node for forward() results.
  void mark_output(std::string name, NodeId id) { outputs_[std::move(name)] = id; }

  /// Rebinds named inputs and recomputes every node in tape order. Returns the
  /// values of nodes registered with mark_output.
  std::map<std::string, Matrix> forward(const std::map<std::string, Matrix>& inputs = {}) {
    for (const auto& [name, value] : inputs) {
      auto it = std::find_if(nodes_.begin(), nodes_.end(),
                             [&](const Node& n) { return n.op == Op::Leaf && n.name == name; });
      if (it == nodes_.end()) throw ContractError("forward: no input named '" + name + "'");
      if (!it->value.same_shape(value)) {
        throw DimensionError("forward: input '" + name + "' expects " + it->value.shape_string() + ", got " +
                             value.shape_string());
      }
      it->value = value;
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].op != Op::Leaf) compute(i);
    }
    std::map<std::string, Matrix> out;
    for (const auto& [name, id] : outputs_) out.emplace(name, nodes_[id.index].value);
    return out;
  }

  /// Gradient of a 1x1 node with respect to every node it depends on.
  /// Buffers are reset first, so repeated calls give identical results.
  void backward(NodeId output) {
    const auto& out = node(output);
    if (out.value.rows() != 1 || out.value.cols() != 1) {
      throw ContractError("backward: output " + describe(output.index) + " is " + out.value.shape_string() +
                          ", expected 1x1");
    }
    for (auto& n : nodes_) n.grad = Matrix();
    if (!out.requires_grad) return;
    nodes_[output.index].grad = Matrix(1, 1, 1.0);
    for (std::size_t i = output.index + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.grad.empty() || n.op == Op::Leaf) continue;
      propagate(i);
    }
  }

 private:
  struct Node {
    Op op = Op::Leaf;
    std::vector<NodeId> parents;
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<std::size_t> index;
    std::string name;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::size_t clipped = 0;
  };

  const Node& node(NodeId id) const {
    if (id.index >= nodes_.size()) throw ContractError("unknown node id");
    return nodes_[id.index];
  }

  std::string describe(std::size_t i) const {
    std::string s = std::to_string(i) + " (" + std::string(op_name(nodes_[i].op));
    if (!nodes_[i].name.empty()) s += " '" + nodes_[i].name + "'";
    return s + ")";
  }

  NodeId leaf(std::string name, Matrix value, bool requires_grad) {
    if (!value.all_finite()) {
      throw NumericError("leaf '" + name + "' has non-finite entries");
    }
    Node n;
    n.op = Op::Leaf;
    n.name = std::move(name);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {nodes_.size() - 1};
  }

  NodeId push(Op op, std::vector<NodeId> parents, double alpha = 0.0, double beta = 0.0,
              std::vector<std::size_t> index = {}) {
    Node n;
    n.op = op;
    for (auto p : parents) {
      if (p.index >= nodes_.size()) throw ContractError(std::string(op_name(op)) + ": parent does not exist");
      n.requires_grad = n.requires_grad || nodes_[p.index].requires_grad;
    }
    if (op == Op::StopGrad) n.requires_grad = false;
    n.parents = std::move(parents);
    n.alpha = alpha;
    n.beta = beta;
    n.index = std::move(index);
    nodes_.push_back(std::move(n));
    try {
      compute(nodes_.size() - 1);
    } catch (...) {
      nodes_.pop_back();
      throw;
    }
    return {nodes_.size() - 1};
  }

  [[noreturn]] void shape_error(std::size_t i, const std::string& detail) const {
    throw DimensionError("node " + describe(i) + ": " + detail);
  }

  const Matrix& pv(std::size_t i, std::size_t k) const { return nodes_[nodes_[i].parents[k].index].value; }

  void compute(std::size_t i) {
    Node& n = nodes_[i];
    n.clipped = 0;
    switch (n.op) {
      case Op::Leaf:
        return;
      case Op::MatMul: {
        const Matrix& a = pv(i, 0);
        const Matrix& b = pv(i, 1);
        if (a.cols() != b.rows()) shape_error(i, a.shape_string() + " * " + b.shape_string());
        Matrix c(a.rows(), b.cols());
        matmul_into(a, b, c);
        n.value = std::move(c);
        break;
      }
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: {
        const Matrix& a = pv(i, 0);
        const Matrix& b = pv(i, 1);
        if (!a.same_shape(b)) shape_error(i, a.shape_string() + " vs " + b.shape_string());
        Matrix c(a.rows(), a.cols());
        auto ad = a.data();
        auto bd = b.data();
        auto cd = c.data();
        for (std::size_t k = 0; k < cd.size(); ++k) {
          switch (n.op) {
            case Op::Add: cd[k] = ad[k] + bd[k]; break;
            case Op::Sub: cd[k] = ad[k] - bd[k]; break;
            case Op::Mul: cd[k] = ad[k] * bd[k]; break;
            default: cd[k] = ad[k] / bd[k]; break;
          }
        }
        n.value = std::move(c);
        break;
      }
      case Op::AddRow: {
        const Matrix& a = pv(i, 0);
        const Matrix& r = pv(i, 1);
        if (r.rows() != 1 || r.cols() != a.cols()) shape_error(i, a.shape_string() + " + row " + r.shape_string());
        Matrix c = a;
        for (std::size_t row = 0; row < c.rows(); ++row)
          for (std::size_t col = 0; col < c.cols(); ++col) c(row, col) += r(0, col);
        n.value = std::move(c);
        break;
      }
      case Op::Scale:
      case Op::AddScalar:
      case Op::Tanh:
      case Op::Softplus:
      case Op::Exp:
      case Op::Log:
      case Op::Sqrt:
      case Op::Square:
      case Op::StopGrad:
      case Op::Clip: {
        const Matrix& a = pv(i, 0);
        Matrix c(a.rows(), a.cols());
        auto ad = a.data();
        auto cd = c.data();
        for (std::size_t k = 0; k < cd.size(); ++k) {
          const double x = ad[k];
          switch (n.op) {
            case Op::Scale: cd[k] = n.alpha * x; break;
            case Op::AddScalar: cd[k] = x + n.alpha; break;
            case Op::Tanh: cd[k] = std::tanh(x); break;
            case Op::Softplus: cd[k] = idevc::softplus(x); break;
            case Op::Exp: cd[k] = std::exp(x); break;
            case Op::Log:
              if (!(x > 0.0)) throw NumericError("node " + describe(i) + ": log of non-positive value");
              cd[k] = std::log(x);
              break;
            case Op::Sqrt:
              if (x < 0.0) throw NumericError("node " + describe(i) + ": sqrt of negative value");
              cd[k] = std::sqrt(x);
              break;
            case Op::Square: cd[k] = x * x; break;
            case Op::Clip:
              if (x < n.alpha || x > n.beta) ++n.clipped;
              cd[k] = std::clamp(x, n.alpha, n.beta);
              break;
            default: cd[k] = x; break;
          }
        }
        n.value = std::move(c);
        break;
      }
      case Op::Sum:
      case Op::Mean: {
        const Matrix& a = pv(i, 0);
        if (a.size() == 0) shape_error(i, "reduction of empty matrix");
        double acc = 0.0;
        for (double x : a.data()) acc += x;
        if (n.op == Op::Mean) acc /= static_cast<double>(a.size());
        n.value = Matrix(1, 1, acc);
        break;
      }
      case Op::RowSum: {
        const Matrix& a = pv(i, 0);
        Matrix c(a.rows(), 1);
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double acc = 0.0;
          for (double x : a.row(r)) acc += x;
          c(r, 0) = acc;
        }
        n.value = std::move(c);
        break;
      }
      case Op::RowLogSumExp: {
        const Matrix& a = pv(i, 0);
        if (a.cols() == 0) shape_error(i, "log-sum-exp over zero columns");
        Matrix c(a.rows(), 1);
        for (std::size_t r = 0; r < a.rows(); ++r) c(r, 0) = log_sum_exp(a.row(r));
        n.value = std::move(c);
        break;
      }
      case Op::SqDist: {
        const Matrix& a = pv(i, 0);
        const Matrix& b = pv(i, 1);
        if (a.cols() != b.cols()) shape_error(i, a.shape_string() + " rows vs " + b.shape_string() + " rows");
        Matrix c(a.rows(), b.rows());
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t s = 0; s < b.rows(); ++s) c(r, s) = squared_distance(a.row(r), b.row(s));
        n.value = std::move(c);
        break;
      }
      case Op::Transpose: {
        const Matrix& a = pv(i, 0);
        Matrix c(a.cols(), a.rows());
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t s = 0; s < a.cols(); ++s) c(s, r) = a(r, s);
        n.value = std::move(c);
        break;
      }
      case Op::Diag: {
        const Matrix& a = pv(i, 0);
        if (a.rows() != a.cols()) shape_error(i, "diag of non-square " + a.shape_string());
        Matrix c(a.rows(), 1);
        for (std::size_t r = 0; r < a.rows(); ++r) c(r, 0) = a(r, r);
        n.value = std::move(c);
        break;
      }
      case Op::GatherRows: {
        const Matrix& a = pv(i, 0);
        for (auto r : n.index)
          if (r >= a.rows()) shape_error(i, "row " + std::to_string(r) + " out of range for " + a.shape_string());
        n.value = select_rows(a, n.index);
        break;
      }
      case Op::ConcatCols: {
        const Matrix& a = pv(i, 0);
        const Matrix& b = pv(i, 1);
        if (a.rows() != b.rows()) shape_error(i, a.shape_string() + " | " + b.shape_string());
        Matrix c(a.rows(), a.cols() + b.cols());
        for (std::size_t r = 0; r < a.rows(); ++r) {
          std::copy(a.row(r).begin(), a.row(r).end(), c.row(r).begin());
          std::copy(b.row(r).begin(), b.row(r).end(), c.row(r).begin() + static_cast<std::ptrdiff_t>(a.cols()));
        }
        n.value = std::move(c);
        break;
      }
    }
    if (!n.value.all_finite()) throw NumericError("node " + describe(i) + ": non-finite value");
  }

  static void matmul_into(const Matrix& a, const Matrix& b, Matrix& c) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    const double* ap = a.data().data();
    const double* bp = b.data().data();
    double* cp = c.data().data();
    for (std::size_t i = 0; i < n; ++i) {
      double* crow = cp + i * m;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ap[i * k + p];
        if (av == 0.0) continue;
        const double* brow = bp + p * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  }

  // Accumulates into a parent's gradient buffer, allocating it on first use.
  Matrix* pgrad(std::size_t i, std::size_t k) {
    Node& p = nodes_[nodes_[i].parents[k].index];
    if (!p.requires_grad) return nullptr;
    if (p.grad.empty()) p.grad = Matrix(p.value.rows(), p.value.cols());
    return &p.grad;
  }

  void propagate(std::size_t i) {
    Node& n = nodes_[i];
    const Matrix& g = n.grad;
    const Matrix& y = n.value;
    switch (n.op) {
      case Op::Leaf:
      case Op::StopGrad:
        return;
      case Op::MatMul: {
        const Matrix& a = pv(i, 0);
        const Matrix& b = pv(i, 1);
        if (Matrix* ga = pgrad(i, 0)) {
          // dA += G * B^T
          Matrix bt(b.cols(), b.rows());
          for (std::size_t p = 0; p < b.rows(); ++p)
            for (std::size_t j = 0; j < b.cols(); ++j) bt(j, p) = b(p, j);
          matmul_into(g, bt, *ga);
        }
        if (Matrix* gb = pgrad(i, 1)) {
          // dB += A^T * G
          for (std::size_t r = 0; r < a.rows(); ++r)
            for (std::size_t p = 0; p < a.cols(); ++p) {
              const double av = a(r, p);
              if (av == 0.0) continue;
              auto grow = g.row(r);
              auto brow = gb->row(p);
              for (std::size_t j = 0; j < grow.size(); ++j) brow[j] += av * grow[j];
            }
        }
        return;
      }
      case Op::Add:
      case Op::Sub: {
        if (Matrix* ga = pgrad(i, 0))
          for (std::size_t k = 0; k < g.size(); ++k) ga->data()[k] += g.data()[k];
        if (Matrix* gb = pgrad(i, 1)) {
          const double sgn = n.op == Op::Add ? 1.0 : -1.0;
          for (std::size_t k = 0; k < g.size(); ++k) gb->data()[k] += sgn * g.data()[k];
        }
        return;
      }
      case Op::Mul: {
        const Matrix& a = pv(i, 0);
        const Matrix& b = pv(i, 1);
        if (Matrix* ga = pgrad(i, 0))
          for (std::size_t k = 0; k < g.size(); ++k) ga->data()[k] += g.data()[k] * b.data()[k];
        if (Matrix* gb = pgrad(i, 1))
          for (std::size_t k = 0; k < g.size(); ++k) gb->data()[k] += g.data()[k] * a.data()[k];
        return;
      }
      case Op::Div: {
        const Matrix& b = pv(i, 1);
        if (Matrix* ga = pgrad(i, 0))
          for (std::size_t k = 0; k < g.size(); ++k) ga->data()[k] += g.data()[k] / b.data()[k];
        if (Matrix* gb = pgrad(i, 1))
          for (std::size_t k = 0; k < g.size(); ++k) gb->data()[k] -= g.data()[k] * y.data()[k] / b.data()[k];
        return;
      }
      case Op::AddRow: {
        if (Matrix* ga = pgrad(i, 0))
          for (std::size_t k = 0; k < g.size(); ++k) ga->data()[k] += g.data()[k];
        if (Matrix* gr = pgrad(i, 1))
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) (*gr)(0, c) += g(r, c);
        return;
      }
      case Op::Scale:
      case Op::AddScalar:
      case Op::Tanh:
      case Op::Softplus:
      case Op::Exp:
      case Op::Log:
      case Op::Sqrt:
      case Op::Square:
      case Op::Clip: {
        Matrix* ga = pgrad(i, 0);
        if (!ga) return;
        const Matrix& a = pv(i, 0);
        auto ad = a.data();
        auto yd = y.data();
        auto gd = g.data();
        auto out = ga->data();
        for (std::size_t k = 0; k < gd.size(); ++k) {
          double d = 0.0;
          switch (n.op) {
            case Op::Scale: d = n.alpha; break;
            case Op::AddScalar: d = 1.0; break;
            case Op::Tanh: d = 1.0 - yd[k] * yd[k]; break;
            case Op::Softplus: d = sigmoid(ad[k]); break;
            case Op::Exp: d = yd[k]; break;
            case Op::Log: d = 1.0 / ad[k]; break;
            case Op::Sqrt: d = yd[k] > 0.0 ? 0.5 / yd[k] : 0.0; break;
            case Op::Square: d = 2.0 * ad[k]; break;
            default: d = (ad[k] >= n.alpha && ad[k] <= n.beta) ? 1.0 : 0.0; break;
          }
          out[k] += gd[k] * d;
        }
        return;
      }
      case Op::Sum:
      case Op::Mean: {
        Matrix* ga = pgrad(i, 0);
        if (!ga) return;
        double s = g(0, 0);
        if (n.op == Op::Mean) s /= static_cast<double>(ga->size());
        for (auto& v : ga->data()) v += s;
        return;
      }
      case Op::RowSum: {
        Matrix* ga = pgrad(i, 0);
        if (!ga) return;
        for (std::size_t r = 0; r < ga->rows(); ++r)
          for (auto& v : ga->row(r)) v += g(r, 0);
        return;
      }
      case Op::RowLogSumExp: {
        Matrix* ga = pgrad(i, 0);
        if (!ga) return;
        const Matrix& a = pv(i, 0);
        for (std::size_t r = 0; r < a.rows(); ++r) {
          const double gr = g(r, 0);
          const double lse = y(r, 0);
          auto arow = a.row(r);
          auto orow = ga->row(r);
          for (std::size_t c = 0; c < arow.size(); ++c) orow[c] += gr * std::exp(arow[c] - lse);
        }
        return;
      }
      case Op::SqDist: {
        const Matrix& a = pv(i, 0);
        const Matrix& b = pv(i, 1);
        Matrix* ga = pgrad(i, 0);
        Matrix* gb = pgrad(i, 1);
        const std::size_t d = a.cols();
        for (std::size_t r = 0; r < a.rows(); ++r) {
          for (std::size_t s = 0; s < b.rows(); ++s) {
            const double w = 2.0 * g(r, s);
            if (w == 0.0) continue;
            for (std::size_t k = 0; k < d; ++k) {
              const double diff = w * (a(r, k) - b(s, k));
              if (ga) (*ga)(r, k) += diff;
              if (gb) (*gb)(s, k) -= diff;
            }
          }
        }
        return;
      }
      case Op::Transpose: {
        Matrix* ga = pgrad(i, 0);
        if (!ga) return;
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(c, r) += g(r, c);
        return;
      }
      case Op::Diag: {
        Matrix* ga = pgrad(i, 0);
        if (!ga) return;
        for (std::size_t r = 0; r < g.rows(); ++r) (*ga)(r, r) += g(r, 0);
        return;
      }
      case Op::GatherRows: {
        Matrix* ga = pgrad(i, 0);
        if (!ga) return;
        for (std::size_t r = 0; r < n.index.size(); ++r) {
          auto src = g.row(r);
          auto dst = ga->row(n.index[r]);
          for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
        return;
      }
      case Op::ConcatCols: {
        const std::size_t ac = pv(i, 0).cols();
        if (Matrix* ga = pgrad(i, 0))
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < ac; ++c) (*ga)(r, c) += g(r, c);
        if (Matrix* gb = pgrad(i, 1))
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < gb->cols(); ++c) (*gb)(r, c) += g(r, ac + c);
        return;
      }
    }
  }

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> outputs_;
};

}  // namespace idevc

#endif  // IDEVC_GRAPH_HPP
