// idevc/gradcheck.hpp
//
// Central finite-difference check of reverse-mode gradients. Used as the test
// oracle for every estimator and for the composite training loss.

#ifndef IDEVC_GRADCHECK_HPP
#define IDEVC_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "idevc/errors.hpp"
#include "idevc/graph.hpp"
#include "idevc/matrix.hpp"

namespace idevc {

/// Builds a scalar (1x1) node from parameter leaves already placed in g.
using ScalarBuilder = std::function<NodeId(Graph& g, std::span<const NodeId> params)>;

namespace detail {

inline double evaluate_scalar(const ScalarBuilder& f, const std::vector<Matrix>& params) {
  Graph g;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) ids.push_back(g.parameter("p" + std::to_string(k), params[k]));
  const double v = g.scalar(f(g, ids));
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite function value");
  return v;
}

inline double frobenius(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.data()) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace detail

/// Reverse-mode gradients of f at params, one matrix per parameter.
inline std::vector<Matrix> analytic_gradients(const ScalarBuilder& f, const std::vector<Matrix>& params) {
  Graph g;
  std::vector<NodeId> ids;
  for (std::size_t k = 0; k < params.size(); ++k) ids.push_back(g.parameter("p" + std::to_string(k), params[k]));
  const NodeId out = f(g, ids);
  g.backward(out);
  std::vector<Matrix> grads;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix& gr = g.grad(ids[k]);
    grads.push_back(gr.empty() ? Matrix(params[k].rows(), params[k].cols()) : gr);
  }
  return grads;
}

/// Central-difference gradients with step h.
inline std::vector<Matrix> numeric_gradients(const ScalarBuilder& f, std::vector<Matrix> params, double h) {
  std::vector<Matrix> grads;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix gk(params[k].rows(), params[k].cols());
    for (std::size_t e = 0; e < params[k].size(); ++e) {
      const double orig = params[k].data()[e];
      params[k].data()[e] = orig + h;
      const double up = detail::evaluate_scalar(f, params);
      params[k].data()[e] = orig - h;
      const double down = detail::evaluate_scalar(f, params);
      params[k].data()[e] = orig;
      gk.data()[e] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(gk));
  }
  return grads;
}

/// Max over parameter matrices of |analytic - central| / max(|analytic|, 1e-8),
/// with |.| the Frobenius norm of the matrix.
inline double finite_diff_check(const ScalarBuilder& f, const std::vector<Matrix>& params, double step) {
  if (!(step > 0.0)) throw PreconditionError("finite_diff_check: step must be positive");
  const auto analytic = analytic_gradients(f, params);
  const auto numeric = numeric_gradients(f, params, step);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix diff = analytic[k];
    for (std::size_t e = 0; e < diff.size(); ++e) diff.data()[e] -= numeric[k].data()[e];
    const double rel = detail::frobenius(diff) / std::max(detail::frobenius(analytic[k]), 1e-8);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace idevc

#endif  // IDEVC_GRADCHECK_HPP
