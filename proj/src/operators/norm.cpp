#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "unroll/error.hpp"
#include "unroll/operators.hpp"

namespace unroll {
namespace {

constexpr std::uint64_t kDefaultNormSeed = 0x5eed'0f'a7a0ULL;

Image normal_op(const DegradationOp& op, const Image& x) { return apply_transpose(op, apply(op, x)); }

void subtract_projection(Image& w, const Image& v) {
  const double c = dot(w, v);
  w = axpy(-c, v, w);
}

// Largest eigenvalue of the Lanczos tridiagonal matrix.
double top_ritz_value(const std::vector<double>& alpha, const std::vector<double>& beta) {
  const auto m = static_cast<Eigen::Index>(alpha.size());
  if (m == 1) return alpha[0];
  Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
  Eigen::VectorXd sub = Eigen::Map<const Eigen::VectorXd>(beta.data(), m - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace

NormEstimate operator_norm_sq(const DegradationOp& op, int iters, Rng& rng) {
  if (iters < 1) throw Error("operator_norm_sq needs at least one iteration");
  const Shape in = op.input_shape();
  Image v(in.height, in.width, 1.0);
  for (double& p : v.pixels()) p = rng.normal();
  v = scaled(v, 1.0 / norm(v));

  std::vector<Image> basis;
  std::vector<double> alpha;
  std::vector<double> beta;
  double top = -std::numeric_limits<double>::infinity();
  const int max_dim = static_cast<int>(std::min<long>(iters, static_cast<long>(v.size())));
  for (int j = 0; j < max_dim; ++j) {
    basis.push_back(v);
    Image w = normal_op(op, v);
    alpha.push_back(dot(w, v));
    // Nested Krylov spaces give non-decreasing Ritz values; the running max
    // keeps that exact under rounding.
    top = std::max(top, top_ritz_value(alpha, beta));
    // Full reorthogonalization, two passes.
    for (int pass = 0; pass < 2; ++pass)
      for (const Image& b : basis) subtract_projection(w, b);
    const double b = norm(w);
    const double scale = std::abs(alpha.back()) + (beta.empty() ? 0.0 : beta.back());
    if (j + 1 == max_dim || b <= 1e-13 * std::max(scale, 1e-300)) break;
    beta.push_back(b);
    v = scaled(w, 1.0 / b);
  }
  return {top, static_cast<int>(alpha.size())};
}

NormEstimate operator_norm_sq(const DegradationOp& op, int iters) {
  Rng rng(kDefaultNormSeed);
  return operator_norm_sq(op, iters, rng);
}

}  // namespace unroll
