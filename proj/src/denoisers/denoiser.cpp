#include "unroll/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "unroll/error.hpp"

namespace unroll {
namespace {

// Orthonormal DCT-II matrix, row k = frequency.
std::vector<double> dct_matrix(int n) {
  std::vector<double> c(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < n; ++k) {
    const double alpha = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    for (int i = 0; i < n; ++i)
      c[static_cast<std::size_t>(k) * n + i] = alpha * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
  }
  return c;
}

// Visits every block of the patch grid; edge blocks are truncated.
template <typename F>
void for_each_block(const Image& img, int patch, F&& f) {
  for (int r0 = 0; r0 < img.height(); r0 += patch)
    for (int c0 = 0; c0 < img.width(); c0 += patch)
      f(r0, c0, std::min(patch, img.height() - r0), std::min(patch, img.width() - c0));
}

// coeff = Cr · block · Ccᵀ
std::vector<double> block_dct(const Image& img, int r0, int c0, int bh, int bw, const std::vector<double>& cr,
                              const std::vector<double>& cc) {
  std::vector<double> tmp(static_cast<std::size_t>(bh) * bw, 0.0);
  for (int k = 0; k < bh; ++k)
    for (int j = 0; j < bw; ++j) {
      double s = 0.0;
      for (int i = 0; i < bh; ++i) s += cr[static_cast<std::size_t>(k) * bh + i] * img(r0 + i, c0 + j);
      tmp[static_cast<std::size_t>(k) * bw + j] = s;
    }
  std::vector<double> coeff(static_cast<std::size_t>(bh) * bw, 0.0);
  for (int k = 0; k < bh; ++k)
    for (int l = 0; l < bw; ++l) {
      double s = 0.0;
      for (int j = 0; j < bw; ++j) s += tmp[static_cast<std::size_t>(k) * bw + j] * cc[static_cast<std::size_t>(l) * bw + j];
      coeff[static_cast<std::size_t>(k) * bw + l] = s;
    }
  return coeff;
}

// block = Crᵀ · coeff · Cc
void block_idct(const std::vector<double>& coeff, Image& img, int r0, int c0, int bh, int bw,
                const std::vector<double>& cr, const std::vector<double>& cc) {
  std::vector<double> tmp(static_cast<std::size_t>(bh) * bw, 0.0);
  for (int i = 0; i < bh; ++i)
    for (int l = 0; l < bw; ++l) {
      double s = 0.0;
      for (int k = 0; k < bh; ++k) s += cr[static_cast<std::size_t>(k) * bh + i] * coeff[static_cast<std::size_t>(k) * bw + l];
      tmp[static_cast<std::size_t>(i) * bw + l] = s;
    }
  for (int i = 0; i < bh; ++i)
    for (int j = 0; j < bw; ++j) {
      double s = 0.0;
      for (int l = 0; l < bw; ++l) s += tmp[static_cast<std::size_t>(i) * bw + l] * cc[static_cast<std::size_t>(l) * bw + j];
      img(r0 + i, c0 + j) = s;
    }
}

struct DctCache {
  std::vector<std::vector<double>> by_size;
  const std::vector<double>& get(int n) {
    if (static_cast<int>(by_size.size()) <= n) by_size.resize(n + 1);
    if (by_size[n].empty()) by_size[n] = dct_matrix(n);
    return by_size[n];
  }
};

Image dct_soft_threshold(const Image& x, int patch, double tau) {
  if (tau == 0.0) return x;
  Image out(x.height(), x.width(), x.peak());
  DctCache cache;
  for_each_block(x, patch, [&](int r0, int c0, int bh, int bw) {
    const auto& cr = cache.get(bh);
    const auto& cc = cache.get(bw);
    auto coeff = block_dct(x, r0, c0, bh, bw, cr, cc);
    for (std::size_t i = 1; i < coeff.size(); ++i) {
      const double a = std::abs(coeff[i]) - tau;
      coeff[i] = a > 0.0 ? std::copysign(a, coeff[i]) : 0.0;
    }
    block_idct(coeff, out, r0, c0, bh, bw, cr, cc);
  });
  return out;
}

double dct_l1_ac(const Image& v, int patch) {
  double total = 0.0;
  DctCache cache;
  for_each_block(v, patch, [&](int r0, int c0, int bh, int bw) {
    const auto coeff = block_dct(v, r0, c0, bh, bw, cache.get(bh), cache.get(bw));
    for (std::size_t i = 1; i < coeff.size(); ++i) total += std::abs(coeff[i]);
  });
  return total;
}

// Forward-difference gradient (zero past the last row/column) and its negative adjoint.
void gradient(const std::vector<double>& u, int h, int w, std::vector<double>& gx, std::vector<double>& gy) {
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      gx[i] = c + 1 < w ? u[i + 1] - u[i] : 0.0;
      gy[i] = r + 1 < h ? u[i + w] - u[i] : 0.0;
    }
}

void divergence(const std::vector<double>& px, const std::vector<double>& py, int h, int w, std::vector<double>& div) {
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      double d = 0.0;
      if (c + 1 < w) d += px[i];
      if (c > 0) d -= px[i - 1];
      if (r + 1 < h) d += py[i];
      if (r > 0) d -= py[i - w];
      div[i] = d;
    }
}

// Stop once the primal estimate x + λ·div p moves by less than this, relative
// to the image peak. The dual field itself need not settle: it is only unique
// up to divergence-free components.
constexpr double kTvPrimalTol = 1e-15;

// Fast gradient projection on the dual of the ROF problem, with momentum
// restarted whenever the extrapolation points against the latest step.
// div is linear, so div q follows from div p without another pass.
Image tv_prox(const Image& x, double lambda, int iters) {
  if (lambda == 0.0) return x;
  const int h = x.height();
  const int w = x.width();
  const std::size_t n = x.size();
  const std::vector<double>& xv = x.vec();
  std::vector<double> px(n, 0.0), py(n, 0.0), qx(n, 0.0), qy(n, 0.0), nx(n), ny(n);
  std::vector<double> div_q(n, 0.0), div_p(n, 0.0), div_n(n), u(n), gx(n), gy(n);
  double t = 1.0;
  const double step = 1.0 / (8.0 * lambda);
  const double stop = kTvPrimalTol * x.peak() / lambda;
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) u[i] = xv[i] + lambda * div_q[i];
    gradient(u, h, w, gx, gy);
    double restart = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double ax = qx[i] + step * gx[i];
      double ay = qy[i] + step * gy[i];
      const double mag = std::sqrt(ax * ax + ay * ay);
      if (mag > 1.0) {
        ax /= mag;
        ay /= mag;
      }
      nx[i] = ax;
      ny[i] = ay;
      restart += (qx[i] - ax) * (ax - px[i]) + (qy[i] - ay) * (ay - py[i]);
    }
    divergence(nx, ny, h, w, div_n);
    if (restart > 0.0) t = 1.0;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double momentum = (t - 1.0) / t_next;
    double moved = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dd = div_n[i] - div_p[i];
      moved = std::max(moved, std::abs(dd));
      div_q[i] = div_n[i] + momentum * dd;
      qx[i] = nx[i] + momentum * (nx[i] - px[i]);
      qy[i] = ny[i] + momentum * (ny[i] - py[i]);
    }
    px.swap(nx);
    py.swap(ny);
    div_p.swap(div_n);
    if (moved <= stop) break;
    t = t_next;
  }
  Image out(h, w, x.peak());
  for (std::size_t i = 0; i < n; ++i) out.pixels()[i] = xv[i] + lambda * div_p[i];
  return out;
}

}  // namespace

const char* to_string(DenoiserKind kind) {
  switch (kind) {
    case DenoiserKind::QuadraticProx: return "quadratic";
    case DenoiserKind::DctSoftThreshold: return "dct";
    case DenoiserKind::TvProx: return "tv";
    case DenoiserKind::Cnn: return "cnn";
    case DenoiserKind::Zero: return "zero";
  }
  return "unknown";
}

Denoiser Denoiser::quadratic(double lambda) {
  if (!(lambda >= 0.0)) throw Error("quadratic prior weight must be non-negative");
  Denoiser d;
  d.kind_ = DenoiserKind::QuadraticProx;
  d.strength_ = lambda;
  return d;
}

Denoiser Denoiser::dct(int patch, double tau) {
  if (patch < 1) throw Error("DCT patch size must be positive");
  if (!(tau >= 0.0)) throw Error("DCT threshold must be non-negative");
  Denoiser d;
  d.kind_ = DenoiserKind::DctSoftThreshold;
  d.strength_ = tau;
  d.patch_ = patch;
  return d;
}

Denoiser Denoiser::tv(double lambda_tv, int inner_iters) {
  if (!(lambda_tv >= 0.0)) throw Error("TV weight must be non-negative");
  if (inner_iters < 1) throw Error("TV inner iterations must be positive");
  Denoiser d;
  d.kind_ = DenoiserKind::TvProx;
  d.strength_ = lambda_tv;
  d.inner_iters_ = inner_iters;
  return d;
}

Denoiser Denoiser::cnn(NetSpec spec, ParamVector params) {
  spec.validate();
  if (params.size() != param_count(spec)) throw Error("CNN parameter vector does not match its NetSpec");
  Denoiser d;
  d.kind_ = DenoiserKind::Cnn;
  d.net_ = std::make_shared<const std::pair<NetSpec, ParamVector>>(spec, std::move(params));
  return d;
}

Denoiser Denoiser::zero() { return Denoiser(); }

const NetSpec& Denoiser::net_spec() const {
  if (!net_) throw Error("denoiser is not a CNN");
  return net_->first;
}

const ParamVector& Denoiser::net_params() const {
  if (!net_) throw Error("denoiser is not a CNN");
  return net_->second;
}

Image denoise(const Denoiser& d, const Image& x, double eta) {
  if (!x.all_finite()) throw Error("denoise: input contains non-finite values");
  switch (d.kind()) {
    case DenoiserKind::QuadraticProx:
      if (!(eta > 0.0)) throw Error("quadratic prox needs eta > 0");
      return scaled(x, eta / (eta + d.strength()));
    case DenoiserKind::DctSoftThreshold: return dct_soft_threshold(x, d.patch(), d.strength());
    case DenoiserKind::TvProx: return tv_prox(x, d.strength(), d.inner_iters());
    case DenoiserKind::Cnn: return cnn_forward(d.net_spec(), d.net_params(), x, nullptr);
    case DenoiserKind::Zero: return x.filled(0.0);
  }
  throw Error("unknown denoiser kind");
}

Image prox_quadratic(const Image& x, double eta, double lambda) {
  if (!(eta > 0.0)) throw Error("prox_quadratic: eta must be positive");
  if (!(lambda >= 0.0)) throw Error("prox_quadratic: lambda must be non-negative");
  return scaled(x, 2.0 * eta / (2.0 * eta + lambda));
}

double total_variation(const Image& v) {
  const int h = v.height();
  const int w = v.width();
  double tv = 0.0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double dx = c + 1 < w ? v(r, c + 1) - v(r, c) : 0.0;
      const double dy = r + 1 < h ? v(r + 1, c) - v(r, c) : 0.0;
      tv += std::sqrt(dx * dx + dy * dy);
    }
  return tv;
}

std::optional<double> eval_prior(const Denoiser& d, const Image& v) {
  switch (d.kind()) {
    case DenoiserKind::QuadraticProx: return 0.5 * norm_sq(v);
    case DenoiserKind::DctSoftThreshold: return dct_l1_ac(v, d.patch());
    case DenoiserKind::TvProx: return total_variation(v);
    case DenoiserKind::Cnn: return std::nullopt;
    case DenoiserKind::Zero:
      for (double p : v.pixels())
        if (p != 0.0) return std::numeric_limits<double>::infinity();
      return 0.0;
  }
  return std::nullopt;
}

double matched_lambda(const Denoiser& d, double eta) {
  switch (d.kind()) {
    case DenoiserKind::QuadraticProx: return d.strength();
    case DenoiserKind::DctSoftThreshold:
    case DenoiserKind::TvProx: return eta * d.strength();
    case DenoiserKind::Zero: return 0.0;
    case DenoiserKind::Cnn: break;
  }
  throw Error("a CNN denoiser has no explicit prior weight");
}

double descent_gap(const Image& x, const Image& v_old, const Image& v_new, double eta, double lambda,
                   const Denoiser& d) {
  const auto j_old = eval_prior(d, v_old);
  const auto j_new = eval_prior(d, v_new);
  if (!j_old || !j_new) throw Error("descent_gap: denoiser has no explicit prior");
  const double prior = lambda == 0.0 ? 0.0 : lambda * (*j_old - *j_new);
  return 0.5 * eta * (dist_sq(x, v_old) - dist_sq(x, v_new)) + prior;
}

}  // namespace unroll
