#pragma once

#include <memory>
#include <optional>

#include "unroll/cnn.hpp"
#include "unroll/image.hpp"

namespace unroll {

enum class DenoiserKind { QuadraticProx, DctSoftThreshold, TvProx, Cnn, Zero };

/// A v-update map f(·). Prox-family kinds (QuadraticProx, DctSoftThreshold,
/// TvProx, Zero) carry an explicit prior J; Cnn does not.
class Denoiser {
 public:
  /// f(x) = η/(η+λ)·x, the prox of λ·½‖v‖² under (η/2)‖x−v‖².
  static Denoiser quadratic(double lambda);
  /// Orthonormal DCT-II on non-overlapping patch×patch blocks (edge blocks
  /// use their actual size), AC coefficients soft-thresholded by tau, DC kept.
  static Denoiser dct(int patch, double tau);
  /// Isotropic ROF prox argmin ½‖v−x‖² + λ_tv·TV(v) by a fixed number of
  /// accelerated dual projection steps.
  static Denoiser tv(double lambda_tv, int inner_iters = 50);
  static Denoiser cnn(NetSpec spec, ParamVector params);
  /// f ≡ 0, the prox of the indicator of {0}.
  static Denoiser zero();

  DenoiserKind kind() const { return kind_; }
  double strength() const { return strength_; }
  int patch() const { return patch_; }
  int inner_iters() const { return inner_iters_; }
  const NetSpec& net_spec() const;
  const ParamVector& net_params() const;
  bool has_prior() const { return kind_ != DenoiserKind::Cnn; }

 private:
  DenoiserKind kind_ = DenoiserKind::Zero;
  double strength_ = 0.0;
  int patch_ = 0;
  int inner_iters_ = 0;
  std::shared_ptr<const std::pair<NetSpec, ParamVector>> net_;
};

const char* to_string(DenoiserKind kind);

/// Applies the denoiser. `eta` is the splitting weight supplied by the solver;
/// only QuadraticProx uses it.
Image denoise(const Denoiser& d, const Image& x, double eta);

/// argmin_v η‖x−v‖² + λ·½‖v‖² = (2η/(2η+λ))·x.
Image prox_quadratic(const Image& x, double eta, double lambda);

/// J(v): ½‖v‖² (quadratic), Σ|AC coefficients| (DCT), isotropic TV (TV),
/// 0 or +inf (zero map). Empty for Cnn.
std::optional<double> eval_prior(const Denoiser& d, const Image& v);

/// λ for which the denoiser is the exact prox of λJ under (η/2)‖x−v‖²:
/// η·τ for DCT, η·λ_tv for TV, the denoiser's own λ for QuadraticProx, 0 for
/// the zero map. Throws for Cnn.
double matched_lambda(const Denoiser& d, double eta);

/// (η/2)‖x−v_old‖² + λJ(v_old) − (η/2)‖x−v_new‖² − λJ(v_new). Throws when the
/// denoiser has no explicit prior.
double descent_gap(const Image& x, const Image& v_old, const Image& v_new, double eta, double lambda,
                   const Denoiser& d);

/// Isotropic total variation with forward differences and a zero difference
/// past the last row/column.
double total_variation(const Image& v);

}  // namespace unroll
