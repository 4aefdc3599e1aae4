#pragma once

#include <filesystem>
#include <vector>

#include "unroll/image.hpp"
#include "unroll/rng.hpp"

namespace unroll {

/// Centered odd-sized square convolution kernel, row-major taps.
class Kernel {
 public:
  Kernel() = default;
  Kernel(int size, std::vector<double> taps);

  int size() const { return size_; }
  int radius() const { return size_ / 2; }
  double operator()(int r, int c) const { return taps_[static_cast<std::size_t>(r) * size_ + c]; }
  const std::vector<double>& taps() const { return taps_; }
  double sum() const;

  static Kernel delta();

 private:
  int size_ = 0;
  std::vector<double> taps_;
};

/// taps ∝ exp(-(i²+j²)/(2σ²)) on the centered grid, normalized to sum 1.
Kernel gaussian_kernel(int size, double sigma);

/// Plain-text kernel: first line "k k", then k rows of k reals. Taps are
/// renormalized to sum 1.
Kernel load_kernel(const std::filesystem::path& path);
void save_kernel(const Kernel& k, const std::filesystem::path& path);

struct Shape {
  int height = 0;
  int width = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

enum class OpKind { Identity, Blur, BlurDownsample, BicubicResize };

/// Linear degradation y = A x. Blurs use circular boundaries; downsampling
/// keeps pixels whose indices are multiples of the factor.
class DegradationOp {
 public:
  static DegradationOp identity(Shape in);
  static DegradationOp blur(Kernel k, Shape in);
  static DegradationOp blur_downsample(Kernel k, int factor, Shape in);
  /// Bicubic (a = -0.5) resize by 1/factor; the "adjoint" is a bicubic
  /// upscale by factor, which is not the exact transpose.
  static DegradationOp bicubic(int factor, Shape in);

  OpKind kind() const { return kind_; }
  const Kernel& kernel() const { return kernel_; }
  int factor() const { return factor_; }
  Shape input_shape() const { return in_; }
  Shape output_shape() const { return out_; }
  /// True when adjoint() is the exact transpose of apply().
  bool exact_adjoint() const { return kind_ != OpKind::BicubicResize; }

 private:
  DegradationOp(OpKind kind, Kernel k, int factor, Shape in, Shape out)
      : kind_(kind), kernel_(std::move(k)), factor_(factor), in_(in), out_(out) {}

  OpKind kind_ = OpKind::Identity;
  Kernel kernel_;
  int factor_ = 1;
  Shape in_;
  Shape out_;
};

const char* to_string(OpKind kind);

Image apply(const DegradationOp& op, const Image& x);
Image adjoint(const DegradationOp& op, const Image& y);

/// Exact transposes of apply() and adjoint(). They coincide with adjoint()
/// and apply() for every kind except BicubicResize; backpropagation and the
/// spectral-norm estimate use these.
Image apply_transpose(const DegradationOp& op, const Image& y);
Image adjoint_transpose(const DegradationOp& op, const Image& x);

/// Ā x = (1 - δη) x - δ Aᵀ A x.
Image apply_abar(const DegradationOp& op, double delta, double eta, const Image& x);
/// Exact transpose of apply_abar (equal to it when the adjoint is exact).
Image apply_abar_transpose(const DegradationOp& op, double delta, double eta, const Image& g);

struct NormEstimate {
  double value = 0.0;
  int iterations = 0;
};

/// Estimate of ‖AᵀA‖ (largest eigenvalue of AᵀA, with the exact transpose).
/// Lanczos with full reorthogonalization from a seeded Gaussian start vector;
/// the readout is the largest Ritz value, which never decreases with iters.
/// Stops early if the Krylov space becomes invariant.
NormEstimate operator_norm_sq(const DegradationOp& op, int iters, Rng& rng);
NormEstimate operator_norm_sq(const DegradationOp& op, int iters = 100);

// Building blocks, exposed for tests and for the unrolled network.
Image circular_convolve(const Image& x, const Kernel& k);
Image circular_correlate(const Image& x, const Kernel& k);
Image decimate(const Image& x, int factor);
Image zero_fill_upsample(const Image& y, int factor, Shape out);
Image bicubic_resize(const Image& x, Shape out);
Image bicubic_resize_transpose(const Image& y, Shape in);

}  // namespace unroll
