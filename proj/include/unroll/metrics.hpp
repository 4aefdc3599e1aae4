#pragma once

#include "unroll/image.hpp"

namespace unroll {

/// Value reported by psnr() for identical images.
inline constexpr double kPsnrCap = 100.0;

/// 10·log10(peak²/MSE), capped at kPsnrCap when MSE is zero.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over all valid 11×11 Gaussian (σ=1.5) windows, K1=0.01,
/// K2=0.03, dynamic range = peak. Requires min(height, width) >= 11.
double ssim(const Image& a, const Image& b);

}  // namespace unroll
