#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace unroll {

/// Row-major grayscale image. Values keep their native scale; `peak` is the
/// nominal dynamic range used by PSNR/SSIM and by clamping on save.
class Image {
 public:
  Image() = default;
  Image(int height, int width, double peak = 255.0);
  Image(int height, int width, std::vector<double> data, double peak = 255.0);

  int height() const { return height_; }
  int width() const { return width_; }
  double peak() const { return peak_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * width_ + c]; }
  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * width_ + c]; }

  std::span<const double> pixels() const { return data_; }
  std::span<double> pixels() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const;

  /// Image of the same shape and peak filled with `value`.
  Image filled(double value) const;

 private:
  int height_ = 0;
  int width_ = 0;
  double peak_ = 255.0;
  std::vector<double> data_;
};

// Euclidean-space helpers over images viewed as flat vectors.
double dot(const Image& a, const Image& b);
double norm_sq(const Image& a);
double norm(const Image& a);
double dist_sq(const Image& a, const Image& b);

/// Returns alpha * x + y.
Image axpy(double alpha, const Image& x, const Image& y);
Image scaled(const Image& x, double alpha);
Image operator+(const Image& a, const Image& b);
Image operator-(const Image& a, const Image& b);

void require_same_shape(const Image& a, const Image& b, const char* what);

}  // namespace unroll
