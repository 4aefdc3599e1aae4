#include "unroll/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "unroll/error.hpp"

namespace unroll {

Image::Image(int height, int width, double peak)
    : height_(height), width_(width), peak_(peak) {
  if (height < 1 || width < 1) throw Error("image dimensions must be positive");
  if (!(peak > 0.0)) throw Error("image peak must be positive");
  data_.assign(static_cast<std::size_t>(height) * width, 0.0);
}

Image::Image(int height, int width, std::vector<double> data, double peak)
    : height_(height), width_(width), peak_(peak), data_(std::move(data)) {
  if (height < 1 || width < 1) throw Error("image dimensions must be positive");
  if (!(peak > 0.0)) throw Error("image peak must be positive");
  if (data_.size() != static_cast<std::size_t>(height) * width)
    throw Error("image data length does not match height*width");
}

bool Image::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Image Image::filled(double value) const {
  Image out(height_, width_, peak_);
  std::fill(out.data_.begin(), out.data_.end(), value);
  return out;
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(std::string(what) + ": shape mismatch (" + std::to_string(a.height()) + "x" +
                std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                std::to_string(b.width()) + ")");
  }
}

double dot(const Image& a, const Image& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) s += pa[i] * pb[i];
  return s;
}

double norm_sq(const Image& a) { return dot(a, a); }
double norm(const Image& a) { return std::sqrt(norm_sq(a)); }

double dist_sq(const Image& a, const Image& b) {
  require_same_shape(a, b, "dist_sq");
  double s = 0.0;
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = pa[i] - pb[i];
    s += d * d;
  }
  return s;
}

Image axpy(double alpha, const Image& x, const Image& y) {
  require_same_shape(x, y, "axpy");
  Image out = y;
  auto po = out.pixels();
  auto px = x.pixels();
  for (std::size_t i = 0; i < po.size(); ++i) po[i] += alpha * px[i];
  return out;
}

Image scaled(const Image& x, double alpha) {
  Image out = x;
  for (double& v : out.pixels()) v *= alpha;
  return out;
}

Image operator+(const Image& a, const Image& b) { return axpy(1.0, a, b); }
Image operator-(const Image& a, const Image& b) { return axpy(-1.0, b, a); }

}  // namespace unroll
