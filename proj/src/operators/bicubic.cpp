#include <cmath>
#include <vector>

#include "unroll/operators.hpp"

namespace unroll {
namespace {

// Keys cubic convolution kernel with a = -0.5.
double cubic(double x) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return (1.5 * ax - 2.5) * ax * ax + 1.0;
  if (ax < 2.0) return ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0;
  return 0.0;
}

int mirror(int i, int n) {
  // Symmetric extension: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

struct Tap {
  int index;
  double weight;
};

// Per-output-sample taps for resampling a length-`in` axis to length `out`
// with pixel-center alignment; downscaling widens the kernel (antialiasing).
std::vector<std::vector<Tap>> axis_taps(int in, int out) {
  const double scale = static_cast<double>(out) / in;
  const double kscale = scale < 1.0 ? scale : 1.0;
  const double width = 4.0 / kscale;
  std::vector<std::vector<Tap>> taps(out);
  for (int u = 0; u < out; ++u) {
    // 0-based source coordinate of the output pixel center.
    const double x = (u + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(x - width / 2.0));
    const int count = static_cast<int>(std::ceil(width)) + 2;
    double total = 0.0;
    std::vector<Tap> row;
    for (int k = 0; k < count; ++k) {
      const int j = left + k;
      const double w = kscale * cubic(kscale * (x - j));
      if (w == 0.0) continue;
      row.push_back({mirror(j, in), w});
      total += w;
    }
    for (auto& t : row) t.weight /= total;
    taps[u] = std::move(row);
  }
  return taps;
}

}  // namespace

Image bicubic_resize(const Image& x, Shape out) {
  const auto rt = axis_taps(x.height(), out.height);
  const auto ct = axis_taps(x.width(), out.width);
  Image tmp(x.height(), out.width, x.peak());
  for (int r = 0; r < x.height(); ++r)
    for (int c = 0; c < out.width; ++c) {
      double s = 0.0;
      for (const auto& t : ct[c]) s += t.weight * x(r, t.index);
      tmp(r, c) = s;
    }
  Image y(out.height, out.width, x.peak());
  for (int r = 0; r < out.height; ++r)
    for (const auto& t : rt[r])
      for (int c = 0; c < out.width; ++c) y(r, c) += t.weight * tmp(t.index, c);
  return y;
}

Image bicubic_resize_transpose(const Image& y, Shape in) {
  const auto rt = axis_taps(in.height, y.height());
  const auto ct = axis_taps(in.width, y.width());
  Image tmp(in.height, y.width(), y.peak());
  for (int r = 0; r < y.height(); ++r)
    for (const auto& t : rt[r])
      for (int c = 0; c < y.width(); ++c) tmp(t.index, c) += t.weight * y(r, c);
  Image x(in.height, in.width, y.peak());
  for (int r = 0; r < in.height; ++r)
    for (int c = 0; c < y.width(); ++c)
      for (const auto& t : ct[c]) x(r, t.index) += t.weight * tmp(r, c);
  return x;
}

}  // namespace unroll
