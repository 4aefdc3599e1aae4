#include "unroll/metrics.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "unroll/error.hpp"

namespace unroll {
namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;

std::vector<double> gaussian_window_1d() {
  std::vector<double> w(kWindow);
  const int c = kWindow / 2;
  double s = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - c;
    w[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    s += w[i];
  }
  for (double& v : w) v /= s;
  return w;
}

// Separable weighted mean over every valid window; output is (h-10)x(w-10).
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& win) {
  const int oh = h - kWindow + 1;
  const int ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += win[k] * src[static_cast<std::size_t>(r) * w + c + k];
      rows[static_cast<std::size_t>(r) * ow + c] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += win[k] * rows[static_cast<std::size_t>(r + k) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = s;
    }
  return out;
}

void require_comparable(const Image& a, const Image& b, const char* what) {
  require_same_shape(a, b, what);
  if (a.peak() != b.peak()) throw Error(std::string(what) + ": images have different peak values");
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_comparable(a, b, "psnr");
  const double mse = dist_sq(a, b) / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return 10.0 * std::log10(a.peak() * a.peak() / mse);
}

double ssim(const Image& a, const Image& b) {
  require_comparable(a, b, "ssim");
  if (a.height() < kWindow || a.width() < kWindow)
    throw Error("ssim: image smaller than the 11x11 window");
  const int h = a.height();
  const int w = a.width();
  const auto win = gaussian_window_1d();

  const std::vector<double>& va = a.vec();
  const std::vector<double>& vb = b.vec();
  std::vector<double> aa(va.size()), bb(va.size()), ab(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) {
    aa[i] = va[i] * va[i];
    bb[i] = vb[i] * vb[i];
    ab[i] = va[i] * vb[i];
  }
  const auto mu_a = filter_valid(va, h, w, win);
  const auto mu_b = filter_valid(vb, h, w, win);
  const auto e_aa = filter_valid(aa, h, w, win);
  const auto e_bb = filter_valid(bb, h, w, win);
  const auto e_ab = filter_valid(ab, h, w, win);

  const double c1 = (0.01 * a.peak()) * (0.01 * a.peak());
  const double c2 = (0.03 * a.peak()) * (0.03 * a.peak());
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma;
    const double var_b = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
    const double den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
    total += num / den;
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace unroll
