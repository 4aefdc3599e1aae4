#include "unroll/operators.hpp"

#include <string>

#include "unroll/error.hpp"

namespace unroll {
namespace {

int wrap(int i, int n) {
  const int m = i % n;
  return m < 0 ? m + n : m;
}

// Circularly padded copy: out(r, c) = x((r - pad) mod h, (c - pad) mod w).
std::vector<double> circular_pad(const Image& x, int pad, int& ph, int& pw) {
  ph = x.height() + 2 * pad;
  pw = x.width() + 2 * pad;
  std::vector<double> out(static_cast<std::size_t>(ph) * pw);
  for (int r = 0; r < ph; ++r) {
    const int sr = wrap(r - pad, x.height());
    for (int c = 0; c < pw; ++c) out[static_cast<std::size_t>(r) * pw + c] = x(sr, wrap(c - pad, x.width()));
  }
  return out;
}

void require_shape(const Image& img, Shape s, const char* what) {
  if (img.height() != s.height || img.width() != s.width) {
    throw Error(std::string(what) + ": expected " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                " image, got " + std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
}

void require_divisible(Shape in, int factor) {
  if (factor < 1) throw Error("scale factor must be positive");
  if (in.height % factor != 0 || in.width % factor != 0)
    throw Error("scale factor " + std::to_string(factor) + " does not divide image dimensions " +
                std::to_string(in.height) + "x" + std::to_string(in.width));
}

}  // namespace

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Identity: return "identity";
    case OpKind::Blur: return "blur";
    case OpKind::BlurDownsample: return "blur_downsample";
    case OpKind::BicubicResize: return "bicubic";
  }
  return "unknown";
}

DegradationOp DegradationOp::identity(Shape in) {
  if (in.height < 1 || in.width < 1) throw Error("operator shape must be positive");
  return DegradationOp(OpKind::Identity, Kernel::delta(), 1, in, in);
}

DegradationOp DegradationOp::blur(Kernel k, Shape in) {
  if (in.height < 1 || in.width < 1) throw Error("operator shape must be positive");
  return DegradationOp(OpKind::Blur, std::move(k), 1, in, in);
}

DegradationOp DegradationOp::blur_downsample(Kernel k, int factor, Shape in) {
  require_divisible(in, factor);
  return DegradationOp(OpKind::BlurDownsample, std::move(k), factor, in,
                       {in.height / factor, in.width / factor});
}

DegradationOp DegradationOp::bicubic(int factor, Shape in) {
  require_divisible(in, factor);
  return DegradationOp(OpKind::BicubicResize, Kernel::delta(), factor, in,
                       {in.height / factor, in.width / factor});
}

Image circular_convolve(const Image& x, const Kernel& k) {
  const int rad = k.radius();
  int ph = 0;
  int pw = 0;
  const auto xp = circular_pad(x, rad, ph, pw);
  Image y(x.height(), x.width(), x.peak());
  const int h = x.height();
  const int w = x.width();
  // y(i, j) = Σ k(a, b) x(i - a + rad, j - b + rad), indices circular.
  for (int a = 0; a < k.size(); ++a)
    for (int b = 0; b < k.size(); ++b) {
      const double t = k(a, b);
      if (t == 0.0) continue;
      for (int i = 0; i < h; ++i) {
        const double* src = &xp[static_cast<std::size_t>(i - a + 2 * rad) * pw + (2 * rad - b)];
        double* dst = &y(i, 0);
        for (int j = 0; j < w; ++j) dst[j] += t * src[j];
      }
    }
  return y;
}

Image circular_correlate(const Image& x, const Kernel& k) {
  const int rad = k.radius();
  int ph = 0;
  int pw = 0;
  const auto xp = circular_pad(x, rad, ph, pw);
  Image y(x.height(), x.width(), x.peak());
  const int h = x.height();
  const int w = x.width();
  // y(i, j) = Σ k(a, b) x(i + a - rad, j + b - rad).
  for (int a = 0; a < k.size(); ++a)
    for (int b = 0; b < k.size(); ++b) {
      const double t = k(a, b);
      if (t == 0.0) continue;
      for (int i = 0; i < h; ++i) {
        const double* src = &xp[static_cast<std::size_t>(i + a) * pw + b];
        double* dst = &y(i, 0);
        for (int j = 0; j < w; ++j) dst[j] += t * src[j];
      }
    }
  return y;
}

Image decimate(const Image& x, int factor) {
  Image y(x.height() / factor, x.width() / factor, x.peak());
  for (int r = 0; r < y.height(); ++r)
    for (int c = 0; c < y.width(); ++c) y(r, c) = x(r * factor, c * factor);
  return y;
}

Image zero_fill_upsample(const Image& y, int factor, Shape out) {
  Image x(out.height, out.width, y.peak());
  for (int r = 0; r < y.height(); ++r)
    for (int c = 0; c < y.width(); ++c) x(r * factor, c * factor) = y(r, c);
  return x;
}

Image apply(const DegradationOp& op, const Image& x) {
  require_shape(x, op.input_shape(), "apply");
  switch (op.kind()) {
    case OpKind::Identity: return x;
    case OpKind::Blur: return circular_convolve(x, op.kernel());
    case OpKind::BlurDownsample: return decimate(circular_convolve(x, op.kernel()), op.factor());
    case OpKind::BicubicResize: return bicubic_resize(x, op.output_shape());
  }
  throw Error("unknown operator kind");
}

Image adjoint(const DegradationOp& op, const Image& y) {
  require_shape(y, op.output_shape(), "adjoint");
  switch (op.kind()) {
    case OpKind::Identity: return y;
    case OpKind::Blur: return circular_correlate(y, op.kernel());
    case OpKind::BlurDownsample:
      return circular_correlate(zero_fill_upsample(y, op.factor(), op.input_shape()), op.kernel());
    case OpKind::BicubicResize: return bicubic_resize(y, op.input_shape());
  }
  throw Error("unknown operator kind");
}

Image apply_transpose(const DegradationOp& op, const Image& y) {
  if (op.kind() == OpKind::BicubicResize) {
    require_shape(y, op.output_shape(), "apply_transpose");
    return bicubic_resize_transpose(y, op.input_shape());
  }
  return adjoint(op, y);
}

Image adjoint_transpose(const DegradationOp& op, const Image& x) {
  if (op.kind() == OpKind::BicubicResize) {
    require_shape(x, op.input_shape(), "adjoint_transpose");
    return bicubic_resize_transpose(x, op.output_shape());
  }
  return apply(op, x);
}

Image apply_abar(const DegradationOp& op, double delta, double eta, const Image& x) {
  const Image normal = adjoint(op, apply(op, x));
  return axpy(-delta, normal, scaled(x, 1.0 - delta * eta));
}

Image apply_abar_transpose(const DegradationOp& op, double delta, double eta, const Image& g) {
  const Image normal_t = apply_transpose(op, adjoint_transpose(op, g));
  return axpy(-delta, normal_t, scaled(g, 1.0 - delta * eta));
}

}  // namespace unroll
