#include "unroll/imaging.hpp"

#include "unroll/error.hpp"

namespace unroll {

Image add_gaussian_noise(const Image& img, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw Error("noise sigma must be non-negative");
  Image out = img;
  if (sigma == 0.0) return out;
  for (double& v : out.pixels()) v += sigma * rng.normal();
  return out;
}

namespace {

std::vector<int> grid_offsets(int extent, int size, int stride) {
  std::vector<int> offs;
  for (int o = 0; o + size <= extent; o += stride) offs.push_back(o);
  if (offs.back() != extent - size) offs.push_back(extent - size);
  return offs;
}

}  // namespace

PatchSet extract_patches(const Image& img, int size, int stride, std::string source_id) {
  if (size < 1 || stride < 1) throw Error("patch size and stride must be positive");
  if (size > img.height() || size > img.width()) throw Error("patch size exceeds image");
  PatchSet set;
  set.patch_size = size;
  set.stride = stride;
  set.source_id = std::move(source_id);
  const auto rows = grid_offsets(img.height(), size, stride);
  const auto cols = grid_offsets(img.width(), size, stride);
  for (int r0 : rows)
    for (int c0 : cols) {
      Image p(size, size, img.peak());
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) p(r, c) = img(r0 + r, c0 + c);
      set.patches.push_back(std::move(p));
      set.offsets.push_back({r0, c0});
    }
  return set;
}

Image reassemble(const PatchSet& set, int height, int width, double peak) {
  Image sum(height, width, peak);
  std::vector<int> count(static_cast<std::size_t>(height) * width, 0);
  for (std::size_t i = 0; i < set.patches.size(); ++i) {
    const auto [r0, c0] = set.offsets[i];
    for (int r = 0; r < set.patch_size; ++r)
      for (int c = 0; c < set.patch_size; ++c) {
        sum(r0 + r, c0 + c) += set.patches[i](r, c);
        ++count[static_cast<std::size_t>(r0 + r) * width + c0 + c];
      }
  }
  auto px = sum.pixels();
  for (std::size_t i = 0; i < px.size(); ++i)
    if (count[i] > 0) px[i] /= count[i];
  return sum;
}

Image rotate90(const Image& img) {
  if (img.height() != img.width()) throw Error("rotate90 requires a square image");
  const int n = img.height();
  Image out(n, n, img.peak());
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) out(r, c) = img(c, n - 1 - r);
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height(), img.width(), img.peak());
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) out(r, c) = img(r, img.width() - 1 - c);
  return out;
}

std::vector<Image> augment8(const Image& patch) {
  if (patch.height() != patch.width()) throw Error("augment8 requires a square patch");
  std::vector<Image> out;
  out.reserve(8);
  out.push_back(patch);
  for (int i = 0; i < 3; ++i) out.push_back(rotate90(out.back()));
  for (int i = 0; i < 4; ++i) out.push_back(flip_horizontal(out[i]));
  return out;
}

}  // namespace unroll
