#pragma once

#include <string>
#include <utility>
#include <vector>

#include "unroll/image.hpp"
#include "unroll/rng.hpp"

namespace unroll {

/// img + n with n i.i.d. N(0, sigma²) drawn from `rng` in raster order. No clamping.
Image add_gaussian_noise(const Image& img, double sigma, Rng& rng);

struct PatchOffset {
  int row;
  int col;
};

struct PatchSet {
  int patch_size = 0;
  int stride = 0;
  std::string source_id;
  std::vector<Image> patches;
  std::vector<PatchOffset> offsets;
};

/// Raster-order square patches at offsets 0, stride, 2·stride, ...; a final
/// offset is snapped to the image edge when the grid would leave pixels uncovered.
PatchSet extract_patches(const Image& img, int size, int stride, std::string source_id = {});

/// Averages overlapping patches back into a height×width image.
Image reassemble(const PatchSet& set, int height, int width, double peak);

/// The eight dihedral variants in the order rot0, rot90, rot180, rot270,
/// flip∘rot0, flip∘rot90, flip∘rot180, flip∘rot270. Rotations are
/// counter-clockwise; flip mirrors left-right.
std::vector<Image> augment8(const Image& patch);

Image rotate90(const Image& img);
Image flip_horizontal(const Image& img);

}  // namespace unroll
