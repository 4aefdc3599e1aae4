#pragma once

#include <algorithm>
#include <cmath>

#include "unroll/image.hpp"
#include "unroll/imaging.hpp"
#include "unroll/operators.hpp"
#include "unroll/rng.hpp"
#include "unroll/solver.hpp"

namespace fixtures {

/// Piecewise-smooth synthetic scene: a tilted intensity ramp with random
/// rectangles and discs. Values lie in [0.1, 0.9]·peak.
inline unroll::Image scene(int h, int w, std::uint64_t seed, double peak = 255.0) {
  unroll::Rng rng(seed);
  unroll::Image img(h, w, peak);
  const double gx = rng.uniform() - 0.5;
  const double gy = rng.uniform() - 0.5;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) img(r, c) = 0.5 + 0.3 * (gx * c / w + gy * r / h);
  const int shapes = 3 + static_cast<int>(rng.below(4));
  for (int s = 0; s < shapes; ++s) {
    const double level = 0.15 + 0.7 * rng.uniform();
    const int r0 = static_cast<int>(rng.below(h));
    const int c0 = static_cast<int>(rng.below(w));
    const int rh = 2 + static_cast<int>(rng.below(h / 2));
    const int cw = 2 + static_cast<int>(rng.below(w / 2));
    const bool disc = rng.uniform() < 0.5;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        bool inside = false;
        if (disc) {
          const double dr = (r - r0) / (0.5 * rh), dc = (c - c0) / (0.5 * cw);
          inside = dr * dr + dc * dc <= 1.0;
        } else {
          inside = r >= r0 && r < r0 + rh && c >= c0 && c < c0 + cw;
        }
        if (inside) img(r, c) = level;
      }
  }
  for (double& v : img.pixels()) v = std::clamp(v, 0.1, 0.9) * peak;
  return img;
}

enum class Task { Denoise, Deblur, SuperRes };

inline const char* task_name(Task t) {
  return t == Task::Denoise ? "denoise" : t == Task::Deblur ? "deblur" : "sr";
}

/// Operators of the convergence fixtures: identity, 25×25 Gaussian blur
/// (σ = 1.6), and 7×7 Gaussian blur (σ = 1.6) followed by 2× decimation.
inline unroll::DegradationOp task_operator(Task t, int h, int w) {
  using unroll::DegradationOp;
  switch (t) {
    case Task::Denoise: return DegradationOp::identity({h, w});
    case Task::Deblur: return DegradationOp::blur(unroll::gaussian_kernel(25, 1.6), {h, w});
    case Task::SuperRes: break;
  }
  return DegradationOp::blur_downsample(unroll::gaussian_kernel(7, 1.6), 2, {h, w});
}

/// y = A·scene + noise on the [0, 1] scale.
inline unroll::Problem task_problem(Task t, int size, std::uint64_t seed, double sigma, double eta, double lambda) {
  const unroll::Image truth = scene(size, size, seed, 1.0);
  unroll::DegradationOp op = task_operator(t, size, size);
  unroll::Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  unroll::Image y = unroll::add_gaussian_noise(unroll::apply(op, truth), sigma, rng);
  return unroll::Problem{std::move(y), std::move(op), lambda, eta};
}

}  // namespace fixtures
