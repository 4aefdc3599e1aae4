#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "support/oracles.hpp"
#include "unroll/error.hpp"
#include "unroll/operators.hpp"

using namespace unroll;
namespace fs = std::filesystem;

namespace {

Kernel random_kernel(int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> taps(static_cast<std::size_t>(size) * size);
  for (double& t : taps) t = rng.uniform();
  return Kernel(size, std::move(taps));
}

std::vector<DegradationOp> exact_ops(int h, int w) {
  return {DegradationOp::identity({h, w}), DegradationOp::blur(random_kernel(3, 1), {h, w}),
          DegradationOp::blur(gaussian_kernel(7, 1.6), {h, w}),
          DegradationOp::blur_downsample(gaussian_kernel(5, 1.2), 2, {h, w})};
}

fs::path write_text(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "unroll_operator_tests";
  fs::create_directories(dir);
  std::ofstream(dir / name) << text;
  return dir / name;
}

}  // namespace

TEST_CASE("identity and delta blur leave images unchanged") {
  const Image x = oracle::random_image(6, 5, 3);
  CHECK(apply(DegradationOp::identity({6, 5}), x).vec() == x.vec());
  CHECK(adjoint(DegradationOp::identity({6, 5}), x).vec() == x.vec());
  CHECK(apply(DegradationOp::blur(Kernel::delta(), {6, 5}), x).vec() == x.vec());
}

TEST_CASE("apply and adjoint match the probed dense matrix") {
  const int h = 8, w = 8;
  for (const auto& op : exact_ops(h, w)) {
    CAPTURE(to_string(op.kind()));
    const Eigen::MatrixXd a = oracle::probe([&](const Image& e) { return apply(op, e); }, h, w);
    const Shape out = op.output_shape();
    const Eigen::MatrixXd at =
        oracle::probe([&](const Image& e) { return adjoint(op, e); }, out.height, out.width);
    CHECK((at - a.transpose()).cwiseAbs().maxCoeff() <= 1e-10);

    const Image x = oracle::random_image(h, w, 17);
    const Image y = apply(op, x);
    const Eigen::VectorXd dense = a * oracle::to_vec(x);
    CHECK((oracle::to_vec(y) - dense).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("circular blur matches an explicit convolution sum") {
  // Independent of the probe: direct definition with modular indices.
  const Kernel k = random_kernel(3, 9);
  const Image x = oracle::random_image(5, 7, 10);
  const Image y = apply(DegradationOp::blur(k, {5, 7}), x);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 7; ++j) {
      double s = 0.0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) s += k(a, b) * x(((i - a + 1) % 5 + 5) % 5, ((j - b + 1) % 7 + 7) % 7);
      CHECK(std::abs(y(i, j) - s) < 1e-12);
    }
}

TEST_CASE("symmetric kernel blur is self-adjoint") {
  const auto op = DegradationOp::blur(gaussian_kernel(5, 1.0), {9, 9});
  const Image y = oracle::random_image(9, 9, 4);
  CHECK(oracle::max_abs_diff(adjoint(op, y), apply(op, y)) < 1e-12);
}

TEST_CASE("adjoint inner-product identity") {
  Rng shapes(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 8 + 2 * static_cast<int>(shapes.below(5));
    const int w = 8 + 2 * static_cast<int>(shapes.below(5));
    for (const auto& op : exact_ops(h, w)) {
      const Image x = oracle::random_image(h, w, 100 + trial);
      const Image y = oracle::random_image(op.output_shape().height, op.output_shape().width, 200 + trial);
      const double lhs = dot(apply(op, x), y);
      const double rhs = dot(x, adjoint(op, y));
      CHECK(std::abs(lhs - rhs) <= 1e-8 * norm(x) * norm(y));
    }
  }
}

TEST_CASE("bicubic transpose is exact while its surrogate adjoint is not") {
  const auto op = DegradationOp::bicubic(2, {12, 12});
  const Image x = oracle::random_image(12, 12, 1);
  const Image y = oracle::random_image(6, 6, 2);
  CHECK(std::abs(dot(apply(op, x), y) - dot(x, apply_transpose(op, y))) < 1e-10 * norm(x) * norm(y));
  CHECK(std::abs(dot(adjoint(op, y), x) - dot(y, adjoint_transpose(op, x))) < 1e-10 * norm(x) * norm(y));
  CHECK_FALSE(op.exact_adjoint());
  const double violation = std::abs(dot(apply(op, x), y) - dot(x, adjoint(op, y)));
  CHECK(violation > 1e-8 * norm(x) * norm(y));
}

TEST_CASE("bicubic resize preserves constants and shapes") {
  const Image flat = Image(16, 12).filled(42.0);
  const auto op = DegradationOp::bicubic(4, {16, 12});
  const Image small = apply(op, flat);
  CHECK(small.height() == 4);
  CHECK(small.width() == 3);
  for (double v : small.pixels()) CHECK(v == doctest::Approx(42.0).epsilon(1e-12));
  const Image big = adjoint(op, small);
  CHECK(big.height() == 16);
  for (double v : big.pixels()) CHECK(v == doctest::Approx(42.0).epsilon(1e-12));
}

TEST_CASE("linearity") {
  for (const auto& op : exact_ops(10, 12)) {
    const Image x1 = oracle::random_image(10, 12, 1);
    const Image x2 = oracle::random_image(10, 12, 2);
    const double alpha = -1.7;
    const Image lhs = apply(op, axpy(alpha, x1, x2));
    const Image rhs = axpy(alpha, apply(op, x1), apply(op, x2));
    CHECK(oracle::max_abs_diff(lhs, rhs) < 1e-10);
  }
}

TEST_CASE("operator shape and factor errors") {
  CHECK_THROWS_AS(DegradationOp::blur_downsample(gaussian_kernel(3, 1.0), 3, {8, 8}), Error);
  CHECK_THROWS_AS(DegradationOp::bicubic(3, {9, 8}), Error);
  const auto op = DegradationOp::blur(gaussian_kernel(3, 1.0), {8, 8});
  CHECK_THROWS_AS(apply(op, Image(8, 9)), Error);
  CHECK_THROWS_AS(adjoint(DegradationOp::blur_downsample(Kernel::delta(), 2, {8, 8}), Image(8, 8)), Error);
}

TEST_CASE("gaussian_kernel") {
  const Kernel flat = gaussian_kernel(3, 1e6);
  for (double t : flat.taps()) CHECK(std::abs(t - 1.0 / 9.0) < 1e-9);

  for (auto [size, sigma] : {std::pair{3, 0.5}, std::pair{7, 1.6}, std::pair{25, 1.6}, std::pair{9, 3.0}}) {
    const Kernel k = gaussian_kernel(size, sigma);
    CHECK(std::abs(k.sum() - 1.0) <= 1e-12);
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) {
        CHECK(k(i, j) == k(j, i));
        CHECK(k(i, j) == k(size - 1 - i, j));
        CHECK(k(i, j) == k(i, size - 1 - j));
      }
  }

  // Center tap of the 25×25, σ=1.6 kernel: 1 / Σ exp(-(i²+j²)/(2σ²)).
  double total = 0.0;
  for (int i = -12; i <= 12; ++i)
    for (int j = -12; j <= 12; ++j) total += std::exp(-(i * i + j * j) / (2.0 * 1.6 * 1.6));
  CHECK(std::abs(gaussian_kernel(25, 1.6)(12, 12) - 1.0 / total) < 1e-12);

  CHECK_THROWS_AS(gaussian_kernel(4, 1.0), Error);
  CHECK_THROWS_AS(gaussian_kernel(3, 0.0), Error);
}

TEST_CASE("load_kernel") {
  const Kernel d = load_kernel(write_text("delta.txt", "1 1\n1.0\n"));
  CHECK(d.size() == 1);
  CHECK(d(0, 0) == 1.0);

  const Kernel two = load_kernel(write_text("two.txt", "3 3\n0 0 0\n0.5 1 0.5\n0 0 0\n"));
  CHECK(std::abs(two.sum() - 1.0) < 1e-15);
  CHECK(two(1, 1) == 0.5);

  CHECK_THROWS_AS(load_kernel(write_text("even.txt", "2 2\n1 0\n0 1\n")), FormatError);
  CHECK_THROWS_AS(load_kernel(write_text("short.txt", "3 3\n1 1 1\n1 1 1\n")), FormatError);
  CHECK_THROWS_AS(load_kernel(write_text("garbage.txt", "3 3\n1 x 1\n1 1 1\n1 1 1\n")), FormatError);
  CHECK_THROWS_AS(load_kernel(write_text("nonsquare.txt", "3 5\n")), FormatError);
  CHECK_THROWS_AS(load_kernel("/nonexistent/kernel.txt"), Error);
}

TEST_CASE("shipped motion kernel fixtures") {
  const fs::path data = UNROLL_TEST_DATA_DIR;
  const Kernel k19 = load_kernel(data / "kernels" / "motion19.txt");
  CHECK(k19.size() == 19);
  CHECK(std::abs(k19.sum() - 1.0) <= 1e-12);
  const Kernel k17 = load_kernel(data / "kernels" / "motion17.txt");
  CHECK(k17.size() == 17);
  CHECK(std::abs(k17.sum() - 1.0) <= 1e-12);
}

TEST_CASE("operator_norm_sq") {
  CHECK(std::abs(operator_norm_sq(DegradationOp::identity({8, 8}), 100).value - 1.0) <= 1e-9);

  const auto blur = DegradationOp::blur(gaussian_kernel(25, 1.6), {64, 64});
  CHECK(std::abs(operator_norm_sq(blur, 100).value - 1.0) <= 1e-6);

  const auto bd = DegradationOp::blur_downsample(gaussian_kernel(7, 1.6), 2, {8, 8});
  const Eigen::MatrixXd a = oracle::probe([&](const Image& e) { return apply(bd, e); }, 8, 8);
  const double dense = oracle::top_eigenvalue(a.transpose() * a);
  CHECK(std::abs(operator_norm_sq(bd, 100).value - dense) <= 1e-6);

  const auto blur8 = DegradationOp::blur(random_kernel(3, 4), {8, 8});
  const Eigen::MatrixXd b = oracle::probe([&](const Image& e) { return apply(blur8, e); }, 8, 8);
  CHECK(std::abs(operator_norm_sq(blur8, 100).value - oracle::top_eigenvalue(b.transpose() * b)) <=
        1e-6 * oracle::top_eigenvalue(b.transpose() * b));
}

TEST_CASE("operator_norm_sq never decreases with more iterations") {
  const auto op = DegradationOp::blur_downsample(gaussian_kernel(7, 1.6), 2, {16, 16});
  double prev = 0.0;
  for (int it = 1; it <= 40; ++it) {
    Rng rng(11);
    const auto est = operator_norm_sq(op, it, rng);
    CHECK(est.value >= prev - 1e-15 * std::abs(prev));
    prev = est.value;
  }
}

TEST_CASE("apply_abar") {
  const auto id = DegradationOp::identity({5, 5});
  const Image x = oracle::random_image(5, 5, 6);
  // Denoising: Ā reduces to (1 - δ(1+η)) I.
  CHECK(oracle::max_abs_diff(apply_abar(id, 0.1, 1.0, x), scaled(x, 0.8)) < 1e-15);
  CHECK(apply_abar(id, 0.0, 1.0, x).vec() == x.vec());

  const auto op = DegradationOp::blur(random_kernel(3, 12), {8, 8});
  const double delta = 0.3, eta = 0.7;
  const Eigen::MatrixXd a = oracle::probe([&](const Image& e) { return apply(op, e); }, 8, 8);
  const Eigen::MatrixXd abar =
      (1.0 - delta * eta) * Eigen::MatrixXd::Identity(64, 64) - delta * a.transpose() * a;
  const Eigen::MatrixXd probed = oracle::probe([&](const Image& e) { return apply_abar(op, delta, eta, e); }, 8, 8);
  CHECK((probed - abar).cwiseAbs().maxCoeff() <= 1e-10);

  // Rearranged identity: Āx + δAᵀAx + δηx = x.
  for (const auto& o : exact_ops(8, 10)) {
    const Image z = oracle::random_image(8, 10, 13);
    const Image lhs = apply_abar(o, delta, eta, z) + scaled(adjoint(o, apply(o, z)), delta) + scaled(z, delta * eta);
    CHECK(oracle::max_abs_diff(lhs, z) < 1e-10);
  }
}
