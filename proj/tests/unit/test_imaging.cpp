#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "unroll/error.hpp"
#include "unroll/image_io.hpp"
#include "unroll/imaging.hpp"
#include "unroll/metrics.hpp"

using namespace unroll;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "unroll_imaging_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("image rejects invalid construction") {
  CHECK_THROWS_AS(Image(0, 3), Error);
  CHECK_THROWS_AS(Image(2, 2, std::vector<double>(3)), Error);
  Image img(2, 2);
  img(0, 1) = std::nan("");
  CHECK_FALSE(img.all_finite());
}

TEST_CASE("load_image maps P5 bytes directly") {
  const auto p = temp_path("tiny.pgm");
  write_bytes(p, std::string("P5\n2 2\n255\n") + std::string("\x00\xff\x80\x40", 4));
  const Image img = load_image(p);
  REQUIRE(img.height() == 2);
  REQUIRE(img.width() == 2);
  CHECK(img.peak() == 255.0);
  CHECK(img(0, 0) == 0.0);
  CHECK(img(0, 1) == 255.0);
  CHECK(img(1, 0) == 128.0);
  CHECK(img(1, 1) == 64.0);
}

TEST_CASE("PGM round trip is byte identical") {
  const Image scene = fixtures::scene(23, 17, 3);
  const auto a = temp_path("a.pgm");
  const auto b = temp_path("b.pgm");
  save_image(scene, a);
  save_image(load_image(a), b);
  CHECK(read_bytes(a) == read_bytes(b));
}

TEST_CASE("load_image errors") {
  CHECK_THROWS_AS(load_image(temp_path("does_not_exist.pgm")), Error);
  const auto wide = temp_path("wide.pgm");
  write_bytes(wide, std::string("P5\n1 1\n65535\n") + std::string("\x01\x02", 2));
  try {
    load_image(wide);
    FAIL("expected an exception");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("unsupported format") != std::string::npos);
  }
  const auto zero = temp_path("zero.pgm");
  write_bytes(zero, "P5\n0 4\n255\n");
  CHECK_THROWS_AS(load_image(zero), FormatError);
  const auto ascii = temp_path("ascii.pgm");
  write_bytes(ascii, "P2\n1 1\n255\n7\n");
  CHECK_THROWS_AS(load_image(ascii), FormatError);
}

TEST_CASE("save_image clamps and rounds half away from zero") {
  Image img(1, 3);
  img(0, 0) = -3.2;
  img(0, 1) = 254.5;
  img(0, 2) = 100.0;
  const auto codes = quantize8(img);
  CHECK(codes[0] == 0);
  CHECK(codes[1] == 255);
  CHECK(codes[2] == 100);
  const auto p = temp_path("clamp.pgm");
  save_image(img, p);
  const Image back = load_image(p);
  CHECK(back(0, 0) == 0.0);
  CHECK(back(0, 1) == 255.0);
  CHECK(back(0, 2) == 100.0);
  CHECK_THROWS_AS(save_image(img, "/nonexistent-dir/x.pgm"), Error);
}

#ifdef UNROLL_HAVE_PNG
TEST_CASE("PNG round trip keeps 8-bit values") {
  const Image scene = fixtures::scene(12, 9, 5);
  const auto p = temp_path("scene.png");
  save_image(scene, p);
  const Image back = load_image(p);
  const auto codes = quantize8(scene);
  for (std::size_t i = 0; i < codes.size(); ++i) CHECK(back.pixels()[i] == codes[i]);
}
#endif

TEST_CASE("psnr examples") {
  const Image a = fixtures::scene(8, 8, 1);
  Image b = a;
  for (double& v : b.pixels()) v += 10.0;
  CHECK(psnr(a, b) == doctest::Approx(20.0 * std::log10(255.0 / 10.0)).epsilon(1e-12));
  CHECK(std::abs(psnr(a, b) - 28.1308) < 1e-4);
  CHECK(psnr(a, a) == 100.0);
  const Image x = oracle::random_image(4, 4, 7, 30.0);
  const Image y = oracle::random_image(4, 4, 8, 30.0);
  CHECK(std::abs(psnr(x, y) - oracle::psnr(x, y)) < 1e-10);
  CHECK_THROWS_AS(psnr(a, Image(4, 4)), Error);
}

TEST_CASE("psnr decreases as noise grows") {
  const Image clean = fixtures::scene(32, 32, 11);
  double prev = 1e9;
  for (double sigma : {5.0, 15.0, 25.0, 50.0}) {
    Rng rng(99);
    const double p = psnr(clean, add_gaussian_noise(clean, sigma, rng));
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim examples and properties") {
  const Image a = fixtures::scene(16, 16, 2);
  CHECK(ssim(a, a) == 1.0);
  Image inv = a;
  for (double& v : inv.pixels()) v = 255.0 - v;
  CHECK(ssim(a, inv) < 1.0);

  Rng rng(4);
  const Image b = add_gaussian_noise(a, 20.0, rng);
  CHECK(std::abs(ssim(a, b) - oracle::ssim(a, b)) < 1e-6);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) <= 1e-12);
  CHECK_THROWS_AS(ssim(Image(10, 20), Image(10, 20)), Error);
  CHECK_THROWS_AS(ssim(a, Image(16, 17)), Error);
}

TEST_CASE("gaussian noise") {
  const Image zero(256, 256);
  Rng r0(1);
  CHECK(add_gaussian_noise(zero, 0.0, r0).vec() == zero.vec());

  Rng rng(2024);
  const Image n = add_gaussian_noise(zero, 25.0, rng);
  double mean = 0.0;
  for (double v : n.pixels()) mean += v;
  mean /= n.size();
  double var = 0.0;
  for (double v : n.pixels()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (n.size() - 1));
  CHECK(sd >= 24.0);
  CHECK(sd <= 26.0);

  Rng a(77), b(77);
  CHECK(add_gaussian_noise(zero, 5.0, a).vec() == add_gaussian_noise(zero, 5.0, b).vec());
  Rng c(1);
  CHECK_THROWS_AS(add_gaussian_noise(zero, -1.0, c), Error);
}

TEST_CASE("rng stream is pinned") {
  // First outputs of xoshiro256** seeded by splitmix64(0); any change here
  // breaks cross-language reproducibility.
  Rng rng(0);
  const std::uint64_t first = rng.next_u64();
  Rng again(0);
  CHECK(again.next_u64() == first);
  std::uint64_t sm = 0;
  const std::uint64_t s0 = splitmix64(sm);
  CHECK(s0 == 0xe220a8397b1dcdafULL);
}

TEST_CASE("extract_patches tiling and edge snapping") {
  const Image img4 = fixtures::scene(4, 4, 5);
  const PatchSet t = extract_patches(img4, 2, 2);
  CHECK(t.patches.size() == 4);

  const Image img5 = fixtures::scene(5, 5, 5);
  const PatchSet s = extract_patches(img5, 2, 2);
  REQUIRE(s.patches.size() == 9);
  CHECK(s.offsets.back().row == 3);
  CHECK(s.offsets.back().col == 3);
  for (std::size_t i = 0; i < s.patches.size(); ++i) {
    CHECK(s.patches[i].height() == 2);
    CHECK(s.offsets[i].row + 2 <= 5);
    CHECK(s.patches[i](1, 1) == img5(s.offsets[i].row + 1, s.offsets[i].col + 1));
  }

  const Image img40 = fixtures::scene(40, 40, 6);
  const PatchSet one = extract_patches(img40, 40, 40);
  REQUIRE(one.patches.size() == 1);
  CHECK(one.patches[0].vec() == img40.vec());

  CHECK_THROWS_AS(extract_patches(img4, 5, 1), Error);
}

TEST_CASE("exact tiling reassembles the source") {
  const Image img = fixtures::scene(12, 18, 8);
  const PatchSet set = extract_patches(img, 6, 6);
  CHECK(reassemble(set, 12, 18, img.peak()).vec() == img.vec());
}

TEST_CASE("augment8") {
  Image p(2, 2);
  p(0, 0) = 1;
  p(0, 1) = 2;
  p(1, 0) = 3;
  p(1, 1) = 4;
  const auto v = augment8(p);
  REQUIRE(v.size() == 8);
  CHECK(v[1](0, 0) == 2);
  CHECK(v[1](0, 1) == 4);
  CHECK(v[1](1, 0) == 1);
  CHECK(v[1](1, 1) == 3);
  CHECK(rotate90(rotate90(v[2])).vec() == p.vec());

  const Image flat = Image(3, 3).filled(7.0);
  for (const auto& q : augment8(flat)) CHECK(q.vec() == flat.vec());

  CHECK_THROWS_AS(augment8(Image(2, 3)), Error);
}

TEST_CASE("augment8 outputs are closed under the dihedral group") {
  const Image p = oracle::random_image(5, 5, 42);
  const auto variants = augment8(p);
  for (const auto& q : variants)
    for (const auto& transformed : augment8(q)) {
      bool found = false;
      for (const auto& r : variants) found = found || r.vec() == transformed.vec();
      CHECK(found);
    }
}
