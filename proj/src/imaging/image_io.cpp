#include "unroll/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#ifdef UNROLL_HAVE_PNG
#include <png.h>
#endif

#include "unroll/error.hpp"

namespace unroll {
namespace {

bool has_png_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(const std::vector<unsigned char>& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#')
    tok.push_back(static_cast<char>(buf[pos++]));
  return tok;
}

int parse_positive(const std::string& tok, const std::filesystem::path& path) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(c); }))
    throw FormatError("malformed PGM header in " + path.string());
  const long v = std::stol(tok);
  if (v > 1'000'000) throw FormatError("malformed PGM header in " + path.string());
  return static_cast<int>(v);
}

Image load_pgm(const std::vector<unsigned char>& buf, const std::filesystem::path& path) {
  std::size_t pos = 0;
  if (next_token(buf, pos) != "P5") throw FormatError("unsupported format: " + path.string());
  const int width = parse_positive(next_token(buf, pos), path);
  const int height = parse_positive(next_token(buf, pos), path);
  const int maxval = parse_positive(next_token(buf, pos), path);
  if (width == 0 || height == 0) throw FormatError("zero-size image: " + path.string());
  if (maxval == 0 || maxval > 255) throw FormatError("unsupported format: " + path.string());
  ++pos;  // single whitespace byte after maxval
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (buf.size() < pos + n) throw FormatError("truncated PGM data in " + path.string());
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = buf[pos + i];
  return Image(height, width, std::move(data), 255.0);
}

#ifdef UNROLL_HAVE_PNG
Image load_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw FormatError("unsupported format: " + path.string());
  png.format = PNG_FORMAT_GRAY;
  if (png.width == 0 || png.height == 0) {
    png_image_free(&png);
    throw FormatError("zero-size image: " + path.string());
  }
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&png);
    throw FormatError("unsupported format: " + path.string());
  }
  std::vector<double> data(bytes.begin(), bytes.end());
  return Image(static_cast<int>(png.height), static_cast<int>(png.width), std::move(data), 255.0);
}
#endif

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image: " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() >= 8 && buf[0] == 0x89 && buf[1] == 'P' && buf[2] == 'N' && buf[3] == 'G') {
#ifdef UNROLL_HAVE_PNG
    return load_png(path);
#else
    throw FormatError("unsupported format (built without PNG support): " + path.string());
#endif
  }
  return load_pgm(buf, path);
}

std::vector<unsigned char> quantize8(const Image& img) {
  std::vector<unsigned char> out(img.size());
  const double scale = 255.0 / img.peak();
  auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = std::clamp(px[i], 0.0, img.peak()) * scale;
    out[i] = static_cast<unsigned char>(std::min(255.0, std::round(v)));
  }
  return out;
}

void save_image(const Image& img, const std::filesystem::path& path) {
  const auto bytes = quantize8(img);
  if (has_png_extension(path)) {
#ifdef UNROLL_HAVE_PNG
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width());
    png.height = static_cast<png_uint_32>(img.height());
    png.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr))
      throw Error("cannot write image: " + path.string());
    return;
#else
    throw Error("built without PNG support: " + path.string());
#endif
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write image: " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write image: " + path.string());
}

}  // namespace unroll
