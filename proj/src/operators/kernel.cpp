#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>

#include "unroll/error.hpp"
#include "unroll/operators.hpp"

namespace unroll {

Kernel::Kernel(int size, std::vector<double> taps) : size_(size), taps_(std::move(taps)) {
  if (size < 1 || size % 2 == 0) throw Error("kernel size must be odd and positive");
  if (taps_.size() != static_cast<std::size_t>(size) * size)
    throw Error("kernel tap count does not match size");
  for (double t : taps_)
    if (!std::isfinite(t)) throw Error("kernel taps must be finite");
}

double Kernel::sum() const { return std::accumulate(taps_.begin(), taps_.end(), 0.0); }

Kernel Kernel::delta() { return Kernel(1, {1.0}); }

Kernel gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw Error("gaussian kernel size must be odd");
  if (!(sigma > 0.0)) throw Error("gaussian kernel sigma must be positive");
  const int c = size / 2;
  std::vector<double> taps(static_cast<std::size_t>(size) * size);
  double total = 0.0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const double di = i - c;
      const double dj = j - c;
      const double v = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      taps[static_cast<std::size_t>(i) * size + j] = v;
      total += v;
    }
  for (double& t : taps) t /= total;
  return Kernel(size, std::move(taps));
}

Kernel load_kernel(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open kernel file: " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw FormatError("malformed kernel file (empty): " + path.string());
  std::istringstream hs(header);
  long rows = 0;
  long cols = 0;
  std::string extra;
  if (!(hs >> rows >> cols) || (hs >> extra) || rows != cols || rows < 1 || rows > 4095)
    throw FormatError("malformed kernel header in " + path.string());
  if (rows % 2 == 0) throw FormatError("kernel size must be odd in " + path.string());
  const int k = static_cast<int>(rows);
  std::vector<double> taps;
  taps.reserve(static_cast<std::size_t>(k) * k);
  std::string line;
  for (int r = 0; r < k; ++r) {
    if (!std::getline(in, line)) throw FormatError("malformed kernel file (too few rows): " + path.string());
    std::istringstream ls(line);
    for (int c = 0; c < k; ++c) {
      double v = 0.0;
      if (!(ls >> v) || !std::isfinite(v))
        throw FormatError("malformed kernel row " + std::to_string(r + 1) + " in " + path.string());
      taps.push_back(v);
    }
    if (ls >> extra) throw FormatError("malformed kernel row " + std::to_string(r + 1) + " in " + path.string());
  }
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos)
      throw FormatError("malformed kernel file (trailing data): " + path.string());
  const double total = std::accumulate(taps.begin(), taps.end(), 0.0);
  if (total == 0.0 || !std::isfinite(total))
    throw FormatError("kernel taps sum to zero in " + path.string());
  for (double& t : taps) t /= total;
  return Kernel(k, std::move(taps));
}

void save_kernel(const Kernel& k, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write kernel file: " + path.string());
  out << k.size() << ' ' << k.size() << '\n' << std::setprecision(17);
  for (int r = 0; r < k.size(); ++r) {
    for (int c = 0; c < k.size(); ++c) out << (c ? " " : "") << k(r, c);
    out << '\n';
  }
}

}  // namespace unroll
