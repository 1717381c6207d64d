#include "egr/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "egr/error.hpp"

namespace egr {
namespace {

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) throw DimensionError("cannot write an empty image");
  const auto values = m.values();
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  std::vector<std::uint8_t> pixels(values.size(), 0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - *lo) / range));
    }
  }
  auto out = open_out(path, std::ios::binary);
  out << "P5\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  auto out = open_out(path);
  out.precision(17);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << m(r, c);
    }
    out << '\n';
  }
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t count = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(rows + 1) + ": bad number '" + cell + "'");
      }
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) {
      throw FormatError(path.string() + ":" + std::to_string(rows + 1) + ": expected " + std::to_string(cols) +
                        " columns, got " + std::to_string(count));
    }
    ++rows;
  }
  return Matrix(rows, cols, std::move(values));
}

void write_stripe_csv(const std::filesystem::path& path, const StripeProfile& profile) {
  auto out = open_out(path);
  out.precision(17);
  out << "lag,mean\n";
  for (std::size_t k = 0; k < profile.lag_means.size(); ++k) out << k << ',' << profile.lag_means[k] << '\n';
}

}  // namespace egr
