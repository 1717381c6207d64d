#pragma once

#include <filesystem>
#include <span>

#include "egr/signal.hpp"

namespace egr {

// 8-bit binary PGM (P5), min-max scaled per image. A constant matrix maps to
// an all-zero image.
void write_pgm(const std::filesystem::path& path, const Matrix& m);

// Row-major CSV with 17 significant digits, one matrix row per line.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_csv(const std::filesystem::path& path);

// Two columns: lag,mean.
void write_stripe_csv(const std::filesystem::path& path, const StripeProfile& profile);

}  // namespace egr
