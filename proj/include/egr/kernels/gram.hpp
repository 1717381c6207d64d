#pragma once

#include <cstddef>

namespace egr::kernels {

// For each of `count` row-major planes P (rows x cols) writes G = P^T P
// (cols x cols). The upper triangle is mirrored onto the lower one, so every G
// is exactly symmetric. Planes are processed in parallel.
template <typename T>
void plane_gram_forward(std::size_t count, std::size_t rows, std::size_t cols, const T* planes, T* grams);

// grad_planes = P (U + U^T) for upstream U, overwritten.
template <typename T>
void plane_gram_backward(std::size_t count, std::size_t rows, std::size_t cols, const T* planes,
                         const T* grad_grams, T* grad_planes);

namespace reference {

template <typename T>
void plane_gram_forward(std::size_t count, std::size_t rows, std::size_t cols, const T* planes, T* grams);

template <typename T>
void plane_gram_backward(std::size_t count, std::size_t rows, std::size_t cols, const T* planes,
                         const T* grad_grams, T* grad_planes);

}  // namespace reference
}  // namespace egr::kernels
