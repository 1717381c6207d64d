#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "egr/egrnet.hpp"

namespace egr {

struct GradcheckOptions {
  double step = 1e-5;                   // central-difference step h
  std::size_t samples_per_tensor = 64;  // coordinates checked per tensor (all if fewer)
  double tolerance = 1e-4;
  double linear_tolerance = 1e-6;       // for ops that are linear in every checked tensor
  std::uint64_t seed = 0;
};

struct GradcheckEntry {
  std::string suite;
  std::string tensor;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error <= tolerance; }
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;

  bool passed() const;
  double max_rel_error() const;
};

// Compares analytic gradients against central differences at sampled
// coordinates of each tensor. `loss` evaluates the scalar at the current
// tensor values; `gradients` must overwrite every tensor's grad buffer with
// the analytic gradient.
//
// Error per coordinate: |a - n| / max(|a|, |n|, floor), floor = 1e-3 times
// the larger of the tensor's and the whole suite's analytic-gradient RMS.
// Coordinates whose true gradient is (near) zero, such as a conv bias that
// batch norm cancels, are then judged against the suite's gradient scale
// rather than against finite-difference round-off. A coordinate that fails is re-measured with h/10 and
// h/100 and keeps its smallest error; this absorbs finite differences that
// straddle a ReLU kink without hiding a wrong gradient.
std::vector<GradcheckEntry> gradient_check(const std::string& suite, const std::vector<NamedTensor<double>>& tensors,
                                           const std::function<double()>& loss,
                                           const std::function<void()>& gradients, const GradcheckOptions& options,
                                           double tolerance);

enum class GradcheckScope { layer, block, net, all };

GradcheckScope parse_gradcheck_scope(const std::string& name);

// Built-in suites: every layer (layer), Gramian convolutional blocks of each
// variant (block), and a two-block 8x8 toy network of each variant with
// cross-entropy loss (net). `corrupt` adds a suite whose Gram backward drops
// the transposed term, as a negative control that must fail.
GradcheckReport run_gradcheck_suites(GradcheckScope scope, const GradcheckOptions& options, bool corrupt = false);

}  // namespace egr
