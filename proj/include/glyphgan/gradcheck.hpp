#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace glyphgan {

struct GradCheckOptions {
  std::uint64_t seed = 1234;
  int instances = 10;  // random instances per op
  double step = 1e-6;
  double tolerance = 1e-4;
  bool composite = true;  // include the full 16x16 generator/discriminator losses
  double composite_max_step = 1e-3;
  double composite_min_step = 1e-7;
};

struct GradCheckRow {
  std::string op;
  int instances = 0;
  double max_rel_error = 0;
  bool passed = false;
};

// Finite-difference verification of every differentiable operation at 64-bit
// precision, one row per operation.
std::vector<GradCheckRow> run_gradient_suite(const GradCheckOptions& options = {});

}  // namespace glyphgan
