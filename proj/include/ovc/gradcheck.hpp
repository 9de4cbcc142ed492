#pragma once

#include <cstdint>
#include <string>

#include "ovc/losses.hpp"
#include "ovc/model.hpp"

namespace ovc {

struct GradCheckResult {
  Scalar max_relative_error = 0;
  std::string worst_parameter;  // "name[index]"
  std::size_t checked = 0;
};

/// Compares loss_and_gradient against central differences of evaluate_loss
/// for every parameter entry. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult finite_difference_check(const OvcModel& model, const ParallelExample& example,
                                        const MaskSample& sample, const LossOptions& options, Scalar step = 1e-5,
                                        Scalar floor = 1e-6);

/// Micro-config used by `check-grad`: d_word 4, d_hidden 8, 2 heads, vocabularies
/// of 11, source length 3, two objects (one relevant, one not), alpha = beta = 0.1.
struct MicroProblem {
  OvcModel model;
  ParallelExample example;
  MaskSample sample;
  LossOptions options;
};
MicroProblem micro_problem(std::uint64_t seed, Variant variant = Variant::object_level);

GradCheckResult run_gradient_check(std::uint64_t seed, Variant variant = Variant::object_level);

}  // namespace ovc
