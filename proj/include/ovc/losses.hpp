#pragma once

#include <random>
#include <span>
#include <vector>

#include "ovc/core_types.hpp"
#include "ovc/model.hpp"

namespace ovc {

inline constexpr Scalar kDefaultAlpha = 0.1;
inline constexpr Scalar kDefaultBeta = 0.1;

/// Objects zeroed for the two extra forward passes. Each set is homogeneous:
/// only relevant objects in one, only irrelevant objects in the other.
struct MaskSample {
  std::vector<std::size_t> relevant_set;
  std::vector<std::size_t> irrelevant_set;
};

struct LossBundle {
  Scalar l_o = 0, l_r = 0, l_ir = 0, l_m = 0, l_v = 0, l_ovc = 0;
  std::vector<Scalar> token_nll;  // Lo_1..Lo_r of the unmasked pass
  std::vector<Scalar> q;
  MaskSample mask_sample;
};

struct LossOptions {
  Scalar alpha = kDefaultAlpha;
  Scalar beta = kDefaultBeta;
  bool masking_loss = true;   // run the L_r / L_ir passes and add alpha * L_m
  bool vision_loss = true;    // add beta * L_v
  bool hard_mask = false;     // zero every object with d_i = 0 before all passes
  std::size_t max_mask_size = 0;  // 0: set size ~ U{1..class size}; k: capped at k

  Scalar effective_alpha() const { return masking_loss ? alpha : 0.0; }
  Scalar effective_beta() const { return vision_loss ? beta : 0.0; }
};

/// For each non-empty class of `relevance`, draws k uniformly from
/// {1..min(class size, cap)} and then a uniform k-subset of that class.
MaskSample sample_mask_sets(std::span<const int> relevance, std::mt19937_64& rng, std::size_t max_mask_size = 0);

/// Mean token NLL with the relevant (resp. irrelevant) set zeroed. An empty set
/// yields L_o itself.
std::pair<Scalar, Scalar> masked_pass_losses(const OvcModel& model, const ParallelExample& example,
                                             const MaskSample& sample);

/// L_m = -(L_r - L_o) + (L_ir - L_o)^2
Scalar object_masking_loss(Scalar l_o, Scalar l_r, Scalar l_ir);

/// L_v = sum_j q_j * Lo_j
Scalar vision_weighted_loss(std::span<const Scalar> token_nll, std::span<const Scalar> q);

/// (L_o + L_r + L_ir) / 3 + alpha * L_m + beta * L_v
Scalar total_loss(Scalar l_o, Scalar l_r, Scalar l_ir, Scalar l_m, Scalar l_v, Scalar alpha = kDefaultAlpha,
                  Scalar beta = kDefaultBeta);

/// Copy of `objects` with masked = true exactly where d_i = 0 (already masked
/// objects stay masked).
ObjectSet hard_mask(const ObjectSet& objects, std::span<const int> relevance);

/// Evaluates L_ovc for one example with a given mask sample (no gradients).
LossBundle evaluate_loss(const OvcModel& model, const ParallelExample& example, const MaskSample& sample,
                         const LossOptions& options);

/// Evaluates L_ovc and accumulates d L_ovc / d params into `grad`.
LossBundle loss_and_gradient(const OvcModel& model, const ParallelExample& example, const MaskSample& sample,
                             const LossOptions& options, ModelParams& grad);

/// Mask sample drawn according to `options` (empty when the masking loss is off
/// or the example has no relevance annotations).
MaskSample draw_mask_sample(const ParallelExample& example, const LossOptions& options, std::mt19937_64& rng);

/// The example as the model sees it under `options` (hard masking applied).
ParallelExample prepare_example(const ParallelExample& example, const LossOptions& options);

}  // namespace ovc
