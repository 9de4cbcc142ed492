#include "ovc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ovc {

namespace {

std::vector<std::size_t> sample_subset(const std::vector<std::size_t>& pool, std::mt19937_64& rng, std::size_t cap) {
  if (pool.empty()) return {};
  const std::size_t limit = cap == 0 ? pool.size() : std::min(cap, pool.size());
  std::uniform_int_distribution<std::size_t> size_dist(1, limit);
  const std::size_t k = size_dist(rng);
  std::vector<std::size_t> items = pool;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
  items.resize(k);
  std::sort(items.begin(), items.end());
  return items;
}

Scalar mean(std::span<const Scalar> xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<Scalar>(xs.size());
}

std::vector<Scalar> weights_or_uniform(const ParallelExample& example) {
  if (!example.annotations.target_weights.empty()) return example.annotations.target_weights;
  return std::vector<Scalar>(example.target.size(), 1.0 / static_cast<Scalar>(example.target.size()));
}

}  // namespace

MaskSample sample_mask_sets(std::span<const int> relevance, std::mt19937_64& rng, std::size_t max_mask_size) {
  std::vector<std::size_t> relevant, irrelevant;
  for (std::size_t i = 0; i < relevance.size(); ++i) (relevance[i] ? relevant : irrelevant).push_back(i);
  MaskSample sample;
  sample.relevant_set = sample_subset(relevant, rng, max_mask_size);
  sample.irrelevant_set = sample_subset(irrelevant, rng, max_mask_size);
  return sample;
}

Scalar object_masking_loss(Scalar l_o, Scalar l_r, Scalar l_ir) {
  const Scalar delta_ir = l_ir - l_o;
  return -(l_r - l_o) + delta_ir * delta_ir;
}

Scalar vision_weighted_loss(std::span<const Scalar> token_nll, std::span<const Scalar> q) {
  if (token_nll.size() != q.size()) throw Error("vision_weighted_loss: weight count does not match target length");
  Scalar total = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) total += q[j] * token_nll[j];
  return total;
}

Scalar total_loss(Scalar l_o, Scalar l_r, Scalar l_ir, Scalar l_m, Scalar l_v, Scalar alpha, Scalar beta) {
  return (l_o + l_r + l_ir) / 3.0 + alpha * l_m + beta * l_v;
}

ObjectSet hard_mask(const ObjectSet& objects, std::span<const int> relevance) {
  if (relevance.size() != objects.size()) throw Error("hard_mask: relevance length does not match object count");
  ObjectSet out = objects;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    if (relevance[i] == 0) out.masked[i] = true;
  }
  return out;
}

std::pair<Scalar, Scalar> masked_pass_losses(const OvcModel& model, const ParallelExample& example,
                                             const MaskSample& sample) {
  Scalar l_o = -1.0;
  const auto pass = [&](const std::vector<std::size_t>& set) {
    if (set.empty()) {
      if (l_o < 0.0) l_o = mean(model.forward_teacher_forced(example));
      return l_o;
    }
    const ObjectSet masked = example.objects.with_masked(set);
    return mean(model.forward_teacher_forced(example.source.tokens, masked, example.target));
  };
  const Scalar l_r = pass(sample.relevant_set);
  const Scalar l_ir = pass(sample.irrelevant_set);
  return {l_r, l_ir};
}

MaskSample draw_mask_sample(const ParallelExample& example, const LossOptions& options, std::mt19937_64& rng) {
  if (!options.masking_loss || options.hard_mask || example.annotations.relevance.empty()) return {};
  return sample_mask_sets(example.annotations.relevance, rng, options.max_mask_size);
}

ParallelExample prepare_example(const ParallelExample& example, const LossOptions& options) {
  if (!options.hard_mask || example.annotations.relevance.empty()) return example;
  ParallelExample out = example;
  out.objects = hard_mask(example.objects, example.annotations.relevance);
  return out;
}

namespace {

LossBundle run_loss(const OvcModel& model, const ParallelExample& example, const MaskSample& sample,
                    const LossOptions& options, ModelParams* grad) {
  const Scalar alpha = options.effective_alpha();
  const Scalar beta = options.effective_beta();

  LossBundle out;
  out.mask_sample = sample;
  out.q = weights_or_uniform(example);
  if (out.q.size() != example.target.size()) throw Error("example " + example.id + ": q length does not match target");

  ForwardTrace trace_o, trace_r, trace_ir;
  out.token_nll = model.forward_teacher_forced(example, grad ? &trace_o : nullptr);
  out.l_o = mean(out.token_nll);

  const auto masked_pass = [&](const std::vector<std::size_t>& set, ForwardTrace& trace) {
    if (set.empty()) return out.l_o;
    const ObjectSet masked = example.objects.with_masked(set);
    return mean(model.forward_teacher_forced(example.source.tokens, masked, example.target, grad ? &trace : nullptr));
  };
  out.l_r = masked_pass(sample.relevant_set, trace_r);
  out.l_ir = masked_pass(sample.irrelevant_set, trace_ir);
  out.l_m = object_masking_loss(out.l_o, out.l_r, out.l_ir);
  out.l_v = vision_weighted_loss(out.token_nll, out.q);
  out.l_ovc = total_loss(out.l_o, out.l_r, out.l_ir, out.l_m, out.l_v, alpha, beta);

  for (const auto& [name, value] : {std::pair{"L_o", out.l_o}, {"L_r", out.l_r}, {"L_ir", out.l_ir}, {"L_v", out.l_v}, {"L_ovc", out.l_ovc}}) {
    if (!std::isfinite(value)) throw Error("example " + example.id + ": non-finite loss term " + name);
  }
  if (!grad) return out;

  // Chain rule through the scalar combination onto each pass's mean NLL.
  const Scalar third = 1.0 / 3.0;
  const Scalar delta_ir = out.l_ir - out.l_o;
  Scalar c_o = third + alpha * (1.0 - 2.0 * delta_ir);
  const Scalar c_r = third - alpha;
  const Scalar c_ir = third + 2.0 * alpha * delta_ir;
  if (sample.relevant_set.empty()) c_o += c_r;
  if (sample.irrelevant_set.empty()) c_o += c_ir;

  const auto r = static_cast<Scalar>(example.target.size());
  std::vector<Scalar> w(example.target.size());
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = c_o / r + beta * out.q[j];
  model.backward(trace_o, w, *grad);
  if (!sample.relevant_set.empty()) {
    std::fill(w.begin(), w.end(), c_r / r);
    model.backward(trace_r, w, *grad);
  }
  if (!sample.irrelevant_set.empty()) {
    std::fill(w.begin(), w.end(), c_ir / r);
    model.backward(trace_ir, w, *grad);
  }
  return out;
}

}  // namespace

LossBundle evaluate_loss(const OvcModel& model, const ParallelExample& example, const MaskSample& sample,
                         const LossOptions& options) {
  return run_loss(model, example, sample, options, nullptr);
}

LossBundle loss_and_gradient(const OvcModel& model, const ParallelExample& example, const MaskSample& sample,
                             const LossOptions& options, ModelParams& grad) {
  return run_loss(model, example, sample, options, &grad);
}

}  // namespace ovc
