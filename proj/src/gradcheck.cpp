#include "ovc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ovc {

GradCheckResult finite_difference_check(const OvcModel& model, const ParallelExample& example,
                                        const MaskSample& sample, const LossOptions& options, Scalar step,
                                        Scalar floor) {
  ModelParams grad = ModelParams::zeros(model.config());
  loss_and_gradient(model, example, sample, options, grad);

  OvcModel probe = model;
  GradCheckResult result;
  std::vector<std::pair<std::string, const Scalar*>> analytic;
  grad.visit([&](const std::string& name, const auto& t) { analytic.emplace_back(name, t.data()); });
  std::size_t tensor = 0;
  probe.params().visit([&](const std::string& name, auto& t) {
    const Scalar* a = analytic[tensor++].second;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      Scalar& w = t.data()[i];
      const Scalar saved = w;
      w = saved + step;
      const Scalar plus = evaluate_loss(probe, example, sample, options).l_ovc;
      w = saved - step;
      const Scalar minus = evaluate_loss(probe, example, sample, options).l_ovc;
      w = saved;
      const Scalar numeric = (plus - minus) / (2.0 * step);
      const Scalar denom = std::max({std::abs(a[i]), std::abs(numeric), floor});
      const Scalar rel = std::abs(a[i] - numeric) / denom;
      ++result.checked;
      if (rel > result.max_relative_error || result.worst_parameter.empty()) {
        result.max_relative_error = std::max(rel, result.max_relative_error);
        result.worst_parameter = name + "[" + std::to_string(i) + "]";
      }
    }
  });
  return result;
}

MicroProblem micro_problem(std::uint64_t seed, Variant variant) {
  ModelConfig c;
  c.d_word = 4;
  c.d_hidden = 8;
  c.n_heads = 2;
  c.d_obj = 5;
  c.source_vocab = 11;
  c.target_vocab = 11;
  c.variant = variant;
  c.seed = seed;
  OvcModel model(c);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<TokenId> word(Vocabulary::kNumReserved, 10);
  std::normal_distribution<Scalar> normal(0.0, 1.0);

  ParallelExample ex;
  ex.id = "micro";
  ex.source = SourceSentence::make({word(rng), word(rng), word(rng)}, {});
  ex.target = {word(rng), word(rng), Vocabulary::kEos};
  Matrix features(2, c.d_obj);
  for (Eigen::Index i = 0; i < features.size(); ++i) features.data()[i] = normal(rng);
  ex.objects = ObjectSet(features, {"dog", "car"}, {0.9, 0.8});
  ex.annotations.relevance = {1, 0};
  std::vector<Scalar> q(ex.target.size());
  Scalar total = 0.0;
  for (auto& x : q) total += (x = std::abs(normal(rng)) + 0.1);
  for (auto& x : q) x /= total;
  ex.annotations.target_weights = q;

  LossOptions options;
  options.alpha = 0.1;
  options.beta = 0.1;
  MaskSample sample = draw_mask_sample(ex, options, rng);
  return {std::move(model), std::move(ex), std::move(sample), options};
}

GradCheckResult run_gradient_check(std::uint64_t seed, Variant variant) {
  const MicroProblem p = micro_problem(seed, variant);
  return finite_difference_check(p.model, p.example, p.sample, p.options);
}

}  // namespace ovc
