#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ovc/checkpoint.hpp"
#include "ovc/corpus.hpp"
#include "ovc/losses.hpp"
#include "ovc/model.hpp"
#include "ovc/preprocessing.hpp"

namespace ovc {

enum class Setting { standard, degraded, mixed };
enum class LrPolicy { halving, constant, inverse_sqrt };
enum class SelectionMetric { bleu, masked_accuracy, neg_loss };

std::string_view setting_name(Setting s);
Setting parse_setting(std::string_view name);
std::string_view lr_policy_name(LrPolicy p);
LrPolicy parse_lr_policy(std::string_view name);
std::string_view metric_name(SelectionMetric m);
SelectionMetric parse_metric(std::string_view name);

struct TrainConfig {
  Scalar alpha = kDefaultAlpha;
  Scalar beta = kDefaultBeta;
  Scalar gamma = kDefaultGamma;
  bool masking_loss = true;
  bool vision_loss = true;
  bool hard_mask = false;
  std::size_t max_mask_size = 0;

  Scalar base_lr = 1e-3;
  LrPolicy lr_policy = LrPolicy::halving;
  std::size_t warmup_steps = 4000;  // inverse_sqrt only
  Scalar adam_beta1 = 0.9;
  Scalar adam_beta2 = 0.999;
  Scalar adam_eps = 1e-8;
  Scalar clip_norm = 5.0;  // <= 0 disables clipping

  int patience = 10;
  std::size_t batch_size = 32;
  int max_epochs = 50;
  std::size_t max_steps = 0;   // 0: no step limit
  std::size_t eval_every = 0;  // 0: evaluate once per epoch, k: every k steps
  std::uint64_t seed = 1;
  Setting setting = Setting::standard;
  Scalar mix_ratio = 0.0;
  SelectionMetric metric = SelectionMetric::bleu;

  void validate() const;
  LossOptions loss_options() const;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Learning rate as a function of the step and of validation history.
class LrScheduler {
 public:
  LrScheduler(LrPolicy policy, Scalar base_lr, std::size_t warmup_steps = 4000);
  Scalar lr(std::size_t step) const;
  /// Records one validation outcome. Under halving every non-improving
  /// evaluation halves the rate.
  void report(bool improved);
  int non_improving() const { return non_improving_; }

 private:
  LrPolicy policy_;
  Scalar base_lr_;
  std::size_t warmup_;
  int non_improving_ = 0;
};

class Adam {
 public:
  Adam(const ModelConfig& config, Scalar beta1 = 0.9, Scalar beta2 = 0.999, Scalar eps = 1e-8);
  void step(ModelParams& params, const ModelParams& grad, Scalar lr);
  std::size_t steps() const { return t_; }

 private:
  ModelParams m_, v_;
  Scalar beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

/// Euclidean norm over every gradient tensor.
Scalar global_norm(const ModelParams& grad);
/// Rescales `grad` so its global norm is at most `max_norm`; returns the norm before clipping.
Scalar clip_global_norm(ModelParams& grad, Scalar max_norm);

/// All of `standard` plus floor(ratio * |standard|) examples drawn without
/// replacement from `degraded`, in an order shuffled by `rng`.
Dataset mix_datasets(const Dataset& standard, const Dataset& degraded, Scalar ratio, std::mt19937_64& rng);
std::size_t mixed_degraded_count(std::size_t standard_size, Scalar ratio);

/// Throws unless every visual span of every degraded example is a single
/// category tag and no color word survives outside the spans.
void check_degraded_sources(const Dataset& data, const Vocabulary& source_vocab,
                            const ColorLexicon& colors = ColorLexicon::standard());

struct TrainHooks {
  /// Replaces the built-in validation metric when set.
  std::function<Scalar(const OvcModel&, std::size_t eval_index)> validation_score;
  /// Sees every example right before it enters a loss computation.
  std::function<void(const ParallelExample&)> observe_example;
  /// Receives every log record (step and evaluation lines).
  std::function<void(const nlohmann::json&)> on_log;
  /// One JSON object per line, written as training proceeds.
  std::ostream* log_stream = nullptr;
};

struct TrainResult {
  Checkpoint best;
  Scalar best_score = -std::numeric_limits<Scalar>::infinity();
  std::size_t steps = 0;
  int epochs = 0;
  std::size_t evaluations = 0;
  bool early_stopped = false;
  Scalar final_train_loss = 0.0;  // mean L_ovc of the last step
};

/// Mini-batch training with per-example gradients summed in example order.
/// Validation selects the best parameters; ties on the primary score are
/// broken by lower validation token NLL (built-in metrics only).
TrainResult train(const TrainConfig& config, const ModelConfig& model_config, const Dataset& train_data,
                  const Dataset& valid_data, const TrainHooks& hooks = {});

/// Continues from given parameters instead of a fresh initialization.
TrainResult train(const TrainConfig& config, OvcModel model, const Dataset& train_data, const Dataset& valid_data,
                  const TrainHooks& hooks = {});

}  // namespace ovc
