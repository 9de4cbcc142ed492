#include "ovc/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "ovc/evaluation.hpp"

namespace ovc {

using nlohmann::json;

namespace {

template <class E>
struct NamedEnum {
  E value;
  std::string_view name;
};

constexpr NamedEnum<Setting> kSettings[] = {
    {Setting::standard, "standard"}, {Setting::degraded, "degraded"}, {Setting::mixed, "mixed"}};
constexpr NamedEnum<LrPolicy> kPolicies[] = {
    {LrPolicy::halving, "halving"}, {LrPolicy::constant, "constant"}, {LrPolicy::inverse_sqrt, "inverse_sqrt"}};
constexpr NamedEnum<SelectionMetric> kMetrics[] = {{SelectionMetric::bleu, "bleu"},
                                                   {SelectionMetric::masked_accuracy, "masked_accuracy"},
                                                   {SelectionMetric::neg_loss, "neg_loss"}};

template <class E, std::size_t N>
std::string_view name_of(const NamedEnum<E> (&table)[N], E value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  return "?";
}

template <class E, std::size_t N>
E parse_of(const NamedEnum<E> (&table)[N], std::string_view name, const char* what) {
  for (const auto& e : table) {
    if (e.name == name) return e.value;
  }
  throw Error(std::string("unknown ") + what + ": " + std::string(name));
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32), static_cast<std::uint32_t>(c),
                    static_cast<std::uint32_t>(c >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

std::string_view setting_name(Setting s) { return name_of(kSettings, s); }
Setting parse_setting(std::string_view name) { return parse_of(kSettings, name, "setting"); }
std::string_view lr_policy_name(LrPolicy p) { return name_of(kPolicies, p); }
LrPolicy parse_lr_policy(std::string_view name) { return parse_of(kPolicies, name, "lr policy"); }
std::string_view metric_name(SelectionMetric m) { return name_of(kMetrics, m); }
SelectionMetric parse_metric(std::string_view name) { return parse_of(kMetrics, name, "selection metric"); }

void TrainConfig::validate() const {
  if (patience < 1) throw Error("patience must be >= 1");
  if (mix_ratio < 0) throw Error("mix_ratio must be >= 0");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (max_epochs < 1) throw Error("max_epochs must be >= 1");
  if (!(base_lr > 0)) throw Error("base_lr must be > 0");
  if (alpha < 0 || beta < 0) throw Error("alpha and beta must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1)) throw Error("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw Error("adam_eps must be > 0");
  if (lr_policy == LrPolicy::inverse_sqrt && warmup_steps == 0) throw Error("inverse_sqrt needs warmup_steps >= 1");
}

LossOptions TrainConfig::loss_options() const {
  LossOptions o;
  o.alpha = alpha;
  o.beta = beta;
  o.masking_loss = masking_loss;
  o.vision_loss = vision_loss;
  o.hard_mask = hard_mask;
  o.max_mask_size = max_mask_size;
  return o;
}

json train_config_to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"gamma", c.gamma},
          {"masking_loss", c.masking_loss},
          {"vision_loss", c.vision_loss},
          {"hard_mask", c.hard_mask},
          {"max_mask_size", c.max_mask_size},
          {"base_lr", c.base_lr},
          {"lr_policy", std::string(lr_policy_name(c.lr_policy))},
          {"warmup_steps", c.warmup_steps},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"clip_norm", c.clip_norm},
          {"patience", c.patience},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"max_steps", c.max_steps},
          {"eval_every", c.eval_every},
          {"seed", c.seed},
          {"setting", std::string(setting_name(c.setting))},
          {"mix_ratio", c.mix_ratio},
          {"metric", std::string(metric_name(c.metric))}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw Error("training config must be an object");
  TrainConfig c;
  const json defaults = train_config_to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw Error("unknown training key: " + key);
  }
  try {
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.gamma = j.value("gamma", c.gamma);
    c.masking_loss = j.value("masking_loss", c.masking_loss);
    c.vision_loss = j.value("vision_loss", c.vision_loss);
    c.hard_mask = j.value("hard_mask", c.hard_mask);
    c.max_mask_size = j.value("max_mask_size", c.max_mask_size);
    c.base_lr = j.value("base_lr", c.base_lr);
    if (j.contains("lr_policy")) c.lr_policy = parse_lr_policy(j["lr_policy"].get<std::string>());
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.patience = j.value("patience", c.patience);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.seed = j.value("seed", c.seed);
    if (j.contains("setting")) c.setting = parse_setting(j["setting"].get<std::string>());
    c.mix_ratio = j.value("mix_ratio", c.mix_ratio);
    if (j.contains("metric")) c.metric = parse_metric(j["metric"].get<std::string>());
  } catch (const json::exception& e) {
    throw Error(std::string("bad training config value: ") + e.what());
  }
  c.validate();
  return c;
}

LrScheduler::LrScheduler(LrPolicy policy, Scalar base_lr, std::size_t warmup_steps)
    : policy_(policy), base_lr_(base_lr), warmup_(std::max<std::size_t>(warmup_steps, 1)) {}

Scalar LrScheduler::lr(std::size_t step) const {
  switch (policy_) {
    case LrPolicy::constant:
      return base_lr_;
    case LrPolicy::halving:
      return base_lr_ * std::pow(0.5, non_improving_);
    case LrPolicy::inverse_sqrt: {
      const auto s = static_cast<Scalar>(step + 1);
      const auto w = static_cast<Scalar>(warmup_);
      return base_lr_ * std::min(s / w, std::sqrt(w / s));
    }
  }
  return base_lr_;
}

void LrScheduler::report(bool improved) {
  if (!improved) ++non_improving_;
}

Adam::Adam(const ModelConfig& config, Scalar beta1, Scalar beta2, Scalar eps)
    : m_(ModelParams::zeros(config)), v_(ModelParams::zeros(config)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

namespace {

struct TensorList {
  std::vector<Matrix*> matrices;
  std::vector<Vector*> vectors;
};

TensorList tensors_of(ModelParams& p) {
  TensorList out;
  p.visit([&](const std::string&, auto& t) {
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Matrix>) out.matrices.push_back(&t);
    else out.vectors.push_back(&t);
  });
  return out;
}

}  // namespace

void Adam::step(ModelParams& params, const ModelParams& grad, Scalar lr) {
  ++t_;
  const Scalar bc1 = 1.0 - std::pow(beta1_, static_cast<Scalar>(t_));
  const Scalar bc2 = 1.0 - std::pow(beta2_, static_cast<Scalar>(t_));
  const auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
  };
  const TensorList p = tensors_of(params), m = tensors_of(m_), v = tensors_of(v_);
  const TensorList g = tensors_of(const_cast<ModelParams&>(grad));
  for (std::size_t i = 0; i < p.matrices.size(); ++i) update(*p.matrices[i], *m.matrices[i], *v.matrices[i], *g.matrices[i]);
  for (std::size_t i = 0; i < p.vectors.size(); ++i) update(*p.vectors[i], *m.vectors[i], *v.vectors[i], *g.vectors[i]);
}

Scalar global_norm(const ModelParams& grad) {
  Scalar sq = 0.0;
  grad.visit([&](const std::string&, const auto& t) { sq += t.squaredNorm(); });
  return std::sqrt(sq);
}

Scalar clip_global_norm(ModelParams& grad, Scalar max_norm) {
  const Scalar norm = global_norm(grad);
  if (max_norm > 0 && norm > max_norm) {
    const Scalar scale = max_norm / norm;
    grad.visit([&](const std::string&, auto& t) { t *= scale; });
  }
  return norm;
}

std::size_t mixed_degraded_count(std::size_t standard_size, Scalar ratio) {
  if (ratio < 0) throw Error("mix ratio must be >= 0");
  return static_cast<std::size_t>(std::floor(ratio * static_cast<Scalar>(standard_size) + 1e-9));
}

Dataset mix_datasets(const Dataset& standard, const Dataset& degraded, Scalar ratio, std::mt19937_64& rng) {
  const std::size_t k = mixed_degraded_count(standard.size(), ratio);
  if (k > degraded.size()) {
    throw Error("mix ratio " + std::to_string(ratio) + " needs " + std::to_string(k) + " degraded examples, only " +
                std::to_string(degraded.size()) + " available");
  }
  if (k > 0 && (degraded.source_vocab_fingerprint != standard.source_vocab_fingerprint ||
                degraded.target_vocab_fingerprint != standard.target_vocab_fingerprint)) {
    throw Error("standard and degraded datasets use different vocabularies");
  }
  std::vector<std::size_t> pool(degraded.size());
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  Dataset out;
  out.source_vocab_fingerprint = standard.source_vocab_fingerprint;
  out.target_vocab_fingerprint = standard.target_vocab_fingerprint;
  out.examples = standard.examples;
  for (std::size_t i = 0; i < k; ++i) out.examples.push_back(degraded.examples[pool[i]]);
  std::shuffle(out.examples.begin(), out.examples.end(), rng);
  return out;
}

void check_degraded_sources(const Dataset& data, const Vocabulary& source_vocab, const ColorLexicon& colors) {
  for (const auto& ex : data.examples) {
    if (!ex.degraded) throw Error("example " + ex.id + " is not degraded");
    const auto& src = ex.source;
    std::vector<bool> inside(src.size(), false);
    for (const auto& span : src.entity_spans) {
      if (!is_visual(span.category)) continue;
      if (span.end != span.start + 1 || src.tokens[span.start] != source_vocab.id(category_tag(span.category))) {
        throw Error("example " + ex.id + ": visual span at " + std::to_string(span.start) + " is not a category tag");
      }
      inside[span.start] = true;
    }
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (!inside[i] && colors.contains(source_vocab.token(src.tokens[i]))) {
        throw Error("example " + ex.id + ": color word survives at position " + std::to_string(i));
      }
    }
  }
}

namespace {

struct Score {
  Scalar primary;
  Scalar tiebreak;
  bool better_than(const Score& o) const {
    return primary > o.primary || (primary == o.primary && tiebreak > o.tiebreak);
  }
};

Score builtin_score(const TrainConfig& config, const OvcModel& model, const Dataset& valid) {
  const LossOptions options = config.loss_options();
  const Scalar nll = mean_token_nll(model, valid, options);
  switch (config.metric) {
    case SelectionMetric::bleu:
      return {decode_dataset(model, valid, options).bleu, -nll};
    case SelectionMetric::masked_accuracy:
      return {100.0 * masked_token_accuracy(model, valid, options).accuracy(), -nll};
    case SelectionMetric::neg_loss:
      return {-nll, 0.0};
  }
  return {0.0, 0.0};
}

}  // namespace

TrainResult train(const TrainConfig& config, const ModelConfig& model_config, const Dataset& train_data,
                  const Dataset& valid_data, const TrainHooks& hooks) {
  return train(config, OvcModel(model_config), train_data, valid_data, hooks);
}

TrainResult train(const TrainConfig& config, OvcModel model, const Dataset& train_data, const Dataset& valid_data,
                  const TrainHooks& hooks) {
  config.validate();
  if (train_data.empty()) throw Error("training data is empty");
  if (valid_data.empty() && !hooks.validation_score) throw Error("validation data is empty");
  if (config.setting == Setting::degraded) {
    for (const auto& ex : train_data.examples) {
      if (!ex.degraded) throw Error("degraded setting received undegraded example " + ex.id);
    }
  }
  for (const auto& ex : train_data.examples) ex.validate();

  const LossOptions options = config.loss_options();
  const ModelConfig& mc = model.config();
  LrScheduler scheduler(config.lr_policy, config.base_lr, config.warmup_steps);
  Adam adam(mc, config.adam_beta1, config.adam_beta2, config.adam_eps);
  ModelParams grad = ModelParams::zeros(mc);

  TrainResult result;
  result.best.config = mc;
  result.best.params = model.params();
  Score best{-std::numeric_limits<Scalar>::infinity(), -std::numeric_limits<Scalar>::infinity()};
  int bad_evals = 0;

  const auto emit = [&](const json& line) {
    if (hooks.log_stream) *hooks.log_stream << line.dump() << '\n';
    if (hooks.on_log) hooks.on_log(line);
  };

  // Returns true when training should stop.
  const auto run_evaluation = [&](int epoch) {
    Score score = hooks.validation_score ? Score{hooks.validation_score(model, result.evaluations), 0.0}
                                         : builtin_score(config, model, valid_data);
    ++result.evaluations;
    const bool improved = score.better_than(best);
    if (improved) {
      best = score;
      bad_evals = 0;
      result.best_score = score.primary;
      result.best.params = model.params();
      result.best.metadata["best_step"] = result.steps;
      result.best.metadata["best_epoch"] = epoch;
    } else {
      ++bad_evals;
    }
    scheduler.report(improved);
    emit({{"event", "eval"},
          {"epoch", epoch},
          {"step", result.steps},
          {"score", score.primary},
          {"tiebreak", score.tiebreak},
          {"best", best.primary},
          {"improved", improved},
          {"non_improving", bad_evals},
          {"lr", scheduler.lr(result.steps)}});
    if (bad_evals >= config.patience) {
      result.early_stopped = true;
      return true;
    }
    return false;
  };

  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);
  bool stop = false;
  for (int epoch = 1; epoch <= config.max_epochs && !stop; ++epoch) {
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x5348554646ULL, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    result.epochs = epoch;

    for (std::size_t begin = 0; begin < order.size() && !stop; begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const auto batch = static_cast<Scalar>(end - begin);
      grad.set_zero();
      Scalar sums[6] = {0, 0, 0, 0, 0, 0};
      std::size_t r_size = 0, ir_size = 0;
      for (std::size_t b = begin; b < end; ++b) {
        const ParallelExample example = prepare_example(train_data.examples[order[b]], options);
        if (hooks.observe_example) hooks.observe_example(example);
        std::mt19937_64 mask_rng(mix_seed(config.seed, result.steps, b - begin));
        const MaskSample sample = draw_mask_sample(example, options, mask_rng);
        const LossBundle loss = loss_and_gradient(model, example, sample, options, grad);
        sums[0] += loss.l_o;
        sums[1] += loss.l_r;
        sums[2] += loss.l_ir;
        sums[3] += loss.l_m;
        sums[4] += loss.l_v;
        sums[5] += loss.l_ovc;
        r_size += sample.relevant_set.size();
        ir_size += sample.irrelevant_set.size();
      }
      grad.visit([&](const std::string&, auto& t) { t /= batch; });
      const Scalar norm = clip_global_norm(grad, config.clip_norm);
      if (!std::isfinite(norm)) throw Error("non-finite gradient norm at step " + std::to_string(result.steps));
      const Scalar lr = scheduler.lr(result.steps);
      adam.step(model.params(), grad, lr);
      result.final_train_loss = sums[5] / batch;
      emit({{"event", "step"},
            {"step", result.steps},
            {"epoch", epoch},
            {"L_o", sums[0] / batch},
            {"L_r", sums[1] / batch},
            {"L_ir", sums[2] / batch},
            {"L_m", sums[3] / batch},
            {"L_v", sums[4] / batch},
            {"L_ovc", sums[5] / batch},
            {"grad_norm", norm},
            {"lr", lr},
            {"mask_r", r_size},
            {"mask_ir", ir_size}});
      ++result.steps;
      if (config.eval_every > 0 && result.steps % config.eval_every == 0) stop = run_evaluation(epoch);
      if (config.max_steps > 0 && result.steps >= config.max_steps) {
        if (config.eval_every == 0 || result.steps % config.eval_every != 0) {
          if (!stop) run_evaluation(epoch);
        }
        stop = true;
      }
    }
    if (!stop && config.eval_every == 0) stop = run_evaluation(epoch);
  }

  result.best.metadata["train_config"] = train_config_to_json(config);
  result.best.metadata["best_score"] = result.best_score;
  result.best.metadata["steps"] = result.steps;
  result.best.metadata["epochs"] = result.epochs;
  result.best.metadata["early_stopped"] = result.early_stopped;
  return result;
}

}  // namespace ovc
