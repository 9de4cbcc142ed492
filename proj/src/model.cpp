#include "ovc/model.hpp"

#include <cmath>
#include <random>

namespace ovc {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::text_only: return "text_only";
    case Variant::image_level: return "image_level";
    case Variant::object_level: return "object_level";
  }
  throw Error("invalid variant");
}

Variant parse_variant(std::string_view name) {
  if (name == "text_only") return Variant::text_only;
  if (name == "image_level") return Variant::image_level;
  if (name == "object_level") return Variant::object_level;
  throw Error("unknown variant: " + std::string(name));
}

void ModelConfig::validate() const {
  if (d_word <= 0 || d_hidden <= 0 || d_obj <= 0) throw Error("model dimensions must be positive");
  if (d_hidden % 2 != 0) throw Error("d_hidden must be even (split across encoder directions)");
  if (n_heads <= 0 || d_hidden % n_heads != 0) throw Error("d_hidden must be divisible by n_heads");
  if (source_vocab <= Vocabulary::kNumReserved || target_vocab <= Vocabulary::kNumReserved) {
    throw Error("vocabulary sizes must exceed the reserved ids");
  }
  if (max_objects == 0) throw Error("max_objects must be positive");
}

ModelParams ModelParams::zeros(const ModelConfig& c) {
  ModelParams p;
  p.src_embed = Matrix::Zero(c.source_vocab, c.d_word);
  p.tgt_embed = Matrix::Zero(c.target_vocab, c.d_word);
  p.enc_fwd = GruWeights::zeros(c.d_word, c.d_hidden / 2);
  p.enc_bwd = GruWeights::zeros(c.d_word, c.d_hidden / 2);
  p.obj_attn = AttentionWeights::zeros(c.d_hidden, c.d_obj, c.d_hidden);
  p.dec_word = GruWeights::zeros(c.d_word, c.d_hidden);
  p.src_attn = AttentionWeights::zeros(c.d_hidden, c.d_hidden, c.d_hidden);
  p.dec_ctx = GruWeights::zeros(c.d_hidden, c.d_hidden);
  p.out_w = Matrix::Zero(c.target_vocab, c.d_hidden);
  p.out_b = Vector::Zero(c.target_vocab);
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t total = 0;
  visit([&](const std::string&, const auto& t) { total += static_cast<std::size_t>(t.size()); });
  return total;
}

void ModelParams::set_zero() {
  visit([](const std::string&, auto& t) { t.setZero(); });
}

bool ModelParams::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

namespace {

ModelParams init_params(const ModelConfig& c) {
  ModelParams p = ModelParams::zeros(c);
  std::mt19937_64 rng(c.seed);
  const auto fill = [&](auto& t, Scalar bound) {
    std::uniform_real_distribution<Scalar> dist(-bound, bound);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
  };
  fill(p.src_embed, 0.1);
  fill(p.tgt_embed, 0.1);
  for (GruWeights* g : {&p.enc_fwd, &p.enc_bwd, &p.dec_word, &p.dec_ctx}) {
    const Scalar bound = 1.0 / std::sqrt(static_cast<Scalar>(g->hidden()));
    fill(g->w_x, bound);
    fill(g->w_h, bound);
    fill(g->b_x, bound);
    fill(g->b_h, bound);
  }
  for (AttentionWeights* a : {&p.obj_attn, &p.src_attn}) {
    fill(a->w_q, 1.0 / std::sqrt(static_cast<Scalar>(a->w_q.cols())));
    fill(a->w_k, 1.0 / std::sqrt(static_cast<Scalar>(a->w_k.cols())));
    fill(a->w_v, 1.0 / std::sqrt(static_cast<Scalar>(a->w_v.cols())));
    fill(a->w_o, 1.0 / std::sqrt(static_cast<Scalar>(a->w_o.cols())));
  }
  fill(p.out_w, 1.0 / std::sqrt(static_cast<Scalar>(c.d_hidden)));
  return p;
}

}  // namespace

Eigen::Index argmax_lowest(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

OvcModel::OvcModel(ModelConfig config) : config_(config) {
  config_.validate();
  params_ = init_params(config_);
}

OvcModel::OvcModel(ModelConfig config, ModelParams params) : config_(config), params_(std::move(params)) {
  config_.validate();
  const ModelParams shape = ModelParams::zeros(config_);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> expected;
  shape.visit([&](const std::string&, const auto& t) { expected.emplace_back(t.rows(), t.cols()); });
  std::size_t i = 0;
  params_.visit([&](const std::string& name, const auto& t) {
    if (t.rows() != expected[i].first || t.cols() != expected[i].second) {
      throw Error("parameter " + name + " has shape inconsistent with the model config");
    }
    ++i;
  });
}

void OvcModel::check_source(std::span<const TokenId> source) const {
  if (source.empty()) throw Error("encode: empty source sentence");
  for (TokenId id : source) {
    if (id < 0 || id >= config_.source_vocab) throw Error("source token id out of range: " + std::to_string(id));
  }
}

ObjectSet OvcModel::visual_input(const ObjectSet& objects) const {
  switch (config_.variant) {
    case Variant::text_only:
      return {};
    case Variant::object_level:
      return objects;
    case Variant::image_level: {
      if (objects.size() == 1) return objects;
      if (objects.empty()) throw Error("image-level variant needs an image feature");
      const Matrix pooled = objects.effective_features().colwise().mean();
      return ObjectSet(pooled, {"image"}, {1.0});
    }
  }
  throw Error("invalid variant");
}

EncoderOutput OvcModel::encode(std::span<const TokenId> source, const ObjectSet& objects, EncoderTrace* trace) const {
  check_source(source);
  const auto n = static_cast<Eigen::Index>(source.size());
  const int half = config_.d_hidden / 2;

  EncoderOutput out;
  out.annotations.resize(n, config_.d_hidden);
  if (trace) {
    trace->source.assign(source.begin(), source.end());
    trace->fwd.resize(source.size());
    trace->bwd.resize(source.size());
  }
  Vector h = Vector::Zero(half);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Vector x = params_.src_embed.row(source[static_cast<std::size_t>(t)]).transpose();
    h = gru_forward(params_.enc_fwd, x, h, trace ? &trace->fwd[static_cast<std::size_t>(t)] : nullptr);
    out.annotations.block(t, 0, 1, half) = h.transpose();
  }
  h = Vector::Zero(half);
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const Vector x = params_.src_embed.row(source[static_cast<std::size_t>(t)]).transpose();
    h = gru_forward(params_.enc_bwd, x, h, trace ? &trace->bwd[static_cast<std::size_t>(t)] : nullptr);
    out.annotations.block(t, half, 1, half) = h.transpose();
  }

  const Vector pooled_h = out.annotations.colwise().mean().transpose();
  if (config_.variant == Variant::text_only) {
    out.vasr = out.annotations;
    out.ssv = pooled_h;
    return out;
  }

  const ObjectSet visual = visual_input(objects);
  if (visual.empty()) throw Error("encode: this variant requires at least one object");
  if (visual.dim() != config_.d_obj) {
    throw Error("encode: object feature dimension " + std::to_string(visual.dim()) + " != d_obj " +
                std::to_string(config_.d_obj));
  }
  if (visual.size() > config_.max_objects) throw Error("encode: more objects than max_objects");
  const Matrix feats = visual.effective_features();
  out.vasr = attention_forward(params_.obj_attn, config_.n_heads, out.annotations, feats, feats,
                               trace ? &trace->attn : nullptr, &out.object_attention);
  if (config_.residual) out.vasr += out.annotations;
  out.ssv = out.vasr.colwise().mean().transpose() + pooled_h;
  if (trace) trace->object_attention = out.object_attention;
  return out;
}

DecoderState OvcModel::decoder_init(const Vector& ssv, GruCache* trace) const {
  if (ssv.size() != config_.d_hidden) throw Error("decoder_init: SSV has wrong length");
  const Vector x = params_.tgt_embed.row(Vocabulary::kBos).transpose();
  return {gru_forward(params_.dec_word, x, ssv, trace), ssv};
}

StepOutput OvcModel::decode_step(TokenId prev, const DecoderState& state, const Matrix& vasr, StepTrace* trace) const {
  if (prev < 0 || prev >= config_.target_vocab) throw Error("decode_step: token id out of range: " + std::to_string(prev));
  StepOutput out;
  const Vector x = params_.tgt_embed.row(prev).transpose();
  out.state.word = gru_forward(params_.dec_word, x, state.word, trace ? &trace->word : nullptr);
  const Matrix query = out.state.word.transpose();
  const Matrix context_in = attention_forward(params_.src_attn, config_.n_heads, query, vasr, vasr,
                                              trace ? &trace->attn : nullptr, &out.source_attention);
  out.state.context = gru_forward(params_.dec_ctx, context_in.row(0).transpose(), state.context,
                                  trace ? &trace->context : nullptr);
  out.logits = params_.out_w * out.state.context + params_.out_b;
  if (trace) {
    trace->prev = prev;
    trace->output = out.state.context;
  }
  return out;
}

std::vector<Scalar> OvcModel::forward_teacher_forced(std::span<const TokenId> source, const ObjectSet& objects,
                                                     std::span<const TokenId> target, ForwardTrace* trace) const {
  EncoderOutput enc = encode(source, objects, trace ? &trace->encoder : nullptr);
  DecoderState state = decoder_init(enc.ssv, trace ? &trace->init : nullptr);
  std::vector<Scalar> nll;
  nll.reserve(target.size());
  if (trace) {
    trace->steps.assign(target.size(), {});
    trace->target.assign(target.begin(), target.end());
  }
  TokenId prev = Vocabulary::kBos;
  for (std::size_t j = 0; j < target.size(); ++j) {
    const TokenId gold = target[j];
    if (gold < 0 || gold >= config_.target_vocab) throw Error("target token id out of range: " + std::to_string(gold));
    StepOutput step = decode_step(prev, state, enc.vasr, trace ? &trace->steps[j] : nullptr);
    const Scalar mx = step.logits.maxCoeff();
    const Scalar log_z = mx + std::log((step.logits.array() - mx).exp().sum());
    nll.push_back(log_z - step.logits(gold));
    if (trace) trace->steps[j].probs = (step.logits.array() - log_z).exp().matrix();
    state = std::move(step.state);
    prev = gold;
  }
  if (trace) trace->encoded = std::move(enc);
  return nll;
}

Vector OvcModel::decoder_init_backward(const GruCache& trace, const Vector& d_word, const Vector& d_context,
                                       ModelParams& grad) const {
  Vector dx, dh;
  gru_backward(params_.dec_word, trace, d_word, grad.dec_word, dx, dh);
  grad.tgt_embed.row(Vocabulary::kBos) += dx.transpose();
  return dh + d_context;
}

void OvcModel::backward(const ForwardTrace& trace, std::span<const Scalar> token_weights, ModelParams& grad) const {
  if (token_weights.size() != trace.steps.size()) throw Error("backward: weight count does not match target length");
  const auto n = trace.encoded.annotations.rows();
  const int dm = config_.d_hidden;
  const int half = dm / 2;

  Matrix d_vasr = Matrix::Zero(n, dm);
  Vector d_word = Vector::Zero(dm);
  Vector d_ctx = Vector::Zero(dm);
  Vector dx, dh_prev, d_in;
  Matrix dq, dk, dv;
  for (std::size_t jj = trace.steps.size(); jj-- > 0;) {
    const StepTrace& step = trace.steps[jj];
    Vector d_logits = step.probs;
    d_logits(trace.target[jj]) -= 1.0;
    d_logits *= token_weights[jj];

    grad.out_w.noalias() += d_logits * step.output.transpose();
    grad.out_b += d_logits;
    d_ctx.noalias() += params_.out_w.transpose() * d_logits;

    gru_backward(params_.dec_ctx, step.context, d_ctx, grad.dec_ctx, d_in, dh_prev);
    d_ctx = dh_prev;

    attention_backward(params_.src_attn, config_.n_heads, step.attn, d_in.transpose(), grad.src_attn, &dq, &dk, &dv);
    d_vasr += dk + dv;
    d_word += dq.row(0).transpose();

    gru_backward(params_.dec_word, step.word, d_word, grad.dec_word, dx, dh_prev);
    grad.tgt_embed.row(step.prev) += dx.transpose();
    d_word = dh_prev;
  }

  const Vector d_ssv = decoder_init_backward(trace.init, d_word, d_ctx, grad);
  const Eigen::RowVectorXd d_mean = d_ssv.transpose() / static_cast<Scalar>(n);

  Matrix d_h(n, dm);
  if (config_.variant == Variant::text_only) {
    d_h = d_vasr;
    d_h.rowwise() += d_mean;
  } else {
    d_vasr.rowwise() += d_mean;
    d_h.setZero();
    d_h.rowwise() += d_mean;
    if (config_.residual) d_h += d_vasr;
    attention_backward(params_.obj_attn, config_.n_heads, trace.encoder.attn, d_vasr, grad.obj_attn, &dq, nullptr,
                       nullptr);
    d_h += dq;
  }

  const auto& src = trace.encoder.source;
  Vector dh = Vector::Zero(half);
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    dh += d_h.block(t, 0, 1, half).transpose();
    gru_backward(params_.enc_fwd, trace.encoder.fwd[static_cast<std::size_t>(t)], dh, grad.enc_fwd, dx, dh_prev);
    grad.src_embed.row(src[static_cast<std::size_t>(t)]) += dx.transpose();
    dh = dh_prev;
  }
  dh = Vector::Zero(half);
  for (Eigen::Index t = 0; t < n; ++t) {
    dh += d_h.block(t, half, 1, half).transpose();
    gru_backward(params_.enc_bwd, trace.encoder.bwd[static_cast<std::size_t>(t)], dh, grad.enc_bwd, dx, dh_prev);
    grad.src_embed.row(src[static_cast<std::size_t>(t)]) += dx.transpose();
    dh = dh_prev;
  }
}

std::vector<TokenId> OvcModel::greedy_decode(std::span<const TokenId> source, const ObjectSet& objects,
                                             std::size_t max_len) const {
  std::vector<TokenId> out;
  if (max_len == 0) return out;
  const EncoderOutput enc = encode(source, objects);
  DecoderState state = decoder_init(enc.ssv);
  TokenId prev = Vocabulary::kBos;
  while (out.size() < max_len) {
    StepOutput step = decode_step(prev, state, enc.vasr);
    prev = static_cast<TokenId>(argmax_lowest(step.logits));
    out.push_back(prev);
    if (prev == Vocabulary::kEos) break;
    state = std::move(step.state);
  }
  return out;
}

}  // namespace ovc
