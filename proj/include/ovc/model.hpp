#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ovc/core_types.hpp"
#include "ovc/layers.hpp"

namespace ovc {

enum class Variant { text_only, image_level, object_level };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  int d_word = 256;
  int d_hidden = 512;
  int n_heads = 4;
  int d_obj = 2048;
  Variant variant = Variant::object_level;
  int source_vocab = 0;
  int target_vocab = 0;
  std::uint64_t seed = 1;
  bool residual = false;  // VASR = MultiHead_1(H_s, O, O) + H_s when set
  std::size_t max_objects = 20;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// All learned tensors. The same type doubles as a gradient accumulator.
struct ModelParams {
  Matrix src_embed;         // V_s x d_word
  Matrix tgt_embed;         // V_t x d_word
  GruWeights enc_fwd;       // d_word -> d_hidden/2
  GruWeights enc_bwd;       // d_word -> d_hidden/2
  AttentionWeights obj_attn;  // query d_hidden, key/value d_obj
  GruWeights dec_word;      // layer 1: d_word -> d_hidden
  AttentionWeights src_attn;  // query d_hidden, key/value d_hidden
  GruWeights dec_ctx;       // layer 2: d_hidden -> d_hidden
  Matrix out_w;             // V_t x d_hidden
  Vector out_b;

  static ModelParams zeros(const ModelConfig& config);

  template <class F>
  void visit(F&& f) {
    f(std::string("src_embed"), src_embed);
    f(std::string("tgt_embed"), tgt_embed);
    enc_fwd.visit("enc_fwd", f);
    enc_bwd.visit("enc_bwd", f);
    obj_attn.visit("obj_attn", f);
    dec_word.visit("dec_word", f);
    src_attn.visit("src_attn", f);
    dec_ctx.visit("dec_ctx", f);
    f(std::string("out_w"), out_w);
    f(std::string("out_b"), out_b);
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit([&](const std::string& name, auto& t) { f(name, std::as_const(t)); });
  }

  std::size_t parameter_count() const;
  void set_zero();
  bool all_finite() const;
};

struct EncoderOutput {
  Matrix annotations;  // H_s, n x d_hidden
  Matrix vasr;         // n x d_hidden
  Vector ssv;          // d_hidden
  std::vector<Matrix> object_attention;  // per head n x m (empty for text_only)
};

struct DecoderState {
  Vector word;     // layer-1 hidden (attention query)
  Vector context;  // layer-2 hidden
};

struct StepOutput {
  Vector logits;
  DecoderState state;
  std::vector<Matrix> source_attention;  // per head 1 x n
};

struct EncoderTrace {
  std::vector<TokenId> source;
  std::vector<GruCache> fwd, bwd;
  AttentionCache attn;
  std::vector<Matrix> object_attention;
};

struct StepTrace {
  TokenId prev = 0;
  GruCache word;
  AttentionCache attn;
  GruCache context;
  Vector output;  // layer-2 state fed to the output projection
  Vector probs;
};

struct ForwardTrace {
  EncoderTrace encoder;
  EncoderOutput encoded;
  GruCache init;
  std::vector<StepTrace> steps;
  std::vector<TokenId> target;
};

class OvcModel {
 public:
  explicit OvcModel(ModelConfig config);
  OvcModel(ModelConfig config, ModelParams params);

  const ModelConfig& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  /// Object set the encoder actually consumes: the pooled single vector for
  /// the image-level variant, nothing for text-only.
  ObjectSet visual_input(const ObjectSet& objects) const;

  EncoderOutput encode(std::span<const TokenId> source, const ObjectSet& objects, EncoderTrace* trace = nullptr) const;
  DecoderState decoder_init(const Vector& ssv, GruCache* trace = nullptr) const;
  StepOutput decode_step(TokenId prev, const DecoderState& state, const Matrix& vasr, StepTrace* trace = nullptr) const;

  /// Per-token negative log-likelihoods with gold previous tokens.
  std::vector<Scalar> forward_teacher_forced(std::span<const TokenId> source, const ObjectSet& objects,
                                             std::span<const TokenId> target, ForwardTrace* trace = nullptr) const;
  std::vector<Scalar> forward_teacher_forced(const ParallelExample& example, ForwardTrace* trace = nullptr) const {
    return forward_teacher_forced(example.source.tokens, example.objects, example.target, trace);
  }

  /// Backpropagates sum_j token_weights[j] * nll_j through `trace`,
  /// accumulating into `grad`.
  void backward(const ForwardTrace& trace, std::span<const Scalar> token_weights, ModelParams& grad) const;

  /// d(output)/d(SSV) for decoder_init, given upstream gradients on both layers.
  Vector decoder_init_backward(const GruCache& trace, const Vector& d_word, const Vector& d_context,
                               ModelParams& grad) const;

  /// Argmax decoding; ties go to the lowest id. Stops after end-of-sequence
  /// (which is included) or `max_len` tokens.
  std::vector<TokenId> greedy_decode(std::span<const TokenId> source, const ObjectSet& objects, std::size_t max_len) const;

 private:
  void check_source(std::span<const TokenId> source) const;

  ModelConfig config_;
  ModelParams params_;
};

/// Index of the largest entry; ties resolve to the lowest index.
Eigen::Index argmax_lowest(const Vector& v);

}  // namespace ovc
