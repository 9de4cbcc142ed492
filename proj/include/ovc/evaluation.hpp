#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ovc/checkpoint.hpp"
#include "ovc/corpus.hpp"
#include "ovc/losses.hpp"
#include "ovc/model.hpp"

namespace ovc {

/// Corpus BLEU in [0, 100]: clipped n-gram counts pooled over the corpus,
/// geometric mean of precisions 1..max_n, times the brevity penalty.
/// Smoothing: for n >= 2, a precision with zero matches becomes
/// (0 + 1) / (total + 1). A zero unigram precision gives 0.
Scalar corpus_bleu(const std::vector<std::vector<TokenId>>& references,
                   const std::vector<std::vector<TokenId>>& hypotheses, int max_n = 4);

/// Drops a trailing end-of-sequence id (and anything after it).
std::vector<TokenId> strip_eos(std::span<const TokenId> ids);

struct DecodeResult {
  Scalar bleu = 0;
  std::vector<std::vector<TokenId>> hypotheses;
};

/// Greedy-decodes every example (hard masking applied when `options` asks for
/// it) and scores the corpus.
DecodeResult decode_dataset(const OvcModel& model, const Dataset& data, const LossOptions& options = {});

/// Same, checking that `data` was encoded with the checkpoint's vocabularies.
DecodeResult evaluate(const Checkpoint& checkpoint, const Dataset& data);

/// Loss options recorded in a checkpoint's training metadata (hard masking).
LossOptions checkpoint_loss_options(const Checkpoint& checkpoint);

/// Writes one "id<TAB>hypothesis<TAB>reference" line per example.
void write_decodes(const std::filesystem::path& path, const Dataset& data, const DecodeResult& result,
                   const Vocabulary& target_vocab);

/// Teacher-forced argmax accuracy at the target positions aligned with the
/// category tags of degraded sources. Assumes a monotone one-to-one token
/// alignment (true for the synthetic benchmark).
struct MaskedTokenAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  Scalar accuracy() const { return total ? static_cast<Scalar>(correct) / static_cast<Scalar>(total) : 0.0; }
};
MaskedTokenAccuracy masked_token_accuracy(const OvcModel& model, const Dataset& data,
                                          const LossOptions& options = {});

/// Mean token NLL over a dataset (unmasked pass).
Scalar mean_token_nll(const OvcModel& model, const Dataset& data, const LossOptions& options = {});

struct AttentionDump {
  std::string example_id;
  std::vector<std::string> object_categories;
  std::vector<std::string> source_tokens;
  std::vector<Matrix> heads;  // n x m each
  Matrix mean;                // head average
};

/// Object-source attention of the encoder for one example.
AttentionDump dump_attention(const OvcModel& model, const ParallelExample& example, const Vocabulary& source_vocab);

/// Tab-separated text: "#"-prefixed header lines with the example id, source
/// tokens and object categories, then one block per head ("## head k") and a
/// final "## mean" block, each holding one row of m values per source token.
void write_attention_dump(const std::filesystem::path& path, const AttentionDump& dump);
AttentionDump read_attention_dump(const std::filesystem::path& path);

}  // namespace ovc
