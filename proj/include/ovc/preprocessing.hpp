#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ovc/core_types.hpp"
#include "ovc/corpus.hpp"

namespace ovc {

inline constexpr Scalar kDefaultGamma = 0.48;

/// Deterministic token embeddings standing in for a pretrained multilingual
/// encoder. Tokens found in the optional vector file use those vectors; every
/// other token gets a Gaussian vector seeded by a hash of (token, seed).
/// Immutable after construction, so lookups are safe from any thread.
class EmbeddingProvider {
 public:
  explicit EmbeddingProvider(int dim = 128, std::uint64_t seed = 20200607);

  /// Vector file: one "token<TAB>v1 v2 ... vd" per line. All vectors must share
  /// one dimension, which then replaces `dim`.
  static EmbeddingProvider from_file(const std::filesystem::path& path, std::uint64_t seed = 20200607);

  int dim() const { return dim_; }
  Vector lookup(std::string_view token) const;
  void set(const std::string& token, Vector v);
  std::size_t overrides() const { return table_.size(); }

 private:
  int dim_;
  std::uint64_t seed_;
  std::unordered_map<std::string, Vector> table_;
};

void write_embedding_file(const std::filesystem::path& path, const std::map<std::string, Vector>& vectors);

/// Entry (i, j) is the cosine of rows[i] and cols[j].
Matrix cosine_matrix(const std::vector<Vector>& rows, const std::vector<Vector>& cols);

/// OSS_i = max_j S_ij.
std::vector<Scalar> object_sentence_similarity(const Matrix& similarity);

/// d_i = 1 iff OSS_i > gamma (strict).
std::vector<int> relevance_indicator(std::span<const Scalar> oss, Scalar gamma);

/// Mean of the per-word vectors of a (possibly multiword) category phrase.
Vector object_phrase_embedding(std::string_view phrase, const EmbeddingProvider& provider);

/// TVS_j = max_k S'_jk and q_j proportional to max(TVS_j, 0) / f_j. Falls back to
/// uniform q when no TVS_j is positive.
VisionWeights vision_weights(const Matrix& target_source_similarity, std::span<const Scalar> frequencies);

/// Relevance of every object of `record` against its undegraded source.
RelevanceProfile relevance_profile(const CorpusRecord& record, const EmbeddingProvider& provider, Scalar gamma);

/// Target-to-vision-related-source weights for `record` (one row per target
/// token plus the end-of-sequence row).
VisionWeights record_vision_weights(const CorpusRecord& record, const EmbeddingProvider& provider,
                                    const Vocabulary& target_vocab);

/// Fills in relevance and vision blocks of every record.
void preprocess_records(std::vector<CorpusRecord>& records, const EmbeddingProvider& provider,
                        const Vocabulary& target_vocab, Scalar gamma);

// ---------------------------------------------------------------------------
// Source degradation

struct ColorLexicon {
  std::set<std::string> words;
  static ColorLexicon standard();
  bool contains(std::string_view token) const { return words.count(std::string(token)) > 0; }
};

struct DegradedTokens {
  std::vector<std::string> tokens;
  std::vector<EntitySpan> spans;
};

/// Replaces each visual entity span by one category tag and each remaining
/// color word by the [color] tag. Notvisual spans are left alone.
DegradedTokens degrade_tokens(std::span<const std::string> tokens, std::span<const EntitySpan> spans,
                              const ColorLexicon& colors);

/// Id-level degradation. Tags missing from `vocab` map to the unknown id.
SourceSentence degrade_sentence(const SourceSentence& sentence, const Vocabulary& vocab,
                                const ColorLexicon& colors = ColorLexicon::standard());

/// Degraded copy of a corpus record; keeps the original source alongside.
CorpusRecord degrade_record(const CorpusRecord& record, const ColorLexicon& colors = ColorLexicon::standard());

struct DegradationStats {
  std::size_t total_tokens = 0;
  std::size_t masked_tokens = 0;
  std::map<EntityCategory, std::size_t> per_category;
  Scalar masked_fraction() const {
    return total_tokens ? static_cast<Scalar>(masked_tokens) / static_cast<Scalar>(total_tokens) : 0.0;
  }
};

/// Counts original tokens that degradation replaces (per category and overall).
DegradationStats degradation_stats(const std::vector<CorpusRecord>& originals,
                                   const ColorLexicon& colors = ColorLexicon::standard());

}  // namespace ovc
