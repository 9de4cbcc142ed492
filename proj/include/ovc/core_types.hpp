#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace ovc {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using TokenId = std::int32_t;

/// Raised for every contract violation (bad input, malformed file, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flickr30K-Entities classes plus the color class used for degradation.
enum class EntityCategory {
  people,
  scene,
  clothing,
  instruments,
  animals,
  bodyparts,
  vehicles,
  other,
  notvisual,
  color,
};

std::string_view category_name(EntityCategory category);
EntityCategory parse_category(std::string_view name);
/// "[people]", "[color]", ...
std::string category_tag(EntityCategory category);
bool is_category_tag(std::string_view token);
inline bool is_visual(EntityCategory category) { return category != EntityCategory::notvisual; }

/// Lowercases and splits on ASCII whitespace.
std::vector<std::string> tokenize(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens);

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kNumReserved = 4;

  Vocabulary();

  /// Counts tokens over `corpus`; tokens seen fewer than `min_count` times are
  /// left out and map to kUnk. Ordering is by descending count, then bytewise.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus, int min_count = 1);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }

  /// Training-corpus count of `id`, floored at 1.
  std::int64_t frequency(TokenId id) const;
  std::int64_t frequency(std::string_view token) const;

  /// Adds `token` with count 1 if missing (used for category tags).
  TokenId add(std::string_view token);

  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
  std::uint64_t fingerprint() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_ && counts_ == other.counts_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Whitespace-tokenized, lowercased lookup; unseen tokens become kUnk.
std::vector<TokenId> encode_tokens(std::string_view sentence, const Vocabulary& vocab);
std::vector<TokenId> encode_tokens(std::span<const std::string> tokens, const Vocabulary& vocab);
std::string decode_tokens(std::span<const TokenId> ids, const Vocabulary& vocab);

struct EntitySpan {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
  EntityCategory category = EntityCategory::other;

  bool operator==(const EntitySpan&) const = default;
};

/// Throws if spans overlap, are empty or exceed `length`.
void validate_spans(std::span<const EntitySpan> spans, std::size_t length);
/// Per-token flag: inside a span whose category is visual.
std::vector<bool> vision_related_flags(std::span<const EntitySpan> spans, std::size_t length);

struct SourceSentence {
  std::vector<TokenId> tokens;
  std::vector<EntitySpan> entity_spans;
  std::vector<bool> vision_related;
  bool degraded = false;

  static SourceSentence make(std::vector<TokenId> tokens, std::vector<EntitySpan> spans);
  std::size_t size() const { return tokens.size(); }
  bool operator==(const SourceSentence&) const = default;
};

struct ObjectSet {
  Matrix features;  // m x d_obj
  std::vector<std::string> categories;
  std::vector<Scalar> confidences;
  std::vector<bool> masked;

  ObjectSet() = default;
  ObjectSet(Matrix features, std::vector<std::string> categories, std::vector<Scalar> confidences);

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  Eigen::Index dim() const { return features.cols(); }
  bool empty() const { return features.rows() == 0; }
  /// Feature matrix as seen by the model: masked rows are zero.
  Matrix effective_features() const;
  /// Copy with the given objects additionally masked.
  ObjectSet with_masked(std::span<const std::size_t> indices) const;
  void validate(std::size_t max_objects) const;
};

/// Per-example preprocessing outputs consumed by training.
struct ExampleAnnotations {
  std::vector<int> relevance;          // d, one per object
  std::vector<Scalar> target_weights;  // q, one per target token (incl. end-of-sequence)
};

struct ParallelExample {
  std::string id;
  SourceSentence source;
  std::vector<TokenId> target;  // ends with Vocabulary::kEos
  ObjectSet objects;
  bool degraded = false;
  ExampleAnnotations annotations;

  void validate() const;
};

}  // namespace ovc
