#pragma once

// Line-delimited JSON corpus files and the float32 object-feature sidecar.
//
// One record per line:
//   {"id": "...", "source_tokens": [...], "target_tokens": [...],
//    "entity_spans": [{"start": 2, "end": 3, "category": "people"}, ...],
//    "object_feature_ref": {"path": "features.bin", "row_begin": 0, "row_end": 5},
//    "object_categories": [...], "object_confidences": [...],
//    "degraded": false,
//    "original_tokens": [...], "original_spans": [...],        (degraded records)
//    "relevance": {"gamma": .., "S": [[..]], "OSS": [..], "d": [..]},
//    "vision": {"S_prime": [[..]], "TVS": [..], "q": [..]}}      (after preprocess)
//
// Feature file: uint32 m, uint32 d_obj (little endian), then m*d_obj float32
// values in row-major order. Feature paths are resolved against the corpus
// file's directory.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ovc/core_types.hpp"

namespace ovc {

struct FeatureRef {
  std::string path;
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
};

struct RelevanceProfile {
  Matrix similarity;              // S, m x n
  std::vector<Scalar> oss;        // per object
  std::vector<int> relevant;      // d
  Scalar gamma = 0.48;
};

struct VisionWeights {
  Matrix similarity;              // S', r x n with non vision-related columns zeroed
  std::vector<Scalar> tvs;
  std::vector<Scalar> weights;    // q
};

struct CorpusRecord {
  std::string id;
  std::vector<std::string> source_tokens;
  std::vector<std::string> target_tokens;
  std::vector<EntitySpan> entity_spans;
  FeatureRef features;
  std::vector<std::string> object_categories;
  std::vector<Scalar> object_confidences;
  bool degraded = false;
  std::vector<std::string> original_tokens;
  std::vector<EntitySpan> original_spans;
  std::optional<RelevanceProfile> relevance;
  std::optional<VisionWeights> vision;

  /// The undegraded source (tokens, spans): original_* when present.
  const std::vector<std::string>& clean_tokens() const { return degraded && !original_tokens.empty() ? original_tokens : source_tokens; }
  const std::vector<EntitySpan>& clean_spans() const { return degraded && !original_tokens.empty() ? original_spans : entity_spans; }
};

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records);
std::string record_to_json_line(const CorpusRecord& record);
CorpusRecord record_from_json_line(const std::string& line);

/// Row-major float32 matrix file.
Eigen::MatrixXf read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const Eigen::MatrixXf& rows);

/// Caches whole feature files by resolved path.
class FeatureStore {
 public:
  explicit FeatureStore(std::filesystem::path base_dir) : base_dir_(std::move(base_dir)) {}
  Matrix rows(const FeatureRef& ref);
  /// Registers an in-memory file under `path` (relative to the base dir).
  void add(const std::string& path, Eigen::MatrixXf rows);

 private:
  std::filesystem::path base_dir_;
  std::map<std::string, Eigen::MatrixXf> files_;
};

struct Dataset {
  std::vector<ParallelExample> examples;
  std::uint64_t source_vocab_fingerprint = 0;
  std::uint64_t target_vocab_fingerprint = 0;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

/// Maps records onto ids with the given vocabularies and loads their objects.
Dataset encode_corpus(const std::vector<CorpusRecord>& records, const Vocabulary& source_vocab,
                      const Vocabulary& target_vocab, FeatureStore& features);

/// Token lists used for vocabulary construction.
std::vector<std::vector<std::string>> source_token_lists(const std::vector<CorpusRecord>& records);
std::vector<std::vector<std::string>> target_token_lists(const std::vector<CorpusRecord>& records);

}  // namespace ovc
