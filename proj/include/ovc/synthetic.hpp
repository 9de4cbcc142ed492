#pragma once

// Controlled grounded-translation corpus. Every example mentions a few latent
// concepts (e.g. "dog", "red") of several categories; the target is the source
// mapped word by word through a fixed permutation plus a constant suffix
// token. Each mentioned concept has one ground-truth object (prototype +
// Gaussian noise, plus a small salience offset); distractor objects come from
// unmentioned concepts. In the degraded corpus every concept word becomes its
// category tag, so the matching target word is recoverable only from objects.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ovc/corpus.hpp"
#include "ovc/preprocessing.hpp"

namespace ovc {

struct SynthConfig {
  std::vector<std::string> categories = {"animals", "vehicles", "color"};
  int n_attributes = 6;              // concepts per category
  std::size_t n_examples = 5000;     // training examples
  std::size_t n_valid = 300;
  std::size_t n_test = 500;
  int concepts_per_example = 2;      // distinct categories mentioned per sentence
  int sentence_length = 6;           // tokens per source sentence
  int distractors = 2;               // distractor objects per image
  Scalar same_category_distractors = 0.5;  // probability a distractor shares a mentioned category
  int d_obj = 32;
  Scalar noise_std = 0.0;
  Scalar label_noise_std = 0.0;      // detector labels from prototype + independent noise (0: from the feature itself)
  Scalar salience = 0.0;             // offset of ground-truth objects along a fixed direction
  std::uint64_t seed = 1;
  int embedding_dim = 64;

  void validate() const;
};

nlohmann::json synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct SynthCorpus {
  SynthConfig config;
  std::vector<CorpusRecord> train, valid, test;                         // standard
  std::vector<CorpusRecord> train_degraded, valid_degraded, test_degraded;
  Eigen::MatrixXf features;                                             // all objects, referenced by row range
  std::map<std::string, Vector> embeddings;                             // token vectors for preprocessing
  std::vector<std::vector<bool>> ground_truth;                          // per example (train, valid, test order): object is mentioned
  std::vector<std::string> concepts;                                    // every concept word
  std::string feature_file = "features.bin";
};

SynthCorpus generate_synthetic(const SynthConfig& config);

/// Writes train/valid/test corpora (plain and ".degraded"), the feature file,
/// the embedding file and the config into `out_dir`.
void write_synthetic(const SynthCorpus& corpus, const std::filesystem::path& out_dir);

/// Ready-to-train datasets with relevance and vision annotations.
struct SynthDatasets {
  Vocabulary source_vocab, target_vocab;
  Dataset train, valid, test;
  Dataset train_degraded, valid_degraded, test_degraded;
  Scalar relevance_accuracy = 0;  // detected d vs ground truth over all objects
};

/// Preprocesses every split in place (relevance and vision blocks) and
/// encodes them with vocabularies built over all training records.
SynthDatasets prepare_synthetic(SynthCorpus& corpus, Scalar gamma = kDefaultGamma);

/// Fraction of objects whose relevance flag matches the ground truth.
Scalar relevance_detection_accuracy(const std::vector<CorpusRecord>& records,
                                    const std::vector<std::vector<bool>>& ground_truth, std::size_t offset = 0);

}  // namespace ovc
