#pragma once

#include <random>

#include "ovc/core_types.hpp"
#include "ovc/model.hpp"
#include "ovc/synthetic.hpp"

namespace ovc::testing {

inline ModelConfig small_config(Variant variant = Variant::object_level, std::uint64_t seed = 3) {
  ModelConfig c;
  c.d_word = 6;
  c.d_hidden = 8;
  c.n_heads = 2;
  c.d_obj = 5;
  c.source_vocab = 12;
  c.target_vocab = 13;
  c.variant = variant;
  c.seed = seed;
  return c;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, Scalar scale = 1.0) {
  std::normal_distribution<Scalar> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, Scalar scale = 1.0) {
  return random_matrix(n, 1, rng, scale);
}

inline ParallelExample random_example(const ModelConfig& c, std::mt19937_64& rng, std::size_t n = 4, std::size_t m = 3,
                                      std::size_t r = 3) {
  std::uniform_int_distribution<TokenId> src(Vocabulary::kNumReserved, c.source_vocab - 1);
  std::uniform_int_distribution<TokenId> tgt(Vocabulary::kNumReserved, c.target_vocab - 1);
  ParallelExample ex;
  ex.id = "rand";
  std::vector<TokenId> s(n);
  for (auto& t : s) t = src(rng);
  ex.source = SourceSentence::make(s, {});
  for (std::size_t j = 0; j + 1 < r; ++j) ex.target.push_back(tgt(rng));
  ex.target.push_back(Vocabulary::kEos);
  std::vector<std::string> cats(m, "obj");
  ex.objects = ObjectSet(random_matrix(static_cast<Eigen::Index>(m), c.d_obj, rng), cats, std::vector<Scalar>(m, 1.0));
  ex.annotations.relevance.assign(m, 0);
  for (std::size_t i = 0; i < m; ++i) ex.annotations.relevance[i] = static_cast<int>(i % 2 == 0);
  ex.annotations.target_weights.assign(ex.target.size(), 1.0 / static_cast<Scalar>(ex.target.size()));
  return ex;
}

inline SynthConfig tiny_synth_config(std::uint64_t seed = 1) {
  SynthConfig s;
  s.categories = {"animals", "color"};
  s.n_attributes = 3;
  s.n_examples = 24;
  s.n_valid = 6;
  s.n_test = 6;
  s.sentence_length = 4;
  s.distractors = 1;
  s.d_obj = 8;
  s.embedding_dim = 32;
  s.seed = seed;
  return s;
}

inline ModelConfig tiny_model_config(const SynthDatasets& d, Variant variant = Variant::object_level) {
  ModelConfig c;
  c.d_word = 6;
  c.d_hidden = 8;
  c.n_heads = 2;
  c.d_obj = static_cast<int>(d.train.examples.front().objects.features.cols());
  c.source_vocab = static_cast<int>(d.source_vocab.size());
  c.target_vocab = static_cast<int>(d.target_vocab.size());
  c.variant = variant;
  c.seed = 5;
  return c;
}

}  // namespace ovc::testing
