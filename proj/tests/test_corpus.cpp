#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ovc/corpus.hpp"

using namespace ovc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ovc_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

CorpusRecord sample_record() {
  CorpusRecord r;
  r.id = "ex1";
  r.source_tokens = {"a", "man", "in", "a", "red", "hat"};
  r.target_tokens = {"ein", "mann", "mit", "rotem", "hut"};
  r.entity_spans = {{0, 2, EntityCategory::people}, {4, 6, EntityCategory::clothing}};
  r.features = {"feat.bin", 0, 2};
  r.object_categories = {"young man", "hat"};
  r.object_confidences = {0.9, 0.75};
  return r;
}

}  // namespace

TEST(Corpus, JsonLineRoundTrip) {
  CorpusRecord r = sample_record();
  RelevanceProfile rel;
  rel.similarity = Matrix::Identity(2, 6);
  rel.oss = {1.0, 1.0};
  rel.relevant = {1, 1};
  rel.gamma = 0.48;
  r.relevance = rel;
  const CorpusRecord back = record_from_json_line(record_to_json_line(r));
  EXPECT_EQ(back.id, r.id);
  EXPECT_EQ(back.source_tokens, r.source_tokens);
  EXPECT_EQ(back.target_tokens, r.target_tokens);
  EXPECT_EQ(back.entity_spans, r.entity_spans);
  EXPECT_EQ(back.features.path, "feat.bin");
  EXPECT_EQ(back.features.row_end, 2u);
  EXPECT_EQ(back.object_categories, r.object_categories);
  ASSERT_TRUE(back.relevance.has_value());
  EXPECT_EQ(back.relevance->relevant, rel.relevant);
  EXPECT_TRUE(back.relevance->similarity.isApprox(rel.similarity));
  EXPECT_FALSE(back.vision.has_value());
}

TEST(Corpus, BadLinesThrow) {
  EXPECT_THROW(record_from_json_line("{not json"), Error);
  EXPECT_THROW(record_from_json_line(R"({"id": "x"})"), Error);
  CorpusRecord r = sample_record();
  r.entity_spans = {{0, 2, EntityCategory::people}};
  std::string line = record_to_json_line(r);
  const auto pos = line.find("people");
  line.replace(pos, 6, "furniture");
  EXPECT_THROW(record_from_json_line(line), Error);
}

TEST(Corpus, FeatureFileRoundTrip) {
  const fs::path dir = temp_dir("features");
  Eigen::MatrixXf m(3, 4);
  m.setRandom();
  write_feature_file(dir / "f.bin", m);
  EXPECT_EQ(fs::file_size(dir / "f.bin"), 8u + 3u * 4u * 4u);
  const Eigen::MatrixXf back = read_feature_file(dir / "f.bin");
  EXPECT_EQ(back, m);
}

TEST(Corpus, TruncatedFeatureFileThrows) {
  const fs::path dir = temp_dir("features_trunc");
  Eigen::MatrixXf m = Eigen::MatrixXf::Ones(2, 2);
  write_feature_file(dir / "f.bin", m);
  fs::resize_file(dir / "f.bin", 12);
  EXPECT_THROW(read_feature_file(dir / "f.bin"), Error);
}

TEST(Corpus, EncodeAppendsEosAndLoadsObjects) {
  const fs::path dir = temp_dir("encode");
  Eigen::MatrixXf m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  write_feature_file(dir / "feat.bin", m);
  const std::vector<CorpusRecord> records = {sample_record()};
  write_corpus(dir / "c.jsonl", records);
  const auto loaded = read_corpus(dir / "c.jsonl");
  ASSERT_EQ(loaded.size(), 1u);
  const Vocabulary src = Vocabulary::build(source_token_lists(loaded));
  const Vocabulary tgt = Vocabulary::build(target_token_lists(loaded));
  FeatureStore store(dir);
  const Dataset d = encode_corpus(loaded, src, tgt, store);
  ASSERT_EQ(d.size(), 1u);
  const auto& ex = d.examples[0];
  EXPECT_EQ(ex.target.size(), 6u);
  EXPECT_EQ(ex.target.back(), Vocabulary::kEos);
  EXPECT_EQ(ex.objects.size(), 2u);
  EXPECT_DOUBLE_EQ(ex.objects.features(1, 2), 6.0);
  EXPECT_EQ(ex.source.vision_related, (std::vector<bool>{true, true, false, false, true, true}));
  EXPECT_EQ(d.source_vocab_fingerprint, src.fingerprint());
}

TEST(Corpus, FeatureRowsOutOfRangeThrow) {
  const fs::path dir = temp_dir("range");
  write_feature_file(dir / "feat.bin", Eigen::MatrixXf::Ones(1, 3));
  FeatureStore store(dir);
  EXPECT_THROW(store.rows({"feat.bin", 0, 2}), Error);
}
