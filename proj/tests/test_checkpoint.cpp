#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ovc/checkpoint.hpp"
#include "test_util.hpp"

using namespace ovc;
using ovc::testing::random_example;
using ovc::testing::small_config;

namespace {

Checkpoint sample_checkpoint(Variant variant = Variant::object_level) {
  Checkpoint c;
  c.config = small_config(variant, 11);
  c.config.residual = variant == Variant::object_level;
  c.params = OvcModel(c.config).params();
  c.source_vocab = Vocabulary::build({{"a", "b", "c"}, {"a", "d"}});
  c.target_vocab = Vocabulary::build({{"x", "y"}});
  c.metadata = {{"best_score", 12.5}, {"train_config", {{"hard_mask", false}}}};
  return c;
}

void expect_same_params(const ModelParams& a, const ModelParams& b) {
  std::vector<Matrix> ta, tb;
  a.visit([&](const std::string&, const auto& t) { ta.emplace_back(t); });
  b.visit([&](const std::string&, const auto& t) { tb.emplace_back(t); });
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i], tb[i]);
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  for (Variant v : {Variant::object_level, Variant::image_level, Variant::text_only}) {
    const Checkpoint c = sample_checkpoint(v);
    const auto path = std::filesystem::temp_directory_path() / "ovc_ckpt_test.bin";
    save_checkpoint(path, c);
    const Checkpoint back = load_checkpoint(path);
    std::filesystem::remove(path);
    EXPECT_EQ(back.config.variant, v);
    EXPECT_EQ(back.config.residual, c.config.residual);
    EXPECT_EQ(back.source_vocab, c.source_vocab);
    EXPECT_EQ(back.target_vocab, c.target_vocab);
    EXPECT_EQ(back.metadata, c.metadata);
    expect_same_params(c.params, back.params);

    std::mt19937_64 rng(1);
    const ParallelExample ex = random_example(c.config, rng);
    EXPECT_EQ(c.model().forward_teacher_forced(ex), back.model().forward_teacher_forced(ex));
    EXPECT_EQ(c.model().greedy_decode(ex.source.tokens, ex.objects, 10),
              back.model().greedy_decode(ex.source.tokens, ex.objects, 10));
    EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(c));
  }
}

TEST(Checkpoint, RejectsCorruptInput) {
  const std::string bytes = serialize_checkpoint(sample_checkpoint());
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), Error);

  std::string bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(deserialize_checkpoint(bad_version), Error);

  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), Error);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 5)), Error);
  EXPECT_THROW(deserialize_checkpoint(bytes + "junk"), Error);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), Error);
}

TEST(Checkpoint, RejectsShapeMismatch) {
  Checkpoint c = sample_checkpoint();
  c.params.out_b = Vector::Zero(3);
  EXPECT_THROW(deserialize_checkpoint(serialize_checkpoint(c)), Error);
}

TEST(Checkpoint, ModelConfigJson) {
  ModelConfig c = small_config(Variant::image_level);
  c.max_objects = 7;
  const ModelConfig back = model_config_from_json(model_config_to_json(c));
  EXPECT_EQ(back.variant, Variant::image_level);
  EXPECT_EQ(back.max_objects, 7u);
  EXPECT_EQ(back.d_hidden, c.d_hidden);
  EXPECT_EQ(back.source_vocab, c.source_vocab);
}
