#include "ovc/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/QR>

namespace ovc {

using nlohmann::json;

namespace {

const std::map<std::string, std::vector<std::string>>& word_lists() {
  static const std::map<std::string, std::vector<std::string>> lists = {
      {"animals", {"dog", "cat", "horse", "bird", "cow", "sheep", "goat", "duck", "pig", "fox"}},
      {"vehicles", {"car", "bus", "bike", "truck", "boat", "train", "plane", "van", "cart", "tram"}},
      {"color", {"red", "blue", "green", "yellow", "black", "white", "orange", "purple", "pink", "brown"}},
      {"people", {"man", "woman", "boy", "girl", "child", "player", "worker", "rider", "baby", "cook"}},
      {"clothing", {"shirt", "hat", "jacket", "dress", "coat", "scarf", "boots", "cap", "skirt", "vest"}},
      {"bodyparts", {"hand", "arm", "leg", "face", "foot", "head", "finger", "knee", "back", "neck"}},
      {"scene", {"street", "beach", "park", "field", "road", "lake", "forest", "city", "river", "hill"}},
      {"instruments", {"guitar", "drum", "piano", "violin", "flute", "horn", "banjo", "harp", "cello", "bell"}},
      {"other", {"ball", "box", "sign", "chair", "table", "rope", "bag", "cup", "kite", "flag"}},
  };
  return lists;
}

const std::vector<std::string> kFillers = {"a", "the", "near", "with", "and", "is", "on", "by", "in", "at", "of", "it"};
constexpr const char* kNotVisualFiller = "it";
constexpr const char* kSuffix = "fin";

std::string concept_word(const std::string& category, int index) {
  const auto& lists = word_lists();
  if (auto it = lists.find(category); it != lists.end() && index < static_cast<int>(it->second.size())) {
    return it->second[static_cast<std::size_t>(index)];
  }
  return category + std::to_string(index);
}

/// Columns of a random orthonormal basis (count <= dim).
Matrix orthonormal_columns(int dim, int count, std::mt19937_64& rng) {
  std::normal_distribution<Scalar> normal(0.0, 1.0);
  Matrix g(dim, count);
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(dim, count);
  return q;
}

struct Split {
  std::vector<CorpusRecord>* records;
  std::size_t count;
  const char* name;
};

}  // namespace

void SynthConfig::validate() const {
  if (categories.empty()) throw Error("synthetic config needs at least one category");
  std::set<std::string> seen;
  for (const auto& c : categories) {
    const EntityCategory cat = parse_category(c);
    if (!is_visual(cat)) throw Error("synthetic categories must be visual: " + c);
    if (!seen.insert(c).second) throw Error("duplicate synthetic category: " + c);
  }
  if (n_attributes < 2) throw Error("n_attributes must be >= 2");
  if (n_examples < 1) throw Error("n_examples must be >= 1");
  if (distractors < 0) throw Error("distractors must be >= 0");
  if (concepts_per_example < 1 || concepts_per_example > static_cast<int>(categories.size())) {
    throw Error("concepts_per_example must lie in [1, number of categories]");
  }
  if (sentence_length < concepts_per_example) throw Error("sentence_length must be >= concepts_per_example");
  if (concepts_per_example + distractors > 20) throw Error("too many objects per image (max 20)");
  const int n_concepts = static_cast<int>(categories.size()) * n_attributes;
  if (d_obj < n_concepts + 1) throw Error("d_obj must exceed the number of concepts (" + std::to_string(n_concepts) + ")");
  if (noise_std < 0 || label_noise_std < 0) throw Error("noise_std and label_noise_std must be >= 0");
  if (same_category_distractors < 0 || same_category_distractors > 1) throw Error("same_category_distractors must lie in [0, 1]");
  if (embedding_dim < 2) throw Error("embedding_dim must be >= 2");
}

json synth_config_to_json(const SynthConfig& c) {
  return {{"categories", c.categories},
          {"n_attributes", c.n_attributes},
          {"n_examples", c.n_examples},
          {"n_valid", c.n_valid},
          {"n_test", c.n_test},
          {"concepts_per_example", c.concepts_per_example},
          {"sentence_length", c.sentence_length},
          {"distractors", c.distractors},
          {"same_category_distractors", c.same_category_distractors},
          {"d_obj", c.d_obj},
          {"noise_std", c.noise_std},
          {"label_noise_std", c.label_noise_std},
          {"salience", c.salience},
          {"seed", c.seed},
          {"embedding_dim", c.embedding_dim}};
}

SynthConfig synth_config_from_json(const json& j) {
  if (!j.is_object()) throw Error("synthetic config must be an object");
  SynthConfig c;
  const json defaults = synth_config_to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw Error("unknown synthetic key: " + key);
  }
  try {
    c.categories = j.value("categories", c.categories);
    c.n_attributes = j.value("n_attributes", c.n_attributes);
    c.n_examples = j.value("n_examples", c.n_examples);
    c.n_valid = j.value("n_valid", c.n_valid);
    c.n_test = j.value("n_test", c.n_test);
    c.concepts_per_example = j.value("concepts_per_example", c.concepts_per_example);
    c.sentence_length = j.value("sentence_length", c.sentence_length);
    c.distractors = j.value("distractors", c.distractors);
    c.same_category_distractors = j.value("same_category_distractors", c.same_category_distractors);
    c.d_obj = j.value("d_obj", c.d_obj);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.label_noise_std = j.value("label_noise_std", c.label_noise_std);
    c.salience = j.value("salience", c.salience);
    c.seed = j.value("seed", c.seed);
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  } catch (const json::exception& e) {
    throw Error(std::string("bad synthetic config value: ") + e.what());
  }
  c.validate();
  return c;
}

SynthCorpus generate_synthetic(const SynthConfig& config) {
  config.validate();
  SynthCorpus out;
  out.config = config;
  std::mt19937_64 rng(config.seed);

  const int n_cat = static_cast<int>(config.categories.size());
  const int n_attr = config.n_attributes;
  const int n_concepts = n_cat * n_attr;
  for (const auto& c : config.categories)
    for (int a = 0; a < n_attr; ++a) out.concepts.push_back(concept_word(c, a));
  {
    std::set<std::string> unique(out.concepts.begin(), out.concepts.end());
    for (const auto& f : kFillers) unique.insert(f);
    if (unique.size() != out.concepts.size() + kFillers.size()) throw Error("synthetic concept words collide");
  }

  // Object geometry: orthonormal concept prototypes plus one salience direction.
  const Matrix basis = orthonormal_columns(config.d_obj, n_concepts + 1, rng);
  const Matrix prototypes = basis.leftCols(n_concepts);  // d_obj x n_concepts
  const Vector salience_dir = basis.col(n_concepts);

  // Translation: fixed permutation of the source lexicon onto target words.
  std::vector<std::string> lexicon = kFillers;
  lexicon.insert(lexicon.end(), out.concepts.begin(), out.concepts.end());
  std::vector<std::size_t> perm(lexicon.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::map<std::string, std::string> translate;
  for (std::size_t i = 0; i < lexicon.size(); ++i) translate[lexicon[i]] = "t" + std::to_string(perm[i]);

  // Token embeddings for preprocessing: orthonormal when the dimension allows,
  // each target word sharing its source word's vector.
  std::vector<std::string> emb_words = lexicon;
  for (const auto& c : config.categories) emb_words.push_back(category_tag(parse_category(c)));
  emb_words.push_back(kSuffix);
  if (config.embedding_dim >= static_cast<int>(emb_words.size())) {
    const Matrix e = orthonormal_columns(config.embedding_dim, static_cast<int>(emb_words.size()), rng);
    for (std::size_t i = 0; i < emb_words.size(); ++i) out.embeddings[emb_words[i]] = e.col(static_cast<Eigen::Index>(i));
  } else {
    std::normal_distribution<Scalar> normal(0.0, 1.0);
    for (const auto& w : emb_words) {
      Vector v(config.embedding_dim);
      for (auto& x : v) x = normal(rng);
      out.embeddings[w] = v;
    }
  }
  for (const auto& w : lexicon) out.embeddings[translate[w]] = out.embeddings[w];

  const std::size_t total = config.n_examples + config.n_valid + config.n_test;
  const std::size_t per_image = static_cast<std::size_t>(config.concepts_per_example + config.distractors);
  out.features.resize(static_cast<Eigen::Index>(total * per_image), config.d_obj);

  std::normal_distribution<Scalar> noise(0.0, 1.0);
  std::uniform_real_distribution<Scalar> unit(0.0, 1.0);
  std::size_t row = 0;
  std::size_t serial = 0;

  const Split splits[] = {{&out.train, config.n_examples, "train"},
                          {&out.valid, config.n_valid, "valid"},
                          {&out.test, config.n_test, "test"}};
  for (const auto& split : splits) {
    for (std::size_t e = 0; e < split.count; ++e, ++serial) {
      CorpusRecord rec;
      rec.id = std::string(split.name) + "-" + std::to_string(e);

      // Mentioned concepts: distinct categories, uniform attribute.
      std::vector<int> cats(static_cast<std::size_t>(n_cat));
      std::iota(cats.begin(), cats.end(), 0);
      std::shuffle(cats.begin(), cats.end(), rng);
      cats.resize(static_cast<std::size_t>(config.concepts_per_example));
      std::vector<int> mentioned;
      for (int c : cats) mentioned.push_back(c * n_attr + std::uniform_int_distribution<int>(0, n_attr - 1)(rng));

      // Sentence: concept slots at sorted random positions, fillers elsewhere.
      std::vector<int> positions(static_cast<std::size_t>(config.sentence_length));
      std::iota(positions.begin(), positions.end(), 0);
      std::shuffle(positions.begin(), positions.end(), rng);
      positions.resize(mentioned.size());
      std::sort(positions.begin(), positions.end());
      rec.source_tokens.assign(static_cast<std::size_t>(config.sentence_length), "");
      for (std::size_t k = 0; k < mentioned.size(); ++k) {
        const auto pos = static_cast<std::size_t>(positions[k]);
        rec.source_tokens[pos] = out.concepts[static_cast<std::size_t>(mentioned[k])];
        rec.entity_spans.push_back(
            {pos, pos + 1, parse_category(config.categories[static_cast<std::size_t>(mentioned[k] / n_attr)])});
      }
      std::uniform_int_distribution<std::size_t> filler(0, kFillers.size() - 1);
      for (std::size_t i = 0; i < rec.source_tokens.size(); ++i) {
        if (!rec.source_tokens[i].empty()) continue;
        rec.source_tokens[i] = kFillers[filler(rng)];
        if (rec.source_tokens[i] == kNotVisualFiller) rec.entity_spans.push_back({i, i + 1, EntityCategory::notvisual});
      }
      std::sort(rec.entity_spans.begin(), rec.entity_spans.end(),
                [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
      for (const auto& w : rec.source_tokens) rec.target_tokens.push_back(translate.at(w));
      rec.target_tokens.push_back(kSuffix);

      // Objects: one per mentioned concept, then distractors from unmentioned concepts.
      std::vector<int> object_concepts = mentioned;
      std::vector<bool> truth(mentioned.size(), true);
      for (int d = 0; d < config.distractors; ++d) {
        std::vector<int> pool;
        const bool same = unit(rng) < config.same_category_distractors || config.concepts_per_example == n_cat;
        for (int c = 0; c < n_concepts; ++c) {
          if (std::find(mentioned.begin(), mentioned.end(), c) != mentioned.end()) continue;
          const bool in_mentioned_cat = std::find(cats.begin(), cats.end(), c / n_attr) != cats.end();
          if (in_mentioned_cat == same) pool.push_back(c);
        }
        object_concepts.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
        truth.push_back(false);
      }
      std::vector<std::size_t> order(object_concepts.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);

      rec.features = {out.feature_file, row, row + order.size()};
      std::vector<bool> gt;
      for (std::size_t o : order) {
        Vector f = prototypes.col(object_concepts[o]);
        for (auto& x : f) x += config.noise_std * noise(rng);
        if (truth[o]) f += config.salience * salience_dir;
        Vector view = f;
        if (config.label_noise_std > 0) {
          view = prototypes.col(object_concepts[o]);
          for (auto& x : view) x += config.label_noise_std * noise(rng);
        }
        const Vector scores = prototypes.transpose() * view;
        Eigen::Index best = 0;
        scores.maxCoeff(&best);
        rec.object_categories.push_back(out.concepts[static_cast<std::size_t>(best)]);
        rec.object_confidences.push_back(std::clamp(scores(best), 0.0, 1.0));
        out.features.row(static_cast<Eigen::Index>(row)) = f.cast<float>().transpose();
        gt.push_back(truth[o]);
        ++row;
      }
      out.ground_truth.push_back(std::move(gt));
      split.records->push_back(std::move(rec));
    }
  }

  const ColorLexicon colors = ColorLexicon::standard();
  for (const auto& r : out.train) out.train_degraded.push_back(degrade_record(r, colors));
  for (const auto& r : out.valid) out.valid_degraded.push_back(degrade_record(r, colors));
  for (const auto& r : out.test) out.test_degraded.push_back(degrade_record(r, colors));
  return out;
}

void write_synthetic(const SynthCorpus& corpus, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_corpus(out_dir / "train.jsonl", corpus.train);
  write_corpus(out_dir / "valid.jsonl", corpus.valid);
  write_corpus(out_dir / "test.jsonl", corpus.test);
  write_corpus(out_dir / "train.degraded.jsonl", corpus.train_degraded);
  write_corpus(out_dir / "valid.degraded.jsonl", corpus.valid_degraded);
  write_corpus(out_dir / "test.degraded.jsonl", corpus.test_degraded);
  write_feature_file(out_dir / corpus.feature_file, corpus.features);
  write_embedding_file(out_dir / "embeddings.tsv", corpus.embeddings);
  std::ofstream cfg(out_dir / "synth_config.json");
  cfg << synth_config_to_json(corpus.config).dump(2) << '\n';
  std::ofstream gt(out_dir / "ground_truth.tsv");
  const std::vector<const std::vector<CorpusRecord>*> splits = {&corpus.train, &corpus.valid, &corpus.test};
  std::size_t k = 0;
  for (const auto* split : splits) {
    for (const auto& r : *split) {
      gt << r.id;
      for (bool b : corpus.ground_truth[k]) gt << '\t' << (b ? 1 : 0);
      gt << '\n';
      ++k;
    }
  }
}

Scalar relevance_detection_accuracy(const std::vector<CorpusRecord>& records,
                                    const std::vector<std::vector<bool>>& ground_truth, std::size_t offset) {
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.relevance) throw Error("record " + r.id + " has no relevance annotations");
    const auto& truth = ground_truth.at(offset + i);
    for (std::size_t o = 0; o < truth.size(); ++o) {
      ++total;
      if ((r.relevance->relevant.at(o) != 0) == truth[o]) ++correct;
    }
  }
  return total ? static_cast<Scalar>(correct) / static_cast<Scalar>(total) : 0.0;
}

SynthDatasets prepare_synthetic(SynthCorpus& corpus, Scalar gamma) {
  SynthDatasets out;
  auto src_lists = source_token_lists(corpus.train);
  for (auto& l : source_token_lists(corpus.train_degraded)) src_lists.push_back(std::move(l));
  out.source_vocab = Vocabulary::build(src_lists);
  out.target_vocab = Vocabulary::build(target_token_lists(corpus.train));

  EmbeddingProvider provider(corpus.config.embedding_dim, corpus.config.seed);
  for (const auto& [word, v] : corpus.embeddings) provider.set(word, v);
  for (auto* split : {&corpus.train, &corpus.valid, &corpus.test, &corpus.train_degraded, &corpus.valid_degraded,
                      &corpus.test_degraded}) {
    preprocess_records(*split, provider, out.target_vocab, gamma);
  }

  FeatureStore store("");
  store.add(corpus.feature_file, corpus.features);
  out.train = encode_corpus(corpus.train, out.source_vocab, out.target_vocab, store);
  out.valid = encode_corpus(corpus.valid, out.source_vocab, out.target_vocab, store);
  out.test = encode_corpus(corpus.test, out.source_vocab, out.target_vocab, store);
  out.train_degraded = encode_corpus(corpus.train_degraded, out.source_vocab, out.target_vocab, store);
  out.valid_degraded = encode_corpus(corpus.valid_degraded, out.source_vocab, out.target_vocab, store);
  out.test_degraded = encode_corpus(corpus.test_degraded, out.source_vocab, out.target_vocab, store);

  std::size_t offset = 0;
  Scalar weighted = 0.0;
  std::size_t objects = 0;
  for (const auto* split : {&corpus.train, &corpus.valid, &corpus.test}) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < split->size(); ++i) n += corpus.ground_truth[offset + i].size();
    weighted += relevance_detection_accuracy(*split, corpus.ground_truth, offset) * static_cast<Scalar>(n);
    objects += n;
    offset += split->size();
  }
  out.relevance_accuracy = objects ? weighted / static_cast<Scalar>(objects) : 0.0;
  return out;
}

}  // namespace ovc
