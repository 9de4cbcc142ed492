#include "ovc/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace ovc {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double unit_uniform(std::uint64_t& state) {
  // 53 random bits in (0, 1)
  return (static_cast<double>(splitmix64(state) >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

std::uint64_t hash_token(std::string_view token, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ULL ^ seed;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

EmbeddingProvider::EmbeddingProvider(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim <= 0) throw Error("embedding dimension must be positive");
}

EmbeddingProvider EmbeddingProvider::from_file(const std::filesystem::path& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read embeddings " + path.string());
  std::unordered_map<std::string, Vector> table;
  int dim = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(path.string() + ":" + std::to_string(line_no) + ": expected token<TAB>values");
    std::istringstream values(line.substr(tab + 1));
    std::vector<Scalar> v;
    Scalar x;
    while (values >> x) v.push_back(x);
    if (dim < 0) dim = static_cast<int>(v.size());
    if (v.empty() || static_cast<int>(v.size()) != dim) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": vector dimension mismatch");
    }
    table[line.substr(0, tab)] = Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (dim < 0) throw Error("embedding file " + path.string() + " is empty");
  EmbeddingProvider provider(dim, seed);
  provider.table_ = std::move(table);
  return provider;
}

Vector EmbeddingProvider::lookup(std::string_view token) const {
  if (auto it = table_.find(std::string(token)); it != table_.end()) return it->second;
  std::uint64_t state = hash_token(token, seed_);
  Vector v(dim_);
  for (int i = 0; i < dim_; i += 2) {
    // Box-Muller
    const double u1 = unit_uniform(state);
    const double u2 = unit_uniform(state);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    v(i) = radius * std::cos(2.0 * std::numbers::pi * u2);
    if (i + 1 < dim_) v(i + 1) = radius * std::sin(2.0 * std::numbers::pi * u2);
  }
  return v;
}

void EmbeddingProvider::set(const std::string& token, Vector v) {
  if (v.size() != dim_) throw Error("embedding for '" + token + "' has wrong dimension");
  table_[token] = std::move(v);
}

void write_embedding_file(const std::filesystem::path& path, const std::map<std::string, Vector>& vectors) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write embeddings " + path.string());
  out.precision(17);
  for (const auto& [token, v] : vectors) {
    out << token << '\t';
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << v(i);
    out << '\n';
  }
}

Matrix cosine_matrix(const std::vector<Vector>& rows, const std::vector<Vector>& cols) {
  const auto check = [](const std::vector<Vector>& vs, const char* side, Eigen::Index dim) {
    for (std::size_t i = 0; i < vs.size(); ++i) {
      if (vs[i].size() != dim) throw Error(std::string("cosine_matrix: ") + side + " vector " + std::to_string(i) + " has wrong dimension");
      if (!(vs[i].norm() > 0.0)) throw Error(std::string("cosine_matrix: ") + side + " vector " + std::to_string(i) + " has zero norm");
    }
  };
  const Eigen::Index dim = rows.empty() ? (cols.empty() ? 0 : cols[0].size()) : rows[0].size();
  check(rows, "row", dim);
  check(cols, "column", dim);

  Matrix s(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vector a = rows[i].normalized();
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const Scalar c = a.dot(cols[j].normalized());
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::clamp(c, -1.0, 1.0);
    }
  }
  return s;
}

std::vector<Scalar> object_sentence_similarity(const Matrix& similarity) {
  if (similarity.rows() == 0 || similarity.cols() == 0) throw Error("object_sentence_similarity: empty similarity matrix");
  std::vector<Scalar> oss(static_cast<std::size_t>(similarity.rows()));
  for (Eigen::Index i = 0; i < similarity.rows(); ++i) oss[static_cast<std::size_t>(i)] = similarity.row(i).maxCoeff();
  return oss;
}

std::vector<int> relevance_indicator(std::span<const Scalar> oss, Scalar gamma) {
  if (!std::isfinite(gamma)) throw Error("relevance_indicator: gamma must be finite");
  std::vector<int> d;
  d.reserve(oss.size());
  for (Scalar s : oss) d.push_back(s > gamma ? 1 : 0);
  return d;
}

Vector object_phrase_embedding(std::string_view phrase, const EmbeddingProvider& provider) {
  const auto words = tokenize(phrase);
  if (words.empty()) throw Error("object_phrase_embedding: empty category phrase");
  Vector sum = Vector::Zero(provider.dim());
  for (const auto& w : words) sum += provider.lookup(w);
  return sum / static_cast<Scalar>(words.size());
}

VisionWeights vision_weights(const Matrix& target_source_similarity, std::span<const Scalar> frequencies) {
  const auto r = static_cast<std::size_t>(target_source_similarity.rows());
  if (r == 0) throw Error("vision_weights: empty target");
  if (frequencies.size() != r) throw Error("vision_weights: frequency count does not match target length");

  VisionWeights out;
  out.similarity = target_source_similarity;
  out.tvs.resize(r);
  std::vector<Scalar> raw(r);
  Scalar total = 0.0;
  for (std::size_t j = 0; j < r; ++j) {
    if (!(frequencies[j] >= 1.0)) throw Error("vision_weights: frequencies must be >= 1");
    const auto row = static_cast<Eigen::Index>(j);
    out.tvs[j] = target_source_similarity.cols() ? target_source_similarity.row(row).maxCoeff() : 0.0;
    raw[j] = std::max<Scalar>(out.tvs[j], 0.0) / frequencies[j];
    total += raw[j];
  }
  out.weights.resize(r);
  for (std::size_t j = 0; j < r; ++j) out.weights[j] = total > 0.0 ? raw[j] / total : 1.0 / static_cast<Scalar>(r);
  return out;
}

RelevanceProfile relevance_profile(const CorpusRecord& record, const EmbeddingProvider& provider, Scalar gamma) {
  RelevanceProfile profile;
  profile.gamma = gamma;
  const auto& tokens = record.clean_tokens();
  if (record.object_categories.empty() || tokens.empty()) {
    profile.similarity = Matrix(static_cast<Eigen::Index>(record.object_categories.size()), static_cast<Eigen::Index>(tokens.size()));
    profile.oss.assign(record.object_categories.size(), -1.0);
    profile.relevant.assign(record.object_categories.size(), 0);
    return profile;
  }
  std::vector<Vector> objects;
  for (const auto& phrase : record.object_categories) objects.push_back(object_phrase_embedding(phrase, provider));
  std::vector<Vector> words;
  for (const auto& t : tokens) words.push_back(provider.lookup(t));
  profile.similarity = cosine_matrix(objects, words);
  profile.oss = object_sentence_similarity(profile.similarity);
  profile.relevant = relevance_indicator(profile.oss, gamma);
  return profile;
}

VisionWeights record_vision_weights(const CorpusRecord& record, const EmbeddingProvider& provider,
                                    const Vocabulary& target_vocab) {
  std::vector<std::string> target = record.target_tokens;
  target.push_back(target_vocab.token(Vocabulary::kEos));
  const auto& source = record.clean_tokens();
  const auto flags = vision_related_flags(record.clean_spans(), source.size());

  std::vector<Vector> rows;
  for (const auto& t : target) rows.push_back(provider.lookup(t));
  std::vector<Vector> cols;
  for (const auto& t : source) cols.push_back(provider.lookup(t));
  Matrix s_prime = source.empty() ? Matrix(static_cast<Eigen::Index>(target.size()), 0) : cosine_matrix(rows, cols);
  for (std::size_t k = 0; k < flags.size(); ++k) {
    if (!flags[k]) s_prime.col(static_cast<Eigen::Index>(k)).setZero();
  }
  std::vector<Scalar> freqs;
  for (const auto& t : target) freqs.push_back(static_cast<Scalar>(target_vocab.frequency(t)));
  return vision_weights(s_prime, freqs);
}

void preprocess_records(std::vector<CorpusRecord>& records, const EmbeddingProvider& provider,
                        const Vocabulary& target_vocab, Scalar gamma) {
  for (auto& r : records) {
    r.relevance = relevance_profile(r, provider, gamma);
    r.vision = record_vision_weights(r, provider, target_vocab);
  }
}

// ---------------------------------------------------------------------------

ColorLexicon ColorLexicon::standard() {
  return {{"black", "blue", "brown", "gray", "green", "grey", "orange", "pink", "purple", "red", "white", "yellow",
           "blond", "blonde", "tan", "gold", "silver", "beige", "maroon", "teal", "turquoise", "violet"}};
}

DegradedTokens degrade_tokens(std::span<const std::string> tokens, std::span<const EntitySpan> spans,
                              const ColorLexicon& colors) {
  validate_spans(spans, tokens.size());
  std::vector<EntitySpan> sorted(spans.begin(), spans.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.start < b.start; });

  DegradedTokens out;
  std::size_t next = 0;
  const auto copy_plain = [&](std::size_t until) {
    for (; next < until; ++next) {
      if (colors.contains(tokens[next])) {
        out.spans.push_back({out.tokens.size(), out.tokens.size() + 1, EntityCategory::color});
        out.tokens.push_back(category_tag(EntityCategory::color));
      } else {
        out.tokens.push_back(tokens[next]);
      }
    }
  };
  for (const auto& span : sorted) {
    copy_plain(span.start);
    if (is_visual(span.category)) {
      out.spans.push_back({out.tokens.size(), out.tokens.size() + 1, span.category});
      out.tokens.push_back(category_tag(span.category));
    } else {
      const std::size_t begin = out.tokens.size();
      for (std::size_t i = span.start; i < span.end; ++i) out.tokens.push_back(tokens[i]);
      out.spans.push_back({begin, out.tokens.size(), span.category});
    }
    next = span.end;
  }
  copy_plain(tokens.size());
  return out;
}

SourceSentence degrade_sentence(const SourceSentence& sentence, const Vocabulary& vocab, const ColorLexicon& colors) {
  std::vector<std::string> tokens;
  tokens.reserve(sentence.tokens.size());
  for (TokenId id : sentence.tokens) tokens.push_back(vocab.token(id));
  const auto degraded = degrade_tokens(tokens, sentence.entity_spans, colors);
  auto out = SourceSentence::make(encode_tokens(degraded.tokens, vocab), degraded.spans);
  out.degraded = true;
  return out;
}

CorpusRecord degrade_record(const CorpusRecord& record, const ColorLexicon& colors) {
  CorpusRecord out = record;
  const auto& tokens = record.clean_tokens();
  const auto& spans = record.clean_spans();
  auto degraded = degrade_tokens(tokens, spans, colors);
  out.original_tokens = tokens;
  out.original_spans = spans;
  out.source_tokens = std::move(degraded.tokens);
  out.entity_spans = std::move(degraded.spans);
  out.degraded = true;
  return out;
}

DegradationStats degradation_stats(const std::vector<CorpusRecord>& originals, const ColorLexicon& colors) {
  DegradationStats stats;
  for (const auto& r : originals) {
    const auto& tokens = r.clean_tokens();
    const auto& spans = r.clean_spans();
    stats.total_tokens += tokens.size();
    std::vector<bool> in_span(tokens.size(), false);
    for (const auto& s : spans) {
      for (std::size_t i = s.start; i < s.end; ++i) in_span[i] = true;
      if (!is_visual(s.category)) continue;
      stats.masked_tokens += s.end - s.start;
      stats.per_category[s.category] += s.end - s.start;
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!in_span[i] && colors.contains(tokens[i])) {
        ++stats.masked_tokens;
        ++stats.per_category[EntityCategory::color];
      }
    }
  }
  return stats;
}

}  // namespace ovc
