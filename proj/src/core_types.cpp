#include "ovc/core_types.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace ovc {

namespace {

constexpr std::array<std::pair<EntityCategory, std::string_view>, 10> kCategoryNames{{
    {EntityCategory::people, "people"},
    {EntityCategory::scene, "scene"},
    {EntityCategory::clothing, "clothing"},
    {EntityCategory::instruments, "instruments"},
    {EntityCategory::animals, "animals"},
    {EntityCategory::bodyparts, "bodyparts"},
    {EntityCategory::vehicles, "vehicles"},
    {EntityCategory::other, "other"},
    {EntityCategory::notvisual, "notvisual"},
    {EntityCategory::color, "color"},
}};

const std::array<std::string, 4> kReservedTokens{"<pad>", "<s>", "</s>", "<unk>"};

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 14695981039346656037ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

}  // namespace

std::string_view category_name(EntityCategory category) {
  for (const auto& [value, name] : kCategoryNames) {
    if (value == category) return name;
  }
  throw Error("invalid entity category");
}

EntityCategory parse_category(std::string_view name) {
  for (const auto& [value, label] : kCategoryNames) {
    if (label == name) return value;
  }
  throw Error("unknown category label: " + std::string(name));
}

std::string category_tag(EntityCategory category) {
  return "[" + std::string(category_name(category)) + "]";
}

bool is_category_tag(std::string_view token) {
  if (token.size() < 3 || token.front() != '[' || token.back() != ']') return false;
  const auto inner = token.substr(1, token.size() - 2);
  return std::any_of(kCategoryNames.begin(), kCategoryNames.end(),
                     [&](const auto& entry) { return entry.second == inner; });
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (const auto& t : kReservedTokens) {
    index_.emplace(t, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(t);
    counts_.push_back(1);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus, int min_count) {
  if (corpus.empty()) throw Error("empty corpus");
  std::map<std::string, std::int64_t> counts;
  for (const auto& line : corpus) {
    for (const auto& tok : line) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [tok, count] : counts) {
    if (count < min_count) continue;
    if (std::find(kReservedTokens.begin(), kReservedTokens.end(), tok) != kReservedTokens.end()) continue;
    kept.emplace_back(tok, count);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary vocab;
  // every sentence ends with one end-of-sequence token
  vocab.counts_[kEos] = std::max<std::int64_t>(1, static_cast<std::int64_t>(corpus.size()));
  for (auto& [tok, count] : kept) {
    vocab.index_.emplace(tok, static_cast<TokenId>(vocab.tokens_.size()));
    vocab.tokens_.push_back(tok);
    vocab.counts_.push_back(count);
  }
  return vocab;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

std::int64_t Vocabulary::frequency(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= counts_.size()) return 1;
  return std::max<std::int64_t>(1, counts_[static_cast<std::size_t>(id)]);
}

std::int64_t Vocabulary::frequency(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? 1 : frequency(it->second);
}

TokenId Vocabulary::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(std::string(token), id);
  tokens_.emplace_back(token);
  counts_.push_back(1);
  return id;
}

std::string Vocabulary::serialize() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << counts_[i] << '\n';
  return out.str();
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  Vocabulary vocab;
  vocab.tokens_.clear();
  vocab.counts_.clear();
  vocab.index_.clear();
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw Error("vocabulary line " + std::to_string(line_no) + ": missing count");
    std::string tok = line.substr(0, tab);
    const std::int64_t count = std::stoll(line.substr(tab + 1));
    if (!vocab.index_.emplace(tok, static_cast<TokenId>(vocab.tokens_.size())).second) {
      throw Error("vocabulary line " + std::to_string(line_no) + ": duplicate token '" + tok + "'");
    }
    vocab.tokens_.push_back(std::move(tok));
    vocab.counts_.push_back(count);
  }
  if (vocab.tokens_.size() < kReservedTokens.size()) throw Error("vocabulary is missing reserved tokens");
  for (std::size_t i = 0; i < kReservedTokens.size(); ++i) {
    if (vocab.tokens_[i] != kReservedTokens[i]) throw Error("vocabulary reserved token mismatch at id " + std::to_string(i));
  }
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize(buffer.str());
}

std::uint64_t Vocabulary::fingerprint() const { return fnv1a(serialize()); }

std::vector<TokenId> encode_tokens(std::string_view sentence, const Vocabulary& vocab) {
  const auto tokens = tokenize(sentence);
  return encode_tokens(tokens, vocab);
}

std::vector<TokenId> encode_tokens(std::span<const std::string> tokens, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

std::string decode_tokens(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    if (id == Vocabulary::kEos) break;
    if (id == Vocabulary::kBos || id == Vocabulary::kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sentences and objects

void validate_spans(std::span<const EntitySpan> spans, std::size_t length) {
  std::vector<EntitySpan> sorted(spans.begin(), spans.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& s = sorted[i];
    if (s.start >= s.end || s.end > length) {
      throw Error("entity span [" + std::to_string(s.start) + "," + std::to_string(s.end) + ") out of bounds for length " +
                  std::to_string(length));
    }
    if (i > 0 && sorted[i - 1].end > s.start) throw Error("entity spans overlap");
  }
}

std::vector<bool> vision_related_flags(std::span<const EntitySpan> spans, std::size_t length) {
  std::vector<bool> flags(length, false);
  for (const auto& s : spans) {
    if (!is_visual(s.category)) continue;
    for (std::size_t i = s.start; i < s.end && i < length; ++i) flags[i] = true;
  }
  return flags;
}

SourceSentence SourceSentence::make(std::vector<TokenId> tokens, std::vector<EntitySpan> spans) {
  validate_spans(spans, tokens.size());
  SourceSentence s;
  s.vision_related = vision_related_flags(spans, tokens.size());
  s.tokens = std::move(tokens);
  s.entity_spans = std::move(spans);
  return s;
}

ObjectSet::ObjectSet(Matrix feats, std::vector<std::string> cats, std::vector<Scalar> confs)
    : features(std::move(feats)), categories(std::move(cats)), confidences(std::move(confs)) {
  masked.assign(size(), false);
  if (categories.size() != size() || confidences.size() != size()) {
    throw Error("object set: features, categories and confidences disagree on m");
  }
}

Matrix ObjectSet::effective_features() const {
  Matrix out = features;
  for (std::size_t i = 0; i < masked.size(); ++i) {
    if (masked[i]) out.row(static_cast<Eigen::Index>(i)).setZero();
  }
  return out;
}

ObjectSet ObjectSet::with_masked(std::span<const std::size_t> indices) const {
  ObjectSet copy = *this;
  for (std::size_t i : indices) {
    if (i >= copy.size()) throw Error("object index out of range: " + std::to_string(i));
    copy.masked[i] = true;
  }
  return copy;
}

void ObjectSet::validate(std::size_t max_objects) const {
  if (size() > max_objects) {
    throw Error("object set has " + std::to_string(size()) + " objects, limit is " + std::to_string(max_objects));
  }
  if (categories.size() != size() || confidences.size() != size() || masked.size() != size()) {
    throw Error("object set: inconsistent field lengths");
  }
  for (Scalar c : confidences) {
    if (!(c >= 0.0 && c <= 1.0)) throw Error("object confidence outside [0,1]");
  }
}

void ParallelExample::validate() const {
  if (target.empty() || target.back() != Vocabulary::kEos) {
    throw Error("example " + id + ": target must end with end-of-sequence");
  }
  validate_spans(source.entity_spans, source.tokens.size());
  if (!annotations.relevance.empty() && annotations.relevance.size() != objects.size()) {
    throw Error("example " + id + ": relevance length does not match object count");
  }
  if (!annotations.target_weights.empty() && annotations.target_weights.size() != target.size()) {
    throw Error("example " + id + ": target weight length does not match target length");
  }
}

}  // namespace ovc
