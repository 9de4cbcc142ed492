#include "ovc/corpus.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace ovc {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

json spans_to_json(const std::vector<EntitySpan>& spans) {
  json out = json::array();
  for (const auto& s : spans) {
    out.push_back({{"start", s.start}, {"end", s.end}, {"category", std::string(category_name(s.category))}});
  }
  return out;
}

std::vector<EntitySpan> spans_from_json(const json& j) {
  std::vector<EntitySpan> spans;
  for (const auto& item : j) {
    spans.push_back({item.at("start").get<std::size_t>(), item.at("end").get<std::size_t>(),
                     parse_category(item.at("category").get<std::string>())});
  }
  return spans;
}

json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw Error("ragged matrix in corpus record");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<Scalar>();
  }
  return m;
}

}  // namespace

std::string record_to_json_line(const CorpusRecord& r) {
  json j;
  j["id"] = r.id;
  j["source_tokens"] = r.source_tokens;
  j["target_tokens"] = r.target_tokens;
  j["entity_spans"] = spans_to_json(r.entity_spans);
  j["object_feature_ref"] = {{"path", r.features.path}, {"row_begin", r.features.row_begin}, {"row_end", r.features.row_end}};
  j["object_categories"] = r.object_categories;
  j["object_confidences"] = r.object_confidences;
  j["degraded"] = r.degraded;
  if (!r.original_tokens.empty()) {
    j["original_tokens"] = r.original_tokens;
    j["original_spans"] = spans_to_json(r.original_spans);
  }
  if (r.relevance) {
    j["relevance"] = {{"gamma", r.relevance->gamma},
                      {"S", matrix_to_json(r.relevance->similarity)},
                      {"OSS", r.relevance->oss},
                      {"d", r.relevance->relevant}};
  }
  if (r.vision) {
    j["vision"] = {{"S_prime", matrix_to_json(r.vision->similarity)}, {"TVS", r.vision->tvs}, {"q", r.vision->weights}};
  }
  return j.dump();
}

namespace {

CorpusRecord parse_record(const std::string& line) {
  const json j = json::parse(line);
  CorpusRecord r;
  r.id = j.value("id", std::string{});
  r.source_tokens = j.at("source_tokens").get<std::vector<std::string>>();
  r.target_tokens = j.at("target_tokens").get<std::vector<std::string>>();
  r.entity_spans = spans_from_json(j.value("entity_spans", json::array()));
  validate_spans(r.entity_spans, r.source_tokens.size());
  if (j.contains("object_feature_ref")) {
    const auto& ref = j["object_feature_ref"];
    r.features = {ref.at("path").get<std::string>(), ref.at("row_begin").get<std::size_t>(),
                  ref.at("row_end").get<std::size_t>()};
  }
  r.object_categories = j.value("object_categories", std::vector<std::string>{});
  r.object_confidences = j.value("object_confidences", std::vector<Scalar>{});
  r.degraded = j.value("degraded", false);
  r.original_tokens = j.value("original_tokens", std::vector<std::string>{});
  r.original_spans = spans_from_json(j.value("original_spans", json::array()));
  if (j.contains("relevance")) {
    const auto& rel = j["relevance"];
    r.relevance = RelevanceProfile{matrix_from_json(rel.at("S")), rel.at("OSS").get<std::vector<Scalar>>(),
                                   rel.at("d").get<std::vector<int>>(), rel.at("gamma").get<Scalar>()};
  }
  if (j.contains("vision")) {
    const auto& v = j["vision"];
    r.vision = VisionWeights{matrix_from_json(v.at("S_prime")), v.at("TVS").get<std::vector<Scalar>>(),
                             v.at("q").get<std::vector<Scalar>>()};
  }
  const std::size_t m = r.features.row_end - r.features.row_begin;
  if (r.features.row_end < r.features.row_begin || r.object_categories.size() != m || r.object_confidences.size() != m) {
    throw Error("record " + r.id + ": object fields disagree on object count");
  }
  return r;
}

}  // namespace

CorpusRecord record_from_json_line(const std::string& line) {
  try {
    return parse_record(line);
  } catch (const json::exception& e) {
    throw Error(std::string("bad corpus record: ") + e.what());
  }
}

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read corpus " + path.string());
  std::vector<CorpusRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json_line(line));
    } catch (const json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus " + path.string());
  for (const auto& r : records) out << record_to_json_line(r) << '\n';
}

Eigen::MatrixXf read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read feature file " + path.string());
  std::array<std::uint32_t, 2> header{};
  in.read(reinterpret_cast<char*>(header.data()), sizeof(header));
  if (!in) throw Error("feature file " + path.string() + ": truncated header");
  const auto rows = static_cast<Eigen::Index>(header[0]);
  const auto cols = static_cast<Eigen::Index>(header[1]);
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> data(rows, cols);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(sizeof(float) * rows * cols));
  if (!in) throw Error("feature file " + path.string() + ": truncated payload");
  return data;
}

void write_feature_file(const std::filesystem::path& path, const Eigen::MatrixXf& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write feature file " + path.string());
  const std::array<std::uint32_t, 2> header{static_cast<std::uint32_t>(rows.rows()),
                                            static_cast<std::uint32_t>(rows.cols())};
  out.write(reinterpret_cast<const char*>(header.data()), sizeof(header));
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = rows;
  out.write(reinterpret_cast<const char*>(row_major.data()),
            static_cast<std::streamsize>(sizeof(float) * row_major.size()));
}

Matrix FeatureStore::rows(const FeatureRef& ref) {
  if (ref.row_end == ref.row_begin) return Matrix(0, 0);
  const auto resolved = (base_dir_ / ref.path).lexically_normal().string();
  auto it = files_.find(resolved);
  if (it == files_.end()) it = files_.emplace(resolved, read_feature_file(resolved)).first;
  const auto& file = it->second;
  if (ref.row_end > static_cast<std::size_t>(file.rows())) {
    throw Error("feature rows [" + std::to_string(ref.row_begin) + "," + std::to_string(ref.row_end) +
                ") exceed " + resolved);
  }
  return file.middleRows(static_cast<Eigen::Index>(ref.row_begin), static_cast<Eigen::Index>(ref.row_end - ref.row_begin))
      .cast<Scalar>();
}

void FeatureStore::add(const std::string& path, Eigen::MatrixXf rows) {
  files_[(base_dir_ / path).lexically_normal().string()] = std::move(rows);
}

Dataset encode_corpus(const std::vector<CorpusRecord>& records, const Vocabulary& source_vocab,
                      const Vocabulary& target_vocab, FeatureStore& features) {
  Dataset data;
  data.source_vocab_fingerprint = source_vocab.fingerprint();
  data.target_vocab_fingerprint = target_vocab.fingerprint();
  data.examples.reserve(records.size());
  for (const auto& r : records) {
    ParallelExample ex;
    ex.id = r.id;
    ex.source = SourceSentence::make(encode_tokens(r.source_tokens, source_vocab), r.entity_spans);
    ex.source.degraded = r.degraded;
    ex.degraded = r.degraded;
    ex.target = encode_tokens(r.target_tokens, target_vocab);
    ex.target.push_back(Vocabulary::kEos);
    ex.objects = ObjectSet(features.rows(r.features), r.object_categories, r.object_confidences);
    if (r.relevance) ex.annotations.relevance = r.relevance->relevant;
    if (r.vision) ex.annotations.target_weights = r.vision->weights;
    ex.validate();
    data.examples.push_back(std::move(ex));
  }
  return data;
}

std::vector<std::vector<std::string>> source_token_lists(const std::vector<CorpusRecord>& records) {
  std::vector<std::vector<std::string>> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.source_tokens);
  return out;
}

std::vector<std::vector<std::string>> target_token_lists(const std::vector<CorpusRecord>& records) {
  std::vector<std::vector<std::string>> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.target_tokens);
  return out;
}

}  // namespace ovc
