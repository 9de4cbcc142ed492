#include "ovc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace ovc {

namespace {

using Ngram = std::vector<TokenId>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<TokenId>& tokens, int n) {
  std::map<Ngram, std::size_t> counts;
  const auto len = static_cast<std::ptrdiff_t>(tokens.size());
  for (std::ptrdiff_t i = 0; i + n <= len; ++i) ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

}  // namespace

Scalar corpus_bleu(const std::vector<std::vector<TokenId>>& references,
                   const std::vector<std::vector<TokenId>>& hypotheses, int max_n) {
  if (hypotheses.empty()) throw Error("corpus_bleu: empty hypothesis list");
  if (references.size() != hypotheses.size()) throw Error("corpus_bleu: reference and hypothesis counts differ");
  if (max_n < 1) throw Error("corpus_bleu: max_n must be >= 1");

  std::vector<std::size_t> matches(static_cast<std::size_t>(max_n), 0), totals(static_cast<std::size_t>(max_n), 0);
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    hyp_len += hypotheses[s].size();
    ref_len += references[s].size();
    for (int n = 1; n <= max_n; ++n) {
      const auto hyp = ngram_counts(hypotheses[s], n);
      const auto ref = ngram_counts(references[s], n);
      for (const auto& [gram, count] : hyp) {
        totals[static_cast<std::size_t>(n - 1)] += count;
        if (auto it = ref.find(gram); it != ref.end()) matches[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
      }
    }
  }
  if (hyp_len == 0 || matches[0] == 0) return 0.0;

  Scalar log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto m = static_cast<Scalar>(matches[static_cast<std::size_t>(n - 1)]);
    const auto t = static_cast<Scalar>(totals[static_cast<std::size_t>(n - 1)]);
    const Scalar p = (m == 0.0) ? 1.0 / (t + 1.0) : m / t;
    log_sum += std::log(p);
  }
  const Scalar bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - static_cast<Scalar>(ref_len) / static_cast<Scalar>(hyp_len));
  return 100.0 * bp * std::exp(log_sum / static_cast<Scalar>(max_n));
}

std::vector<TokenId> strip_eos(std::span<const TokenId> ids) {
  const auto end = std::find(ids.begin(), ids.end(), Vocabulary::kEos);
  return {ids.begin(), end};
}

DecodeResult decode_dataset(const OvcModel& model, const Dataset& data, const LossOptions& options) {
  if (data.empty()) throw Error("evaluate: empty dataset");
  DecodeResult result;
  std::vector<std::vector<TokenId>> refs;
  for (const auto& raw : data.examples) {
    const ParallelExample ex = prepare_example(raw, options);
    const std::size_t max_len = 2 * ex.source.size() + 10;
    result.hypotheses.push_back(strip_eos(model.greedy_decode(ex.source.tokens, ex.objects, max_len)));
    refs.push_back(strip_eos(ex.target));
  }
  result.bleu = corpus_bleu(refs, result.hypotheses);
  return result;
}

LossOptions checkpoint_loss_options(const Checkpoint& checkpoint) {
  LossOptions options;
  if (checkpoint.metadata.contains("train_config")) {
    options.hard_mask = checkpoint.metadata["train_config"].value("hard_mask", false);
  }
  return options;
}

DecodeResult evaluate(const Checkpoint& checkpoint, const Dataset& data) {
  if (data.source_vocab_fingerprint != checkpoint.source_vocab.fingerprint() ||
      data.target_vocab_fingerprint != checkpoint.target_vocab.fingerprint()) {
    throw Error("vocabulary mismatch between checkpoint and dataset");
  }
  return decode_dataset(checkpoint.model(), data, checkpoint_loss_options(checkpoint));
}

void write_decodes(const std::filesystem::path& path, const Dataset& data, const DecodeResult& result,
                   const Vocabulary& target_vocab) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.examples[i].id << '\t' << decode_tokens(result.hypotheses[i], target_vocab) << '\t'
        << decode_tokens(data.examples[i].target, target_vocab) << '\n';
  }
}

MaskedTokenAccuracy masked_token_accuracy(const OvcModel& model, const Dataset& data, const LossOptions& options) {
  MaskedTokenAccuracy acc;
  for (const auto& raw : data.examples) {
    if (!raw.degraded) continue;
    const ParallelExample ex = prepare_example(raw, options);
    std::vector<std::size_t> positions;
    for (const auto& span : ex.source.entity_spans) {
      if (is_visual(span.category) && span.start < ex.target.size()) positions.push_back(span.start);
    }
    if (positions.empty()) continue;
    const EncoderOutput enc = model.encode(ex.source.tokens, ex.objects);
    DecoderState state = model.decoder_init(enc.ssv);
    TokenId prev = Vocabulary::kBos;
    const std::size_t last = *std::max_element(positions.begin(), positions.end());
    for (std::size_t j = 0; j <= last; ++j) {
      StepOutput step = model.decode_step(prev, state, enc.vasr);
      if (std::find(positions.begin(), positions.end(), j) != positions.end()) {
        ++acc.total;
        if (argmax_lowest(step.logits) == ex.target[j]) ++acc.correct;
      }
      state = std::move(step.state);
      prev = ex.target[j];
    }
  }
  return acc;
}

Scalar mean_token_nll(const OvcModel& model, const Dataset& data, const LossOptions& options) {
  Scalar total = 0.0;
  std::size_t count = 0;
  for (const auto& raw : data.examples) {
    const auto nll = model.forward_teacher_forced(prepare_example(raw, options));
    total += std::accumulate(nll.begin(), nll.end(), 0.0);
    count += nll.size();
  }
  return count ? total / static_cast<Scalar>(count) : 0.0;
}

AttentionDump dump_attention(const OvcModel& model, const ParallelExample& example, const Vocabulary& source_vocab) {
  if (model.config().variant == Variant::text_only) throw Error("no object attention in this variant");
  const EncoderOutput enc = model.encode(example.source.tokens, example.objects);
  AttentionDump dump;
  dump.example_id = example.id;
  const ObjectSet visual = model.visual_input(example.objects);
  dump.object_categories = visual.categories;
  for (TokenId id : example.source.tokens) dump.source_tokens.push_back(source_vocab.token(id));
  dump.heads = enc.object_attention;
  dump.mean = Matrix::Zero(dump.heads.front().rows(), dump.heads.front().cols());
  for (const auto& h : dump.heads) dump.mean += h;
  dump.mean /= static_cast<Scalar>(dump.heads.size());
  return dump;
}

namespace {

void write_block(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "\t" : "") << m(i, j);
    out << '\n';
  }
}

std::vector<std::string> split_tabs(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, '\t')) parts.push_back(cur);
  return parts;
}

}  // namespace

void write_attention_dump(const std::filesystem::path& path, const AttentionDump& dump) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "# example\t" << dump.example_id << '\n';
  out << "# heads\t" << dump.heads.size() << '\n';
  out << "# source";
  for (const auto& t : dump.source_tokens) out << '\t' << t;
  out << "\n# objects";
  for (const auto& c : dump.object_categories) out << '\t' << c;
  out << '\n';
  for (std::size_t h = 0; h < dump.heads.size(); ++h) {
    out << "## head " << h << '\n';
    write_block(out, dump.heads[h]);
  }
  out << "## mean\n";
  write_block(out, dump.mean);
}

AttentionDump read_attention_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  AttentionDump dump;
  std::string line;
  std::vector<std::vector<Scalar>> rows;
  bool in_mean = false;
  const auto flush = [&]() {
    if (rows.empty() && dump.heads.empty() && !in_mean) return;
    Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    rows.clear();
    if (in_mean) dump.mean = m;
    else dump.heads.push_back(m);
  };
  bool started = false;
  while (std::getline(in, line)) {
    if (line.rfind("## ", 0) == 0) {
      if (started) flush();
      started = true;
      in_mean = line == "## mean";
      continue;
    }
    if (line.rfind("# ", 0) == 0) {
      auto parts = split_tabs(line.substr(2));
      if (parts.empty()) continue;
      const std::string key = parts[0];
      parts.erase(parts.begin());
      if (key == "example" && !parts.empty()) dump.example_id = parts[0];
      if (key == "source") dump.source_tokens = parts;
      if (key == "objects") dump.object_categories = parts;
      continue;
    }
    std::vector<Scalar> row;
    for (const auto& p : split_tabs(line)) row.push_back(std::stod(p));
    rows.push_back(std::move(row));
  }
  if (started) flush();
  return dump;
}

}  // namespace ovc
