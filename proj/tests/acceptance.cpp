// Acceptance suite: one pass/fail line per criterion.
//   ovc_acceptance [--criteria 1,2,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "ovc/evaluation.hpp"
#include "ovc/gradcheck.hpp"
#include "ovc/preprocessing.hpp"
#include "ovc/synthetic.hpp"
#include "ovc/training.hpp"

using namespace ovc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(Scalar v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

using Clock = std::chrono::steady_clock;
Scalar seconds_since(Clock::time_point t0) { return std::chrono::duration<Scalar>(Clock::now() - t0).count(); }

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, Scalar scale = 1.0) {
  std::normal_distribution<Scalar> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// 1 -------------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  Scalar worst = 0;
  std::string where;
  for (Variant v : {Variant::object_level, Variant::image_level, Variant::text_only}) {
    const GradCheckResult r = run_gradient_check(7, v);
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      where = std::string(variant_name(v)) + " " + r.worst_parameter;
    }
  }
  const Scalar secs = seconds_since(t0);
  return {worst < 1e-3 && secs < 30.0,
          "gradient fidelity: max relative error " + fmt(worst, 3) + " at " + where + " (< 1e-3), " + fmt(secs, 3) +
              " s (< 30 s)"};
}

// 2 -------------------------------------------------------------------------

Outcome formula_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_real_distribution<Scalar> unit(0.0, 1.0);
  std::map<std::string, Scalar> worst;
  const auto track = [&](const std::string& name, Scalar err) { worst[name] = std::max(worst[name], err); };

  for (int trial = 0; trial < 1000; ++trial) {
    const int m = size(rng), n = size(rng), r = size(rng), dim = size(rng) + 1;

    // OSS from raw vectors: cosine matrix then row max.
    std::vector<Vector> objects, words;
    for (int i = 0; i < m; ++i) objects.push_back(random_matrix(dim, 1, rng));
    for (int j = 0; j < n; ++j) words.push_back(random_matrix(dim, 1, rng));
    const std::vector<Scalar> oss = object_sentence_similarity(cosine_matrix(objects, words));
    for (int i = 0; i < m; ++i) {
      Scalar best = -2;
      for (int j = 0; j < n; ++j) {
        Scalar dot = 0, na = 0, nb = 0;
        for (int k = 0; k < dim; ++k) {
          dot += objects[i](k) * words[j](k);
          na += objects[i](k) * objects[i](k);
          nb += words[j](k) * words[j](k);
        }
        best = std::max(best, dot / (std::sqrt(na) * std::sqrt(nb)));
      }
      track("object_sentence_similarity", std::abs(best - oss[i]));
    }

    // Relevance indicator, strict threshold.
    const Scalar gamma = unit(rng) * 2 - 1;
    std::vector<Scalar> scores(static_cast<std::size_t>(m));
    for (auto& s : scores) s = unit(rng) < 0.2 ? gamma : unit(rng) * 2 - 1;
    const std::vector<int> d = relevance_indicator(scores, gamma);
    for (int i = 0; i < m; ++i) track("relevance_indicator", d[i] == (scores[i] > gamma ? 1 : 0) ? 0.0 : 1.0);

    // Vision weights.
    const Matrix sp = random_matrix(r, n, rng, 0.5);
    std::vector<Scalar> freq(static_cast<std::size_t>(r));
    for (auto& f : freq) f = 1.0 + std::floor(unit(rng) * 50);
    const VisionWeights vw = vision_weights(sp, freq);
    std::vector<Scalar> raw(static_cast<std::size_t>(r));
    Scalar total = 0;
    for (int j = 0; j < r; ++j) {
      Scalar tvs = -1e300;
      for (int k = 0; k < n; ++k) tvs = std::max(tvs, sp(j, k));
      track("vision_weights", std::abs(tvs - vw.tvs[j]));
      raw[j] = std::max(tvs, 0.0) / freq[j];
      total += raw[j];
    }
    for (int j = 0; j < r; ++j) {
      const Scalar q = total > 0 ? raw[j] / total : 1.0 / r;
      track("vision_weights", std::abs(q - vw.weights[j]));
    }

    // Loss formulas.
    const Scalar lo = unit(rng) * 5, lr = unit(rng) * 5, lir = unit(rng) * 5;
    const Scalar lm = -(lr - lo) + (lir - lo) * (lir - lo);
    track("object_masking_loss", std::abs(object_masking_loss(lo, lr, lir) - lm));
    std::vector<Scalar> nll(static_cast<std::size_t>(r)), q(static_cast<std::size_t>(r));
    Scalar lv = 0;
    for (int j = 0; j < r; ++j) {
      nll[j] = unit(rng) * 4;
      q[j] = unit(rng);
      lv += q[j] * nll[j];
    }
    track("vision_weighted_loss", std::abs(vision_weighted_loss(nll, q) - lv));
    const Scalar a = unit(rng), b = unit(rng);
    track("total_loss", std::abs(total_loss(lo, lr, lir, lm, lv, a, b) - ((lo + lr + lir) / 3 + a * lm + b * lv)));
  }
  const Scalar secs = seconds_since(t0);
  bool pass = secs < 10.0;
  std::string detail = "formula oracles over 1000 random inputs:";
  for (const auto& [name, err] : worst) {
    const Scalar tol = name == "object_sentence_similarity" ? 1e-6 : 1e-9;
    pass = pass && err <= tol;
    detail += " " + name + " " + fmt(err, 2);
  }
  return {pass, detail + ", " + fmt(secs, 3) + " s (< 10 s)"};
}

// 3 -------------------------------------------------------------------------

Outcome attention_properties() {
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<int> small(1, 6);
  Scalar row_err = 0, perm_err = 0;
  bool masked_exact = true;
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig c;
    c.n_heads = 1 + trial % 3;
    c.d_hidden = 2 * c.n_heads * (1 + trial % 2);
    c.d_word = small(rng) + 1;
    c.d_obj = small(rng) + 1;
    c.source_vocab = 10;
    c.target_vocab = 10;
    c.residual = trial % 2 == 0;
    c.seed = static_cast<std::uint64_t>(trial) + 1;
    const OvcModel model(c);
    const int n = small(rng), m = small(rng) + 1;
    std::vector<TokenId> src(static_cast<std::size_t>(n));
    std::uniform_int_distribution<TokenId> tok(Vocabulary::kNumReserved, 9);
    for (auto& t : src) t = tok(rng);
    const ObjectSet objects(random_matrix(m, c.d_obj, rng), std::vector<std::string>(m, "x"),
                            std::vector<Scalar>(m, 1.0));
    const EncoderOutput enc = model.encode(src, objects);
    for (const auto& head : enc.object_attention) {
      row_err = std::max(row_err, (head.rowwise().sum().array() - 1.0).abs().maxCoeff());
    }
    DecoderState state = model.decoder_init(enc.ssv);
    TokenId prev = Vocabulary::kBos;
    for (int step = 0; step < 3; ++step) {
      const StepOutput out = model.decode_step(prev, state, enc.vasr);
      for (const auto& head : out.source_attention) {
        row_err = std::max(row_err, (head.rowwise().sum().array() - 1.0).abs().maxCoeff());
      }
      state = out.state;
      prev = tok(rng);
    }

    std::vector<int> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix permuted(m, c.d_obj);
    for (int i = 0; i < m; ++i) permuted.row(i) = objects.features.row(perm[i]);
    const EncoderOutput enc_p =
        model.encode(src, ObjectSet(permuted, std::vector<std::string>(m, "x"), std::vector<Scalar>(m, 1.0)));
    perm_err = std::max(perm_err, (enc_p.vasr - enc.vasr).cwiseAbs().maxCoeff());
    perm_err = std::max(perm_err, (enc_p.ssv - enc.ssv).cwiseAbs().maxCoeff());

    const std::size_t k = static_cast<std::size_t>(trial % m);
    const std::vector<std::size_t> masked_idx = {k};
    Matrix zeroed = objects.features;
    zeroed.row(static_cast<Eigen::Index>(k)).setZero();
    const EncoderOutput enc_m = model.encode(src, objects.with_masked(masked_idx));
    const EncoderOutput enc_z =
        model.encode(src, ObjectSet(zeroed, std::vector<std::string>(m, "x"), std::vector<Scalar>(m, 1.0)));
    masked_exact = masked_exact && enc_m.vasr == enc_z.vasr && enc_m.ssv == enc_z.ssv;
  }
  return {row_err <= 1e-6 && perm_err <= 1e-6 && masked_exact,
          "attention properties over 100 random states: max row-sum error " + fmt(row_err, 2) +
              ", permutation error " + fmt(perm_err, 2) + ", masked == zeroed " + (masked_exact ? "exact" : "NOT exact")};
}

// 4 -------------------------------------------------------------------------

SynthConfig small_synth(std::uint64_t seed) {
  SynthConfig s;
  s.n_examples = 50;
  s.n_valid = 10;
  s.n_test = 10;
  s.seed = seed;
  return s;
}

Outcome memorization() {
  const auto t0 = Clock::now();
  SynthCorpus corpus = generate_synthetic(small_synth(4));
  SynthDatasets data = prepare_synthetic(corpus);
  Dataset one = data.train;
  one.examples.resize(1);

  ModelConfig mc;
  mc.d_word = 16;
  mc.d_hidden = 32;
  mc.n_heads = 2;
  mc.d_obj = static_cast<int>(one.examples[0].objects.features.cols());
  mc.source_vocab = static_cast<int>(data.source_vocab.size());
  mc.target_vocab = static_cast<int>(data.target_vocab.size());
  mc.seed = 4;
  TrainConfig tc;
  tc.batch_size = 1;
  tc.base_lr = 1e-2;
  tc.lr_policy = LrPolicy::constant;
  tc.max_steps = 2000;
  tc.max_epochs = 2000;
  tc.eval_every = 50;
  tc.patience = 1000;
  tc.seed = 4;
  std::size_t reached_at = 0;
  TrainHooks hooks;
  hooks.validation_score = [&](const OvcModel& model, std::size_t index) {
    const Scalar nll = mean_token_nll(model, one);
    if (reached_at == 0 && nll < 0.01 && decode_dataset(model, one).bleu == 100.0) reached_at = (index + 1) * 50;
    return -nll;
  };
  const TrainResult r = train(tc, mc, one, one, hooks);
  const OvcModel model = r.best.model();
  const Scalar nll = mean_token_nll(model, one);
  const DecodeResult dec = decode_dataset(model, one);
  const bool exact = dec.hypotheses[0] == strip_eos(one.examples[0].target);
  const Scalar secs = seconds_since(t0);
  return {nll < 0.01 && dec.bleu == 100.0 && exact && reached_at > 0 && secs < 120.0,
          "memorization: " + fmt(nll, 3) + " nats/token (< 0.01), BLEU " + fmt(dec.bleu, 5) +
              (exact ? ", exact target" : ", target differs") + ", first reached at step " +
              (reached_at ? std::to_string(reached_at) : std::string("never")) + " (<= 2000), " + fmt(secs, 3) +
              " s (< 120 s)"};
}

// 5 -------------------------------------------------------------------------

struct GroundingBenchmark {
  SynthConfig synth;
  int d_word = 16;
  int d_hidden = 32;
  int n_heads = 2;
  std::size_t batch_size = 16;
  int epochs = 30;
  Scalar lr = 3e-3;
  LrPolicy policy = LrPolicy::halving;
  Scalar alpha = 0.1;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

GroundingBenchmark grounding_benchmark() {
  GroundingBenchmark b;
  b.synth.n_examples = 5000;
  b.synth.distractors = 2;
  b.synth.noise_std = 0.2;
  b.synth.label_noise_std = 0.35;
  b.synth.salience = 0.4;
  b.synth.same_category_distractors = 1.0;
  return b;
}

Scalar run_grounding(const GroundingBenchmark& b, const SynthDatasets& data, std::uint64_t seed,
                     const std::string& system) {
  ModelConfig mc;
  mc.d_word = b.d_word;
  mc.d_hidden = b.d_hidden;
  mc.n_heads = b.n_heads;
  mc.d_obj = b.synth.d_obj;
  mc.source_vocab = static_cast<int>(data.source_vocab.size());
  mc.target_vocab = static_cast<int>(data.target_vocab.size());
  mc.seed = seed;
  mc.residual = system != "text";
  TrainConfig tc;
  tc.max_epochs = b.epochs;
  tc.batch_size = b.batch_size;
  tc.base_lr = b.lr;
  tc.lr_policy = b.policy;
  tc.setting = Setting::degraded;
  tc.metric = SelectionMetric::masked_accuracy;
  tc.seed = seed;
  tc.beta = 0;
  tc.masking_loss = false;
  if (system == "text") mc.variant = Variant::text_only;
  if (system == "image") mc.variant = Variant::image_level;
  if (system == "object+HM") tc.hard_mask = true;
  if (system == "object+L_m") {
    tc.masking_loss = true;
    tc.alpha = b.alpha;
  }
  const TrainResult r = train(tc, mc, data.train_degraded, data.valid_degraded);
  return 100.0 * masked_token_accuracy(r.best.model(), data.test_degraded, tc.loss_options()).accuracy();
}

Outcome grounding_trend() {
  const auto t0 = Clock::now();
  const GroundingBenchmark b = grounding_benchmark();
  const std::vector<std::string> systems = {"text", "image", "object", "object+HM", "object+L_m"};
  std::map<std::string, Scalar> mean;
  Scalar relevance = 0;
  for (std::uint64_t seed : b.seeds) {
    SynthConfig s = b.synth;
    s.seed = seed;
    SynthCorpus corpus = generate_synthetic(s);
    const SynthDatasets data = prepare_synthetic(corpus);
    relevance += data.relevance_accuracy / static_cast<Scalar>(b.seeds.size());
    for (const auto& system : systems) {
      const Scalar acc = run_grounding(b, data, seed, system);
      std::cout << "  seed " << seed << " " << system << " masked accuracy " << fmt(acc) << std::endl;
      mean[system] += acc / static_cast<Scalar>(b.seeds.size());
    }
  }
  const Scalar secs = seconds_since(t0);
  const bool order = mean["object+L_m"] > mean["object+HM"] && mean["object+HM"] > mean["object"];
  const bool floor = mean["object"] > mean["text"] + 10.0;
  const bool image = mean["image"] > mean["text"];
  std::string detail = "grounding trend (relevance detection " + fmt(100 * relevance, 3) + "%):";
  for (const auto& s : systems) detail += " " + s + " " + fmt(mean[s]);
  detail += "; need L_m > HM > object, object > text + 10, image > text; " + fmt(secs / 60, 3) + " min (< 60 min)";
  return {order && floor && image && secs < 3600.0, detail};
}

// 6 -------------------------------------------------------------------------

Outcome mixed_setting() {
  const auto t0 = Clock::now();
  const std::vector<Scalar> ratios = {0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0};
  bool counts = mixed_degraded_count(29000, 0.4) == 11600;
  SynthConfig s;
  s.seed = 6;
  SynthCorpus corpus = generate_synthetic(s);
  const SynthDatasets data = prepare_synthetic(corpus);
  const std::size_t n = data.train.size();
  bool trained = true;
  std::string failure;
  for (Scalar ratio : ratios) {
    const std::size_t k = static_cast<std::size_t>(std::floor(ratio * static_cast<Scalar>(n) + 1e-9));
    std::mt19937_64 rng(static_cast<std::uint64_t>(ratio * 100) + 1);
    const Dataset mixed = mix_datasets(data.train, data.train_degraded, ratio, rng);
    std::size_t degraded = 0;
    std::set<std::string> standard_ids;
    for (const auto& ex : mixed.examples) {
      if (ex.degraded) ++degraded;
      else standard_ids.insert(ex.id);
    }
    counts = counts && mixed_degraded_count(n, ratio) == k && mixed.size() == n + k && degraded == k &&
             standard_ids.size() == n;
    try {
      ModelConfig mc;
      mc.d_word = 8;
      mc.d_hidden = 16;
      mc.n_heads = 2;
      mc.d_obj = s.d_obj;
      mc.source_vocab = static_cast<int>(data.source_vocab.size());
      mc.target_vocab = static_cast<int>(data.target_vocab.size());
      TrainConfig tc;
      tc.setting = Setting::mixed;
      tc.mix_ratio = ratio;
      tc.batch_size = 32;
      tc.max_steps = 20;
      tc.metric = SelectionMetric::neg_loss;
      Dataset valid = data.valid;
      valid.examples.resize(50);
      const TrainResult r = train(tc, mc, mixed, valid);
      trained = trained && r.steps == 20 && std::isfinite(r.final_train_loss);
    } catch (const std::exception& e) {
      trained = false;
      failure = e.what();
    }
  }
  return {counts && trained, "mixed setting: composition counts " + std::string(counts ? "exact" : "WRONG") +
                                 " for ratios 0..1, training " +
                                 (trained ? "ran at every ratio" : "failed: " + failure) + ", " +
                                 fmt(seconds_since(t0), 3) + " s"};
}

// 7 -------------------------------------------------------------------------

Outcome degradation_rate() {
  std::mt19937_64 rng(7);
  const std::vector<std::string> fillers = {"a", "man", "is", "on", "the", "street", "with", "his", "and", "near"};
  const EntityCategory visual[] = {EntityCategory::people, EntityCategory::clothing, EntityCategory::animals,
                                   EntityCategory::scene, EntityCategory::vehicles};
  std::vector<CorpusRecord> records;
  for (int e = 0; e < 500; ++e) {
    CorpusRecord r;
    r.id = std::to_string(e);
    for (int i = 0; i < 10; ++i) r.source_tokens.push_back(fillers[std::uniform_int_distribution<int>(0, 9)(rng)]);
    // Two visual tokens per ten: one two-token span or two single-token spans.
    std::vector<std::size_t> pos(10);
    std::iota(pos.begin(), pos.end(), 0);
    if (e % 2 == 0) {
      const std::size_t start = std::uniform_int_distribution<std::size_t>(0, 8)(rng);
      r.entity_spans.push_back({start, start + 2, visual[e % 5]});
    } else {
      std::shuffle(pos.begin(), pos.end(), rng);
      std::sort(pos.begin(), pos.begin() + 2);
      r.entity_spans.push_back({pos[0], pos[0] + 1, visual[e % 5]});
      r.entity_spans.push_back({pos[1], pos[1] + 1, visual[(e + 1) % 5]});
    }
    records.push_back(r);
  }
  const DegradationStats stats = degradation_stats(records);
  const Scalar f = stats.masked_fraction();
  return {std::abs(f - 0.20) <= 0.01, "degradation statistics: masked fraction " + fmt(f) + " on a 20% corpus (0.20 +- 0.01)"};
}

// 8 -------------------------------------------------------------------------

Outcome bleu_correctness() {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<TokenId> tok(4, 30);
  std::uniform_int_distribution<int> len(1, 15);
  std::vector<std::vector<TokenId>> refs(40), hyps(40);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (int k = len(rng); k > 0; --k) refs[i].push_back(tok(rng));
    hyps[i] = refs[i];
    if (i % 3 == 0) hyps[i].resize(hyps[i].size() / 2 + 1);
    if (i % 4 == 1) hyps[i][0] = tok(rng);
  }
  const bool identical = corpus_bleu(refs, refs) == 100.0;

  // Hypothesis c = 8 tokens, reference r = 12: all n-gram precisions are 1,
  // BP = exp(1 - 12/8).
  const std::vector<std::vector<TokenId>> hr = {{4, 5, 6, 7, 8, 9}, {4, 5, 6, 7, 8, 9}};
  const std::vector<std::vector<TokenId>> hh = {{4, 5, 6, 7}, {4, 5, 6, 7}};
  const Scalar hand = corpus_bleu(hr, hh);
  const bool brevity = std::abs(hand - 100.0 * std::exp(-0.5)) <= 1e-6;

  const Scalar base = corpus_bleu(refs, hyps);
  bool invariant = true;
  std::vector<std::size_t> order(refs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<TokenId>> r2, h2;
    for (std::size_t i : order) {
      r2.push_back(refs[i]);
      h2.push_back(hyps[i]);
    }
    invariant = invariant && corpus_bleu(r2, h2) == base;
  }
  return {identical && brevity && invariant,
          "BLEU: refs vs refs " + std::string(identical ? "100" : "not 100") + ", brevity example " + fmt(hand, 17) +
              " (expected " + fmt(100.0 * std::exp(-0.5), 17) + "), order permutations " +
              (invariant ? "exact" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OVC acceptance suite"};
  std::vector<int> criteria = {1, 2, 3, 4, 5, 6, 7, 8};
  app.add_option("--criteria", criteria, "Criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::map<int, std::function<Outcome()>> all = {{1, gradient_fidelity}, {2, formula_oracles},
                                                       {3, attention_properties}, {4, memorization},
                                                       {5, grounding_trend}, {6, mixed_setting},
                                                       {7, degradation_rate}, {8, bleu_correctness}};
  int failures = 0;
  for (int c : criteria) {
    const auto it = all.find(c);
    if (it == all.end()) {
      std::cerr << "unknown criterion " << c << "\n";
      return 2;
    }
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << c << ": " << o.detail << std::endl;
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
