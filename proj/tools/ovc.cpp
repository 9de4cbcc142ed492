#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <random>

#include <json.hpp>

#include "ovc/checkpoint.hpp"
#include "ovc/config.hpp"
#include "ovc/corpus.hpp"
#include "ovc/evaluation.hpp"
#include "ovc/gradcheck.hpp"
#include "ovc/preprocessing.hpp"
#include "ovc/synthetic.hpp"
#include "ovc/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ovc;

namespace {

constexpr const char* kVersion = "ovc 0.1.0";

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json manifest(const std::string& command, const json& config, const std::vector<fs::path>& inputs,
              const std::vector<fs::path>& outputs, const json& seeds) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["config_hash"] = content_hash(config.dump());
  m["config"] = config;
  m["seeds"] = seeds;
  json hashes = json::object();
  for (const auto& p : inputs) hashes[p.string()] = file_hash(p);
  m["dataset_hashes"] = hashes;
  json outs = json::array();
  for (const auto& p : outputs) outs.push_back(p.string());
  m["outputs"] = outs;
  return m;
}

Dataset load_dataset(const fs::path& path, const Vocabulary& src, const Vocabulary& tgt) {
  FeatureStore store(path.parent_path());
  return encode_corpus(read_corpus(path), src, tgt, store);
}

// --------------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

int run_synth(const SynthArgs& a) {
  SynthConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw Error("cannot read " + a.config);
    cfg = synth_config_from_json(json::parse(in));
  }
  if (a.seed) cfg.seed = *a.seed;
  const SynthCorpus corpus = generate_synthetic(cfg);
  write_synthetic(corpus, a.out_dir);
  const fs::path out(a.out_dir);
  write_json(out / "manifest.json", manifest("synth-gen", synth_config_to_json(cfg), {}, {out}, {{"seed", cfg.seed}}));
  std::cout << "wrote " << corpus.train.size() << "/" << corpus.valid.size() << "/" << corpus.test.size()
            << " examples to " << a.out_dir << '\n';
  return 0;
}

struct PreprocessArgs {
  std::string corpus;
  std::string train_corpus;
  std::string embeddings;
  std::string out;
  double gamma = kDefaultGamma;
  bool degrade = false;
  int dim = 128;
};

int run_preprocess(const PreprocessArgs& a) {
  if (!(a.gamma >= -1.0 && a.gamma <= 1.0)) throw Error("--gamma must lie in [-1, 1]");
  const fs::path in_path(a.corpus), out_path(a.out);
  std::vector<CorpusRecord> records = read_corpus(in_path);
  const auto targets = target_token_lists(a.train_corpus.empty() ? records : read_corpus(a.train_corpus));
  const Vocabulary target_vocab = Vocabulary::build(targets);
  const EmbeddingProvider provider = a.embeddings.empty() ? EmbeddingProvider(a.dim) : EmbeddingProvider::from_file(a.embeddings);
  if (a.degrade) {
    for (auto& r : records) r = degrade_record(r);
  }
  preprocess_records(records, provider, target_vocab, a.gamma);

  // Keep feature references valid from the output location.
  const fs::path out_dir = fs::absolute(out_path).parent_path();
  fs::create_directories(out_dir);
  for (auto& r : records) {
    if (r.features.path.empty()) continue;
    const fs::path feature = fs::absolute(in_path).parent_path() / r.features.path;
    r.features.path = fs::relative(feature, out_dir).generic_string();
  }
  write_corpus(out_path, records);

  std::size_t objects = 0, relevant = 0;
  for (const auto& r : records) {
    objects += r.relevance->relevant.size();
    for (int d : r.relevance->relevant) relevant += static_cast<std::size_t>(d);
  }
  std::vector<fs::path> inputs = {in_path};
  if (!a.embeddings.empty()) inputs.push_back(a.embeddings);
  const json cfg = {{"gamma", a.gamma}, {"degrade", a.degrade}, {"embedding_dim", provider.dim()}};
  write_json(fs::path(a.out).concat(".manifest.json"), manifest("preprocess", cfg, inputs, {out_path}, json::object()));
  std::cout << records.size() << " records, " << relevant << "/" << objects << " objects relevant at gamma " << a.gamma
            << '\n';
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string train;
  std::string degraded_train;
  std::string valid;
  std::string out_dir;
  std::string setting;
  std::optional<double> mix_ratio;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (!a.setting.empty()) cfg.train.setting = parse_setting(a.setting);
  if (a.mix_ratio) cfg.train.mix_ratio = *a.mix_ratio;
  if (a.seed) {
    cfg.train.seed = *a.seed;
    cfg.model.seed = *a.seed;
  }
  cfg.train.validate();
  if (cfg.train.setting == Setting::mixed && a.degraded_train.empty()) throw Error("mixed setting needs --degraded-train");

  const fs::path out(a.out_dir);
  fs::create_directories(out);
  const auto train_records = read_corpus(a.train);
  std::vector<CorpusRecord> degraded_records;
  if (cfg.train.setting == Setting::mixed) degraded_records = read_corpus(a.degraded_train);

  auto src_lists = source_token_lists(train_records);
  for (auto& l : source_token_lists(degraded_records)) src_lists.push_back(std::move(l));
  const Vocabulary src_vocab = Vocabulary::build(src_lists);
  const Vocabulary tgt_vocab = Vocabulary::build(target_token_lists(train_records));

  FeatureStore train_store(fs::path(a.train).parent_path());
  Dataset train_data = encode_corpus(train_records, src_vocab, tgt_vocab, train_store);
  if (cfg.train.setting == Setting::mixed) {
    FeatureStore deg_store(fs::path(a.degraded_train).parent_path());
    const Dataset degraded = encode_corpus(degraded_records, src_vocab, tgt_vocab, deg_store);
    std::mt19937_64 rng(cfg.train.seed);
    train_data = mix_datasets(train_data, degraded, cfg.train.mix_ratio, rng);
  }
  if (cfg.train.setting == Setting::degraded) check_degraded_sources(train_data, src_vocab);
  const Dataset valid_data = load_dataset(a.valid, src_vocab, tgt_vocab);

  cfg.model.source_vocab = static_cast<int>(src_vocab.size());
  cfg.model.target_vocab = static_cast<int>(tgt_vocab.size());
  if (!train_data.empty() && !train_data.examples[0].objects.empty()) {
    cfg.model.d_obj = static_cast<int>(train_data.examples[0].objects.dim());
  }
  cfg.model.validate();

  std::ofstream log(out / "train_log.jsonl");
  TrainHooks hooks;
  hooks.log_stream = &log;
  TrainResult result = train(cfg.train, cfg.model, train_data, valid_data, hooks);
  result.best.source_vocab = src_vocab;
  result.best.target_vocab = tgt_vocab;
  save_checkpoint(out / "best.ckpt", result.best);
  src_vocab.save(out / "source.vocab");
  tgt_vocab.save(out / "target.vocab");

  const OvcModel best = result.best.model();
  const LossOptions options = cfg.train.loss_options();
  const DecodeResult valid_decode = decode_dataset(best, valid_data, options);
  json metrics = {{"best_score", result.best_score},
                  {"metric", std::string(metric_name(cfg.train.metric))},
                  {"valid_bleu", valid_decode.bleu},
                  {"valid_nll", mean_token_nll(best, valid_data, options)},
                  {"steps", result.steps},
                  {"epochs", result.epochs},
                  {"evaluations", result.evaluations},
                  {"early_stopped", result.early_stopped},
                  {"train_examples", train_data.size()},
                  {"parameters", best.params().parameter_count()}};
  const MaskedTokenAccuracy acc = masked_token_accuracy(best, valid_data, options);
  if (acc.total > 0) metrics["valid_masked_accuracy"] = acc.accuracy();
  write_json(out / "metrics.json", metrics);

  std::vector<fs::path> inputs = {a.train, a.valid};
  if (!a.degraded_train.empty()) inputs.push_back(a.degraded_train);
  write_json(out / "manifest.json",
             manifest("train", run_config_to_json(cfg), inputs,
                      {out / "best.ckpt", out / "train_log.jsonl", out / "metrics.json"},
                      {{"train", cfg.train.seed}, {"model", cfg.model.seed}}));
  std::cout << "best " << metric_name(cfg.train.metric) << " " << result.best_score << " after " << result.steps
            << " steps; valid BLEU " << valid_decode.bleu << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
};

int run_evaluate(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Dataset data = load_dataset(a.data, ckpt.source_vocab, ckpt.target_vocab);
  const DecodeResult result = evaluate(ckpt, data);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_decodes(out / "decodes.tsv", data, result, ckpt.target_vocab);
  const OvcModel model = ckpt.model();
  const LossOptions options = checkpoint_loss_options(ckpt);
  json metrics = {{"bleu", result.bleu}, {"examples", data.size()}, {"nll", mean_token_nll(model, data, options)}};
  const MaskedTokenAccuracy acc = masked_token_accuracy(model, data, options);
  if (acc.total > 0) {
    metrics["masked_accuracy"] = acc.accuracy();
    metrics["masked_tokens"] = acc.total;
  }
  write_json(out / "metrics.json", metrics);
  write_json(out / "manifest.json", manifest("evaluate", {{"checkpoint", a.checkpoint}}, {a.checkpoint, a.data},
                                             {out / "decodes.tsv", out / "metrics.json"}, json::object()));
  std::cout << "BLEU " << result.bleu << " on " << data.size() << " examples\n";
  return 0;
}

struct DumpArgs {
  std::string checkpoint;
  std::string data;
  std::string example_id;
  std::string out;
};

int run_dump(const DumpArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const OvcModel model = ckpt.model();
  if (model.config().variant == Variant::text_only) throw Error("no object attention in this variant");
  const Dataset data = load_dataset(a.data, ckpt.source_vocab, ckpt.target_vocab);
  const auto it = std::find_if(data.examples.begin(), data.examples.end(),
                               [&](const ParallelExample& ex) { return ex.id == a.example_id; });
  if (it == data.examples.end()) throw Error("no example with id " + a.example_id);
  const ParallelExample example = prepare_example(*it, checkpoint_loss_options(ckpt));
  write_attention_dump(a.out, dump_attention(model, example, ckpt.source_vocab));
  std::cout << "wrote " << a.out << '\n';
  return 0;
}

int run_check_grad(std::uint64_t seed) {
  const GradCheckResult r = run_gradient_check(seed);
  std::cout << "max relative error " << r.max_relative_error << " (" << r.worst_parameter << ", " << r.checked
            << " entries)\n";
  return r.max_relative_error < 1e-3 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-level visual context translation: data generation, preprocessing, training, evaluation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-gen", "Generate the synthetic grounded-translation benchmark");
  synth_cmd->add_option("--config", synth.config, "Synthetic benchmark config (JSON)")->check(CLI::ExistingFile);
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Override the config seed");

  PreprocessArgs pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Add relevance indicators and vision weights to a corpus");
  pre_cmd->add_option("--corpus", pre.corpus, "Input corpus (JSONL)")->required()->check(CLI::ExistingFile);
  pre_cmd->add_option("--out", pre.out, "Output corpus (JSONL)")->required();
  pre_cmd->add_option("--embeddings", pre.embeddings, "Token vector file (token<TAB>values)")->check(CLI::ExistingFile);
  pre_cmd->add_option("--gamma", pre.gamma, "Relevance threshold")->capture_default_str();
  pre_cmd->add_option("--train-corpus", pre.train_corpus, "Corpus whose target frequencies debias the weights")
      ->check(CLI::ExistingFile);
  pre_cmd->add_flag("--degrade", pre.degrade, "Write the category-masked rendition of the corpus");
  pre_cmd->add_option("--dim", pre.dim, "Hash embedding dimension without --embeddings")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and keep the best validation checkpoint");
  train_cmd->add_option("--config", tr.config, "Run config (JSON)")->check(CLI::ExistingFile);
  train_cmd->add_option("--train", tr.train, "Training corpus")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--valid", tr.valid, "Validation corpus")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--degraded-train", tr.degraded_train, "Degraded corpus for the mixed setting")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--setting", tr.setting, "standard | degraded | mixed")
      ->check(CLI::IsMember({"standard", "degraded", "mixed"}));
  train_cmd->add_option("--mix-ratio", tr.mix_ratio, "Degraded examples per standard example (mixed setting)");
  train_cmd->add_option("--seed", tr.seed, "Override model and training seeds");
  train_cmd->add_option("--out-dir", tr.out_dir, "Output directory")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Greedy-decode a corpus and score it");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "Corpus to decode")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();

  DumpArgs dump;
  auto* dump_cmd = app.add_subcommand("dump-attention", "Export object-source attention for one example");
  dump_cmd->add_option("--checkpoint", dump.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--data", dump.data, "Corpus containing the example")->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--example-id", dump.example_id, "Example id")->required();
  dump_cmd->add_option("--out", dump.out, "Output file")->required();

  std::uint64_t grad_seed = 7;
  auto* grad_cmd = app.add_subcommand("check-grad", "Finite-difference gradient check on a micro model");
  grad_cmd->add_option("--seed", grad_seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*pre_cmd) return run_preprocess(pre);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_evaluate(ev);
    if (*dump_cmd) return run_dump(dump);
    if (*grad_cmd) return run_check_grad(grad_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
