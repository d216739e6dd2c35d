// sctkg: sentiment-controllable topic-to-essay generation with a
// topic-knowledge-graph decoder. Subcommands cover the whole pipeline:
// synth-data -> build-kg -> train -> generate -> evaluate.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "sctkg/config.hpp"
#include "sctkg/corpus.hpp"
#include "sctkg/error.hpp"
#include "sctkg/generator.hpp"
#include "sctkg/kg.hpp"
#include "sctkg/metrics.hpp"
#include "sctkg/training.hpp"

namespace fs = std::filesystem;
using namespace sctkg;

namespace {

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<Sentiment> parse_sentiments(const std::string& text) {
  std::vector<Sentiment> out;
  for (const std::string& s : split_csv(text)) {
    const auto parsed = sentiment_from_string(s);
    if (!parsed) {
      throw CLI::ValidationError("--sentiments",
                                 "unknown sentiment label '" + s + "' (pos|neg|neu)");
    }
    out.push_back(*parsed);
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
  return master * 1000003ull + stream;
}

void label_missing_sentiments(std::vector<EssayRecord>& records, const Lexicon& lexicon) {
  for (EssayRecord& rec : records) {
    if (rec.sentiments.empty()) {
      rec.sentiments.reserve(rec.sentences.size());
      for (const auto& sentence : rec.sentences) {
        rec.sentiments.push_back(lexicon_sentiment(sentence, lexicon));
      }
    }
  }
}

void write_triples_tsv(const std::vector<Triple>& triples, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write triples: " + path);
  for (const Triple& t : triples) {
    out << t.head << "\t" << t.relation << "\t" << t.tail << "\t1.0\n";
  }
}

struct TrainArtifacts {
  fs::path generator_ckpt;
  fs::path discriminator_ckpt;
  fs::path vocab_file;
  fs::path labels_file;
  fs::path config_file;
  fs::path log_file;

  explicit TrainArtifacts(const fs::path& dir)
      : generator_ckpt(dir / "generator.ckpt"),
        discriminator_ckpt(dir / "discriminator.ckpt"),
        vocab_file(dir / "vocab.txt"),
        labels_file(dir / "labels.txt"),
        config_file(dir / "config.txt"),
        log_file(dir / "train_log.jsonl") {}
};

int cmd_synth_data(const RunConfig& config, const std::string& out_path, int n_essays,
                   std::uint64_t seed, const std::string& topics_csv,
                   const std::string& lexicon_path, const std::string& kg_out) {
  (void)config;
  const fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());

  Lexicon lexicon;
  fs::path lex_path = lexicon_path.empty() ? out.parent_path() / "lexicon.tsv"
                                           : fs::path(lexicon_path);
  if (fs::exists(lex_path)) {
    lexicon = Lexicon::load(lex_path.string());
  } else {
    lexicon = Lexicon::builtin();
    if (lex_path.has_parent_path()) fs::create_directories(lex_path.parent_path());
    lexicon.save(lex_path.string());
  }

  const std::vector<std::string> pool =
      topics_csv.empty() ? default_topic_pool() : split_csv(topics_csv);
  const std::vector<EssayRecord> records =
      synthesize_toy_corpus(seed, n_essays, pool, lexicon);
  save_corpus(records, out.string());

  fs::path kg_path = kg_out.empty() ? out.parent_path() / "triples.tsv" : fs::path(kg_out);
  if (kg_path.has_parent_path()) fs::create_directories(kg_path.parent_path());
  write_triples_tsv(toy_knowledge_triples(pool), kg_path.string());

  long sentences = 0;
  for (const auto& r : records) sentences += static_cast<long>(r.sentences.size());
  std::cerr << "wrote " << records.size() << " essays (" << sentences << " sentences) to "
            << out << "\n"
            << "lexicon: " << lex_path << "\n"
            << "triples: " << kg_path << "\n";
  return 0;
}

int cmd_build_kg(const RunConfig& config, const std::string& triples_path,
                 const std::string& out_path) {
  const TripleStore store = load_triples(triples_path, config.kg_min_weight);
  std::set<std::string> concepts;
  for (const Triple& t : store.triples()) {
    concepts.insert(t.head);
    concepts.insert(t.tail);
  }
  std::cerr << "triples kept: " << store.triples().size() << "\n"
            << "relations:    " << store.relation_vocab().size() << "\n"
            << "concepts:     " << concepts.size() << "\n";
  if (!out_path.empty()) {
    write_triples_tsv(store.triples(), out_path);
    std::cerr << "filtered triples written to " << out_path << "\n";
  }
  return 0;
}

int cmd_train(RunConfig config, const std::string& corpus_path,
              const std::string& triples_path, const std::string& lexicon_path,
              const std::string& out_dir, const std::string& stage, bool ablate_enc,
              bool ablate_dec) {
  fs::create_directories(out_dir);
  const TrainArtifacts paths{fs::path(out_dir)};

  const bool run1 = stage == "1" || stage == "both";
  const bool run2 = stage == "2" || stage == "both";
  if (!run1 && !run2) {
    std::cerr << "error: --stage must be 1, 2 or both\n";
    return 1;
  }
  if (run2 && !run1) {
    if (!fs::exists(paths.generator_ckpt) || !fs::exists(paths.vocab_file)) {
      std::cerr << "error: --stage 2 needs a completed stage-1 run in " << out_dir
                << " (missing " << paths.generator_ckpt.filename() << " or "
                << paths.vocab_file.filename() << "); run --stage 1 first\n";
      return 1;
    }
  }

  std::vector<EssayRecord> records = load_corpus(corpus_path);
  if (records.empty()) {
    std::cerr << "error: corpus is empty: " << corpus_path << "\n";
    return 1;
  }
  const Lexicon lexicon =
      lexicon_path.empty() ? Lexicon::builtin() : Lexicon::load(lexicon_path);
  label_missing_sentiments(records, lexicon);

  const TripleStore store = load_triples(triples_path, config.kg_min_weight);

  Vocabulary vocab = run1 ? build_vocab(records, config.vocab_cap)
                          : Vocabulary::load(paths.vocab_file.string());
  config.dims.vocab = vocab.size();

  AblationFlags flags;
  flags.enc_sentiment = !ablate_enc;
  flags.dec_sentiment = !ablate_dec;

  GeneratorModel model(config.dims, static_cast<int>(store.relation_vocab().size()),
                       flags, config.seed);
  const std::uint32_t gen_hash = fnv1a32(model.signature());

  std::ofstream log(paths.log_file,
                    run2 && !run1 ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write log: " + paths.log_file.string());

  Stage1Config s1 = config.stage1;
  s1.seed = mix_seed(config.seed, s1.seed);
  Stage2Config s2 = config.stage2;
  s2.seed = mix_seed(config.seed, s2.seed);
  s2.max_len = config.max_len;

  TrainState state;
  if (run1) {
    const std::vector<TrainingExample> examples = make_examples(records);
    Stage1RunOptions opts;
    opts.max_per_topic = config.max_per_topic;
    opts.log = &log;
    const long steps = run_stage1(model, examples, store, vocab, s1, opts, state);
    vocab.save(paths.vocab_file.string());
    model.params().save(paths.generator_ckpt.string(), gen_hash);
    std::cerr << "stage 1 done: " << steps << " steps, checkpoint "
              << paths.generator_ckpt << "\n";
  } else {
    model.params().load(paths.generator_ckpt.string(), gen_hash);
  }

  if (run2) {
    const TopicLabels labels = TopicLabels::from_corpus(records, config.topic_label_cap);
    if (labels.count() == 0) {
      std::cerr << "error: no topics available for the discriminator\n";
      return 1;
    }
    DiscriminatorConfig dconf;
    dconf.vocab = vocab.size();
    dconf.d_w = config.dims.d_w;
    dconf.n_filters = config.disc_filters;
    dconf.window = config.disc_window;
    dconf.topic_count = labels.count();
    dconf.fake_class = true;
    Discriminator disc(dconf, mix_seed(config.seed, 77));

    Stage2RunOptions opts;
    opts.max_per_topic = config.max_per_topic;
    opts.log = &log;
    run_stage2(model, disc, records, store, vocab, labels, s2, s1, opts, state);

    labels.save(paths.labels_file.string());
    model.params().save(paths.generator_ckpt.string(), gen_hash);
    disc.params().save(paths.discriminator_ckpt.string(), fnv1a32(disc.signature()));
    std::cerr << "stage 2 done: " << s2.rounds << " rounds, checkpoints in " << out_dir
              << "\n";
  }

  std::ofstream cfg_out(paths.config_file, std::ios::trunc);
  cfg_out << config.canonical();
  return 0;
}

int cmd_generate(RunConfig config, const std::string& dir, const std::string& triples_path,
                 const std::string& topics_csv, const std::string& sentiments_csv,
                 const std::string& out_path, std::uint64_t seed, bool deterministic,
                 const std::string& from_corpus, int limit, bool random_sentiments,
                 bool ablate_enc, bool ablate_dec) {
  const TrainArtifacts paths{fs::path(dir)};
  if (!fs::exists(paths.generator_ckpt) || !fs::exists(paths.vocab_file)) {
    std::cerr << "error: no trained model in " << dir << " (need "
              << paths.generator_ckpt.filename() << " and " << paths.vocab_file.filename()
              << ")\n";
    return 1;
  }
  const Vocabulary vocab = Vocabulary::load(paths.vocab_file.string());
  const TripleStore store = load_triples(triples_path, config.kg_min_weight);
  config.dims.vocab = vocab.size();

  AblationFlags flags;
  flags.enc_sentiment = !ablate_enc;
  flags.dec_sentiment = !ablate_dec;
  GeneratorModel model(config.dims, static_cast<int>(store.relation_vocab().size()),
                       flags, config.seed);
  model.params().load(paths.generator_ckpt.string(), fnv1a32(model.signature()));

  GeneratorModel::GenerateOptions gen_opts;
  gen_opts.max_len = config.max_len;
  gen_opts.max_per_topic = config.max_per_topic;
  gen_opts.deterministic_z = deterministic;
  Rng rng(seed);

  GenerationRun run;
  if (!from_corpus.empty()) {
    const std::vector<EssayRecord> records = load_corpus(from_corpus);
    const std::size_t take = limit > 0
                                 ? std::min<std::size_t>(records.size(),
                                                         static_cast<std::size_t>(limit))
                                 : records.size();
    for (std::size_t i = 0; i < take; ++i) {
      const EssayRecord& rec = records[i];
      RunItem item;
      item.topics = rec.topics;
      if (random_sentiments || rec.sentiments.empty()) {
        for (std::size_t s = 0; s < rec.sentences.size(); ++s) {
          item.sentiments.push_back(static_cast<Sentiment>(rng.uniform_int(3)));
        }
      } else {
        item.sentiments = rec.sentiments;
      }
      item.sentences =
          model.generate_essay(item.topics, item.sentiments, store, vocab, gen_opts, rng);
      item.reference = rec.sentences;
      run.items.push_back(std::move(item));
    }
  } else {
    if (topics_csv.empty() || sentiments_csv.empty()) {
      std::cerr << "error: need --topics and --sentiments (or --from-corpus)\n";
      return 1;
    }
    RunItem item;
    item.topics = split_csv(topics_csv);
    item.sentiments = parse_sentiments(sentiments_csv);
    if (item.sentiments.empty()) {
      std::cerr << "error: no sentiment labels given\n";
      return 1;
    }
    item.sentences =
        model.generate_essay(item.topics, item.sentiments, store, vocab, gen_opts, rng);
    run.items.push_back(std::move(item));
  }

  if (!out_path.empty()) {
    save_run(run, out_path);
    std::cerr << "run written to " << out_path << "\n";
  }
  for (const RunItem& item : run.items) {
    for (std::size_t i = 0; i < item.sentences.size(); ++i) {
      std::cout << "[" << to_string(item.sentiments[i]) << "] ";
      for (std::size_t t = 0; t < item.sentences[i].size(); ++t) {
        if (t > 0) std::cout << ' ';
        std::cout << item.sentences[i][t];
      }
      std::cout << "\n";
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_evaluate(const RunConfig& config, const std::string& run_path,
                 const std::string& corpus_path, const std::string& lexicon_path,
                 const std::string& report_path, int k) {
  const GenerationRun run = load_run(run_path);
  if (run.items.empty()) {
    std::cerr << "error: run file has no items\n";
    return 1;
  }
  const std::vector<EssayRecord> corpus = load_corpus(corpus_path);
  const Lexicon lexicon =
      lexicon_path.empty() ? Lexicon::builtin() : Lexicon::load(lexicon_path);

  const Vocabulary vocab = build_vocab(corpus, config.vocab_cap);
  ConsistencyClassifier::TrainOptions copt;
  copt.d_w = config.dims.d_w;
  copt.n_filters = config.disc_filters;
  copt.window = config.disc_window;
  copt.topic_cap = config.topic_label_cap;
  std::cerr << "training consistency classifier on " << corpus.size() << " essays...\n";
  const ConsistencyClassifier classifier =
      ConsistencyClassifier::train(corpus, vocab, copt);

  const MetricsReport report = evaluate_run(run, corpus, lexicon, classifier, vocab, k);
  std::cerr << report.to_table();
  if (report_path.empty()) {
    std::cout << report.to_json() << "\n";
  } else {
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write report: " + report_path);
    out << report.to_json() << "\n";
    std::cerr << "report written to " << report_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig config;
  config.apply_profile("desk");

  // Load --config before binding flags so explicit flags override it.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      try {
        config.load_file(argv[i + 1]);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
      }
    }
  }

  CLI::App app{"sentiment-controllable topic-to-essay generation"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "flat key=value config file");
  app.add_option("--profile", config.profile, "dimension profile: desk|paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--seed", config.seed, "master seed");
  app.add_option("--max-per-topic", config.max_per_topic,
                 "graph entries retrieved per topic");
  app.add_option("--max-len", config.max_len, "maximum tokens per generated sentence");
  app.add_option("--min-weight", config.kg_min_weight, "triple weight threshold");

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "write a synthetic training corpus");
  synth->fallthrough();
  std::string synth_out, synth_topics, synth_lexicon, synth_kg;
  int synth_n = config.synth_essays;
  std::uint64_t synth_seed = config.seed;
  bool synth_seed_given = false;
  synth->add_option("--out", synth_out, "corpus JSONL path")->required();
  synth->add_option("--n", synth_n, "number of essays");
  synth->add_option("--synth-seed", synth_seed, "corpus seed (defaults to --seed)")
      ->each([&](const std::string&) { synth_seed_given = true; });
  synth->add_option("--topics", synth_topics, "comma-separated topic pool");
  synth->add_option("--lexicon", synth_lexicon,
                    "lexicon TSV (loaded if present, written otherwise)");
  synth->add_option("--kg-out", synth_kg, "where to write the toy triple TSV");

  // build-kg
  auto* buildkg = app.add_subcommand("build-kg", "validate and filter a triple TSV");
  buildkg->fallthrough();
  std::string kg_in, kg_out;
  buildkg->add_option("--triples", kg_in, "triple TSV path")->required();
  buildkg->add_option("--out", kg_out, "write the filtered triples here");

  // train
  auto* train = app.add_subcommand("train", "run stage-1 (CVAE) and/or stage-2 training");
  train->fallthrough();
  std::string train_corpus, train_triples, train_lexicon, train_out, train_stage = "1";
  bool ablate_enc = false, ablate_dec = false;
  train->add_option("--corpus", train_corpus, "training corpus JSONL")->required();
  train->add_option("--triples", train_triples, "triple TSV")->required();
  train->add_option("--lexicon", train_lexicon, "lexicon TSV for sentiment labeling");
  train->add_option("--out-dir", train_out, "checkpoint/log directory")->required();
  train->add_option("--stage", train_stage, "1 | 2 | both")
      ->check(CLI::IsMember({"1", "2", "both"}));
  train->add_flag("--ablate-enc-senti", ablate_enc,
                  "drop the sentiment embedding from the condition vector");
  train->add_flag("--ablate-dec-senti", ablate_dec,
                  "drop the sentiment embedding from the decoder");
  train->add_option("--epochs", config.stage1.epochs, "stage-1 epochs");
  train->add_option("--batch", config.stage1.batch_size, "stage-1 batch size");
  train->add_option("--lr", config.stage1.learning_rate, "stage-1 learning rate");
  train->add_option("--dropout", config.stage1.dropout_rate, "output-layer dropout");
  train->add_option("--bow-weight", config.stage1.bow_weight, "bag-of-words loss weight");
  train->add_option("--anneal-steps", config.stage1.kl_anneal_steps,
                    "KL annealing steps (0 = two epochs)");
  train->add_option("--vocab-cap", config.vocab_cap, "vocabulary size cap");
  train->add_option("--rounds", config.stage2.rounds, "stage-2 rounds");
  train->add_option("--g-steps", config.stage2.g_steps, "generator steps per round");
  train->add_option("--d-steps", config.stage2.d_steps, "discriminator steps per round");
  train->add_option("--s2-lr", config.stage2.learning_rate, "stage-2 generator rate");
  train->add_option("--s2-d-lr", config.stage2.d_learning_rate,
                    "stage-2 discriminator rate");

  // generate
  auto* gen = app.add_subcommand("generate", "generate essays from a checkpoint");
  gen->fallthrough();
  std::string gen_dir, gen_triples, gen_topics, gen_sentiments, gen_out, gen_corpus;
  std::uint64_t gen_seed = config.seed;
  bool gen_deterministic = false, gen_random_sent = false;
  bool gen_ablate_enc = false, gen_ablate_dec = false;
  int gen_limit = 0;
  gen->add_option("--checkpoint-dir", gen_dir, "directory from train")->required();
  gen->add_option("--triples", gen_triples, "triple TSV")->required();
  gen->add_option("--topics", gen_topics, "comma-separated topic words");
  gen->add_option("--sentiments", gen_sentiments,
                  "comma-separated per-sentence labels (pos|neg|neu)");
  gen->add_option("--out", gen_out, "write the run JSONL here");
  gen->add_option("--gen-seed", gen_seed, "noise seed (defaults to --seed)");
  gen->add_flag("--deterministic", gen_deterministic, "use the prior mean for z");
  gen->add_option("--from-corpus", gen_corpus,
                  "batch mode: take topics and references from this corpus");
  gen->add_option("--limit", gen_limit, "max items in batch mode");
  gen->add_flag("--random-sentiments", gen_random_sent,
                "draw sentiment labels uniformly in batch mode");
  gen->add_flag("--ablate-enc-senti", gen_ablate_enc, "match a --ablate-enc-senti model");
  gen->add_flag("--ablate-dec-senti", gen_ablate_dec, "match a --ablate-dec-senti model");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score a generation run");
  eval->fallthrough();
  std::string eval_run, eval_corpus, eval_lexicon, eval_report;
  int eval_k = 10;
  eval->add_option("--run", eval_run, "generation run JSONL")->required();
  eval->add_option("--corpus", eval_corpus, "training corpus JSONL")->required();
  eval->add_option("--lexicon", eval_lexicon, "lexicon TSV");
  eval->add_option("--report", eval_report, "metrics JSON output path");
  eval->add_option("--k", eval_k, "similar essays retrieved for novelty");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (!synth_seed_given) synth_seed = config.seed;
    if (*synth) {
      return cmd_synth_data(config, synth_out, synth_n, synth_seed, synth_topics,
                            synth_lexicon, synth_kg);
    }
    if (*buildkg) return cmd_build_kg(config, kg_in, kg_out);
    if (*train) {
      return cmd_train(config, train_corpus, train_triples, train_lexicon, train_out,
                       train_stage, ablate_enc, ablate_dec);
    }
    if (*gen) {
      return cmd_generate(config, gen_dir, gen_triples, gen_topics, gen_sentiments,
                          gen_out, gen_seed, gen_deterministic, gen_corpus, gen_limit,
                          gen_random_sent, gen_ablate_enc, gen_ablate_dec);
    }
    if (*eval) {
      return cmd_evaluate(config, eval_run, eval_corpus, eval_lexicon, eval_report,
                          eval_k);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
