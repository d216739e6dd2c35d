#include "sctkg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "sctkg/error.hpp"

namespace sctkg {

using nlohmann::json;

namespace {

std::vector<std::string> flatten(std::span<const std::vector<std::string>> sentences) {
  std::vector<std::string> out;
  for (const auto& s : sentences) out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::string join_ngram(std::span<const std::string> tokens, std::size_t at, int n) {
  std::string key;
  for (int j = 0; j < n; ++j) {
    if (j > 0) key.push_back('\x1f');
    key += tokens[at + static_cast<std::size_t>(j)];
  }
  return key;
}

std::unordered_map<std::string, long> ngram_counts(std::span<const std::string> tokens,
                                                   int n) {
  std::unordered_map<std::string, long> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    ++counts[join_ngram(tokens, i, n)];
  }
  return counts;
}

std::unordered_set<std::string> bigram_set(std::span<const std::string> tokens) {
  std::unordered_set<std::string> out;
  for (std::size_t i = 0; i + 2 <= tokens.size(); ++i) {
    out.insert(join_ngram(tokens, i, 2));
  }
  return out;
}

}  // namespace

GenerationRun load_run(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run file: " + path);
  GenerationRun run;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    RunItem item;
    if (!j.contains("topics") || !j.contains("sentiments") || !j.contains("sentences")) {
      throw ParseError(path, line_no, "need keys topics, sentiments, sentences");
    }
    for (const json& t : j["topics"]) item.topics.push_back(t.get<std::string>());
    for (const json& s : j["sentiments"]) {
      const auto parsed = sentiment_from_string(s.get<std::string>());
      if (!parsed) {
        throw ParseError(path, line_no, "unknown sentiment '" + s.get<std::string>() + "'");
      }
      item.sentiments.push_back(*parsed);
    }
    for (const json& sent : j["sentences"]) {
      std::vector<std::string> tokens;
      for (const json& t : sent) tokens.push_back(t.get<std::string>());
      item.sentences.push_back(std::move(tokens));
    }
    if (j.contains("reference") && !j["reference"].is_null()) {
      std::vector<std::vector<std::string>> ref;
      for (const json& sent : j["reference"]) {
        std::vector<std::string> tokens;
        for (const json& t : sent) tokens.push_back(t.get<std::string>());
        ref.push_back(std::move(tokens));
      }
      item.reference = std::move(ref);
    }
    run.items.push_back(std::move(item));
  }
  return run;
}

void save_run(const GenerationRun& run, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write run file: " + path);
  for (const RunItem& item : run.items) {
    json j;
    j["topics"] = item.topics;
    std::vector<std::string> labels;
    for (Sentiment s : item.sentiments) labels.emplace_back(to_string(s));
    j["sentiments"] = labels;
    j["sentences"] = item.sentences;
    if (item.reference) j["reference"] = *item.reference;
    out << j.dump() << "\n";
  }
}

double bleu(const GenerationRun& run) {
  if (run.items.empty()) throw std::invalid_argument("bleu: empty run");
  constexpr int kMaxOrder = 4;
  long clipped[kMaxOrder] = {0, 0, 0, 0};
  long totals[kMaxOrder] = {0, 0, 0, 0};
  long hyp_len = 0;
  long ref_len = 0;
  for (const RunItem& item : run.items) {
    if (!item.reference) throw std::invalid_argument("bleu: item without reference");
    const std::vector<std::string> hyp = flatten(item.sentences);
    const std::vector<std::string> ref = flatten(*item.reference);
    hyp_len += static_cast<long>(hyp.size());
    ref_len += static_cast<long>(ref.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      const auto hyp_counts = ngram_counts(hyp, n);
      const auto ref_counts = ngram_counts(ref, n);
      for (const auto& [gram, count] : hyp_counts) {
        totals[n - 1] += count;
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) clipped[n - 1] += std::min(count, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    if (totals[n] == 0 || clipped[n] == 0) return 0.0;
    log_sum += 0.25 * std::log(static_cast<double>(clipped[n]) /
                               static_cast<double>(totals[n]));
  }
  double bp = 1.0;
  if (hyp_len < ref_len && hyp_len > 0) {
    bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  }
  return bp * std::exp(log_sum);
}

double distinct_n(std::span<const std::vector<std::string>> essays, int n) {
  if (n != 1 && n != 2) throw std::invalid_argument("distinct_n: n must be 1 or 2");
  std::unordered_set<std::string> distinct;
  long total = 0;
  for (const auto& essay : essays) {
    if (static_cast<int>(essay.size()) < n) continue;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= essay.size(); ++i) {
      distinct.insert(join_ngram(essay, i, n));
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("distinct_n: no n-grams in input");
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

ConsistencyClassifier ConsistencyClassifier::train(std::span<const EssayRecord> records,
                                                   const Vocabulary& vocab,
                                                   const TrainOptions& options) {
  if (records.empty()) {
    throw std::invalid_argument("ConsistencyClassifier: empty corpus");
  }
  ConsistencyClassifier cc;
  cc.labels_ = TopicLabels::from_corpus(records, options.topic_cap);
  if (cc.labels_.count() == 0) {
    throw std::invalid_argument("ConsistencyClassifier: no topics in corpus");
  }
  DiscriminatorConfig config;
  config.vocab = vocab.size();
  config.d_w = options.d_w;
  config.n_filters = options.n_filters;
  config.window = options.window;
  config.topic_count = cc.labels_.count();
  config.fake_class = false;
  cc.disc_ = std::make_shared<Discriminator>(config, options.seed);

  std::vector<Discriminator::LabeledText> data;
  data.reserve(records.size());
  for (const EssayRecord& rec : records) {
    Discriminator::LabeledText item;
    item.token_ids = flatten_essay_ids(rec.sentences, vocab);
    if (item.token_ids.empty()) continue;
    item.target = Vec::Zero(cc.disc_->output_count());
    for (int idx : cc.labels_.indices_of(rec.topics)) item.target(idx) = 1.0;
    data.push_back(std::move(item));
  }
  Rng rng(options.seed);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  long step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(idx);
    for (std::size_t at = 0; at < idx.size();
         at += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end =
          std::min(idx.size(), at + static_cast<std::size_t>(options.batch_size));
      std::vector<Discriminator::LabeledText> batch;
      batch.reserve(end - at);
      for (std::size_t i = at; i < end; ++i) batch.push_back(data[idx[i]]);
      cc.disc_->params().zero_grads();
      cc.disc_->disc_loss_backward(batch);
      cc.disc_->params().clip_grads(options.grad_clip_norm);
      ++step;
      cc.disc_->params().adam_step(options.learning_rate, step);
    }
  }
  return cc;
}

std::optional<double> ConsistencyClassifier::mean_topic_score(
    const RunItem& item, const Vocabulary& vocab) const {
  if (!trained()) throw std::logic_error("ConsistencyClassifier: not trained");
  const std::vector<int> indices = labels_.indices_of(item.topics);
  if (indices.empty()) return std::nullopt;
  const std::vector<int> flat = flatten_essay_ids(item.sentences, vocab);
  if (flat.empty()) return 0.0;
  const DiscriminatorOutput out = disc_->classify(flat);
  double sum = 0.0;
  for (int idx : indices) sum += out.scores(idx);
  return sum / static_cast<double>(indices.size());
}

double consistency(const GenerationRun& run, const ConsistencyClassifier& classifier,
                   const Vocabulary& vocab) {
  if (!classifier.trained()) {
    throw std::logic_error("consistency: classifier not trained");
  }
  if (run.items.empty()) throw std::invalid_argument("consistency: empty run");
  double sum = 0.0;
  long used = 0;
  for (const RunItem& item : run.items) {
    const auto score = classifier.mean_topic_score(item, vocab);
    if (score) {
      sum += *score;
      ++used;
    }
  }
  if (used == 0) return 0.0;
  return 100.0 * sum / static_cast<double>(used);
}

double novelty(const GenerationRun& run, std::span<const EssayRecord> training_corpus,
               int k) {
  if (k < 1) throw std::invalid_argument("novelty: k must be >= 1");
  if (training_corpus.empty()) throw std::invalid_argument("novelty: empty corpus");
  if (run.items.empty()) throw std::invalid_argument("novelty: empty run");

  // Topic-word document frequencies over the training corpus.
  std::map<std::string, long> df;
  for (const EssayRecord& rec : training_corpus) {
    std::set<std::string> seen(rec.topics.begin(), rec.topics.end());
    for (const std::string& t : seen) ++df[t];
  }
  const double n_docs = static_cast<double>(training_corpus.size());
  const auto idf = [&](const std::string& topic) {
    const auto it = df.find(topic);
    const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
    return std::log((1.0 + n_docs) / (1.0 + d)) + 1.0;
  };
  const auto tfidf = [&](std::span<const std::string> topics) {
    std::map<std::string, double> vec;
    for (const std::string& t : topics) vec[t] += idf(t);
    double norm = 0.0;
    for (const auto& [t, w] : vec) norm += w * w;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (auto& [t, w] : vec) w /= norm;
    }
    return vec;
  };

  std::vector<std::map<std::string, double>> train_vecs;
  std::vector<std::unordered_set<std::string>> train_bigrams;
  train_vecs.reserve(training_corpus.size());
  train_bigrams.reserve(training_corpus.size());
  for (const EssayRecord& rec : training_corpus) {
    train_vecs.push_back(tfidf(rec.topics));
    train_bigrams.push_back(bigram_set(flatten(rec.sentences)));
  }

  double novelty_sum = 0.0;
  for (const RunItem& item : run.items) {
    const auto qvec = tfidf(item.topics);
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(train_vecs.size());
    for (std::size_t i = 0; i < train_vecs.size(); ++i) {
      double dot = 0.0;
      for (const auto& [t, w] : qvec) {
        const auto it = train_vecs[i].find(t);
        if (it != train_vecs[i].end()) dot += w * it->second;
      }
      scored.emplace_back(dot, i);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first > b.first;
    });
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k),
                                                   scored.size());
    const std::unordered_set<std::string> gen_bigrams =
        bigram_set(flatten(item.sentences));
    double max_jaccard = 0.0;
    for (std::size_t i = 0; i < take; ++i) {
      const auto& train_set = train_bigrams[scored[i].second];
      long inter = 0;
      for (const std::string& g : gen_bigrams) {
        if (train_set.count(g) != 0) ++inter;
      }
      const long uni = static_cast<long>(gen_bigrams.size()) +
                       static_cast<long>(train_set.size()) - inter;
      double jac;
      if (uni == 0) {
        jac = 1.0;  // both essays have no bigrams: identical
      } else {
        jac = static_cast<double>(inter) / static_cast<double>(uni);
      }
      if (jac > max_jaccard) max_jaccard = jac;
    }
    novelty_sum += 1.0 - max_jaccard;
  }
  return novelty_sum / static_cast<double>(run.items.size());
}

SentimentPRF sentiment_prf(const GenerationRun& run, const Lexicon& lexicon) {
  long tp[kSentimentCount] = {0, 0, 0};
  long predicted[kSentimentCount] = {0, 0, 0};
  long actual[kSentimentCount] = {0, 0, 0};
  for (const RunItem& item : run.items) {
    if (item.sentiments.size() != item.sentences.size()) {
      throw std::invalid_argument(
          "sentiment_prf: requested labels and sentences differ in count");
    }
    for (std::size_t i = 0; i < item.sentences.size(); ++i) {
      const Sentiment want = item.sentiments[i];
      const Sentiment got = lexicon_sentiment(item.sentences[i], lexicon);
      ++actual[static_cast<int>(want)];
      ++predicted[static_cast<int>(got)];
      if (want == got) ++tp[static_cast<int>(want)];
    }
  }
  SentimentPRF out;
  for (int c = 0; c < kSentimentCount; ++c) {
    out.precision += predicted[c] == 0
                         ? 0.0
                         : static_cast<double>(tp[c]) / static_cast<double>(predicted[c]);
    out.recall += actual[c] == 0
                      ? 0.0
                      : static_cast<double>(tp[c]) / static_cast<double>(actual[c]);
  }
  out.precision /= kSentimentCount;
  out.recall /= kSentimentCount;
  out.f1 = (out.precision + out.recall) == 0.0
               ? 0.0
               : 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

std::string MetricsReport::to_json() const {
  json j;
  j["bleu"] = bleu;
  j["bleu_x100"] = bleu * 100.0;
  j["dist1"] = dist1;
  j["dist2"] = dist2;
  j["consistency"] = consistency;
  j["novelty"] = novelty;
  j["senti_precision"] = senti_precision;
  j["senti_recall"] = senti_recall;
  j["senti_f1"] = senti_f1;
  return j.dump(2);
}

std::string MetricsReport::to_table() const {
  std::ostringstream os;
  os << "metric            value\n";
  os << "----------------  --------\n";
  const auto row = [&os](const char* name, double v) {
    os << name;
    for (std::size_t i = std::string(name).size(); i < 18; ++i) os << ' ';
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    os << buf << "\n";
  };
  row("bleu (x100)", bleu * 100.0);
  row("dist-1", dist1);
  row("dist-2", dist2);
  row("consistency", consistency);
  row("novelty", novelty);
  row("senti-precision", senti_precision);
  row("senti-recall", senti_recall);
  row("senti-f1", senti_f1);
  return os.str();
}

MetricsReport evaluate_run(const GenerationRun& run,
                           std::span<const EssayRecord> training_corpus,
                           const Lexicon& lexicon, const ConsistencyClassifier& classifier,
                           const Vocabulary& vocab, int novelty_k) {
  MetricsReport report;
  report.bleu = bleu(run);
  std::vector<std::vector<std::string>> essays;
  essays.reserve(run.items.size());
  for (const RunItem& item : run.items) essays.push_back(flatten(item.sentences));
  report.dist1 = distinct_n(essays, 1);
  report.dist2 = distinct_n(essays, 2);
  report.consistency = consistency(run, classifier, vocab);
  report.novelty = novelty(run, training_corpus, novelty_k);
  const SentimentPRF prf = sentiment_prf(run, lexicon);
  report.senti_precision = prf.precision;
  report.senti_recall = prf.recall;
  report.senti_f1 = prf.f1;
  return report;
}

double rank_auc(std::span<const double> positive_scores,
                std::span<const double> negative_scores) {
  if (positive_scores.empty() || negative_scores.empty()) {
    throw std::invalid_argument("rank_auc: both classes must be non-empty");
  }
  double wins = 0.0;
  for (double p : positive_scores) {
    for (double n : negative_scores) {
      if (p > n) {
        wins += 1.0;
      } else if (p == n) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(positive_scores.size()) *
                 static_cast<double>(negative_scores.size()));
}

}  // namespace sctkg
