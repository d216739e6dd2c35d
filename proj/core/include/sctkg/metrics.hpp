#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sctkg/corpus.hpp"
#include "sctkg/discriminator.hpp"
#include "sctkg/training.hpp"

namespace sctkg {

// One generated essay with the request that produced it.
struct RunItem {
  std::vector<std::string> topics;
  std::vector<Sentiment> sentiments;                                // requested
  std::vector<std::vector<std::string>> sentences;                  // generated
  std::optional<std::vector<std::vector<std::string>>> reference;   // gold essay
};

struct GenerationRun {
  std::vector<RunItem> items;
};

// JSONL, one item per line with keys topics, sentiments, sentences and
// optional reference.
GenerationRun load_run(const std::string& path);
void save_run(const GenerationRun& run, const std::string& path);

// Corpus-level BLEU-4 in [0, 1]: uniform 1..4-gram weights, clipped counts
// without smoothing, brevity penalty; hypothesis and reference essays are
// compared as flat token sequences. Every item must carry a reference.
double bleu(const GenerationRun& run);

// Distinct n-grams across all essays divided by the total n-gram count.
// n must be 1 or 2 and at least one n-gram must exist.
double distinct_n(std::span<const std::vector<std::string>> essays, int n);

// Multi-label topic classifier used only for the Consistency metric: the
// discriminator architecture without the generated-text class, trained on
// real essays. Kept separate from the adversarial discriminator so the
// evaluator never shares parameters with the trainer.
class ConsistencyClassifier {
 public:
  struct TrainOptions {
    int epochs = 5;
    int batch_size = 16;
    double learning_rate = 1e-3;
    double grad_clip_norm = 10.0;
    int d_w = 64;
    int n_filters = 32;
    int window = 128;
    int topic_cap = 100;
    std::uint64_t seed = 11;
  };

  static ConsistencyClassifier train(std::span<const EssayRecord> records,
                                     const Vocabulary& vocab, const TrainOptions& options);

  bool trained() const { return disc_ != nullptr; }
  const TopicLabels& labels() const { return labels_; }

  // Mean sigmoid score over the item's given topics (only topics in the
  // label set participate); nullopt when none of them are known.
  std::optional<double> mean_topic_score(const RunItem& item, const Vocabulary& vocab) const;

 private:
  std::shared_ptr<Discriminator> disc_;
  TopicLabels labels_;
};

// 100 x mean over items of the classifier's mean given-topic score.
// Throws when the classifier is untrained.
double consistency(const GenerationRun& run, const ConsistencyClassifier& classifier,
                   const Vocabulary& vocab);

// 1 - mean over items of the maximum bigram Jaccard similarity against the
// k training essays most similar by TF-IDF cosine over topic words.
double novelty(const GenerationRun& run, std::span<const EssayRecord> training_corpus,
               int k);

struct SentimentPRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Macro precision/recall of lexicon-predicted sentence sentiment against
// the requested labels; F1 is the harmonic mean of macro P and macro R.
SentimentPRF sentiment_prf(const GenerationRun& run, const Lexicon& lexicon);

struct MetricsReport {
  double bleu = 0.0;  // [0,1]; reports also print the x100 form
  double dist1 = 0.0;
  double dist2 = 0.0;
  double consistency = 0.0;  // [0,100]
  double novelty = 0.0;
  double senti_precision = 0.0;
  double senti_recall = 0.0;
  double senti_f1 = 0.0;

  std::string to_json() const;
  std::string to_table() const;
};

// All metrics for one run. BLEU requires references on every item; the
// consistency classifier must be trained.
MetricsReport evaluate_run(const GenerationRun& run,
                           std::span<const EssayRecord> training_corpus,
                           const Lexicon& lexicon, const ConsistencyClassifier& classifier,
                           const Vocabulary& vocab, int novelty_k = 10);

// Probability that a random positive ranks above a random negative (ties
// count half). Used for the real-vs-generated discriminator check.
double rank_auc(std::span<const double> positive_scores,
                std::span<const double> negative_scores);

}  // namespace sctkg
