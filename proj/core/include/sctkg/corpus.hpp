#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "sctkg/kg.hpp"
#include "sctkg/vocab.hpp"

namespace sctkg {

enum class Sentiment : std::uint8_t { kPositive = 0, kNegative = 1, kNeutral = 2 };

inline constexpr int kSentimentCount = 3;

// Short form used in files and on the command line ("pos", "neg", "neu").
const char* to_string(Sentiment s);
// Accepts the short forms and the full words, case-insensitively.
std::optional<Sentiment> sentiment_from_string(std::string_view text);

struct EssayRecord {
  std::vector<std::string> topics;
  std::vector<std::vector<std::string>> sentences;
  // Empty until labeled; otherwise one label per sentence.
  std::vector<Sentiment> sentiments;
};

// One target sentence with everything the generator conditions on.
struct TrainingExample {
  std::vector<std::string> topics;
  std::vector<std::vector<std::string>> context;  // sentences before the target
  std::vector<std::string> target;
  Sentiment sentiment;
};

// Disjoint positive/negative word sets; everything else is neutral.
struct Lexicon {
  std::unordered_set<std::string> positive;
  std::unordered_set<std::string> negative;

  // Two-column TSV: token <TAB> pos|neg.
  static Lexicon load(const std::string& path);
  void save(const std::string& path) const;

  // Small English lexicon used by the toy-data generator.
  static Lexicon builtin();
};

// Reads JSONL with keys `topics` (string list), `sentences` (list of token
// lists) and optional `sentiments` (label list, one per sentence). Raises
// ParseError naming the first offending line and key.
std::vector<EssayRecord> load_corpus(const std::string& path);
void save_corpus(std::span<const EssayRecord> records, const std::string& path);

// Deterministic synthetic corpus: each essay draws 1-5 topics, 3-6
// sentences of 5-15 tokens; sentences mix topic-correlated content words
// with sentiment words matching the drawn label, so the stored labels
// agree with lexicon_sentiment by construction.
std::vector<EssayRecord> synthesize_toy_corpus(std::uint64_t seed, int n_essays,
                                               const std::vector<std::string>& topic_pool,
                                               const Lexicon& lexicon);

// Frequency-ranked vocabulary (ties broken lexicographically), truncated
// to `cap` entries including the four reserved tokens.
Vocabulary build_vocab(std::span<const EssayRecord> records, int cap);

// positive if the sentence has strictly more positive than negative
// lexicon words, negative in the mirrored case, neutral on ties (and for
// empty sentences).
Sentiment lexicon_sentiment(std::span<const std::string> sentence, const Lexicon& lexicon);

// Expands records into per-sentence examples in (record, sentence) order.
// Every record must carry sentiments.
std::vector<TrainingExample> make_examples(std::span<const EssayRecord> records);

// --- toy-data vocabulary shared between the corpus synthesizer and the
// --- knowledge-triple emitter, so retrieved neighbors actually occur in
// --- the generated text.
const std::vector<std::string>& default_topic_pool();
std::vector<std::string> topic_content_words(const std::string& topic);
// Triples linking each topic to its content words, with the topic on the
// head side for some relations and on the tail side for others.
std::vector<Triple> toy_knowledge_triples(const std::vector<std::string>& topic_pool);

}  // namespace sctkg
