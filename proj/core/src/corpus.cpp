#include "sctkg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "sctkg/error.hpp"
#include "sctkg/rng.hpp"

namespace sctkg {

using nlohmann::json;

const char* to_string(Sentiment s) {
  switch (s) {
    case Sentiment::kPositive: return "pos";
    case Sentiment::kNegative: return "neg";
    case Sentiment::kNeutral: return "neu";
  }
  return "neu";
}

std::optional<Sentiment> sentiment_from_string(std::string_view text) {
  std::string t(text);
  for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "pos" || t == "positive") return Sentiment::kPositive;
  if (t == "neg" || t == "negative") return Sentiment::kNegative;
  if (t == "neu" || t == "neutral") return Sentiment::kNeutral;
  return std::nullopt;
}

Lexicon Lexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon: " + path);
  Lexicon lex;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path, line_no, "expected token<TAB>polarity");
    }
    const std::string token = line.substr(0, tab);
    const std::string polarity = line.substr(tab + 1);
    if (token.empty()) throw ParseError(path, line_no, "empty token");
    if (polarity == "pos") {
      lex.positive.insert(token);
    } else if (polarity == "neg") {
      lex.negative.insert(token);
    } else {
      throw ParseError(path, line_no, "polarity must be pos or neg, got '" + polarity + "'");
    }
  }
  for (const std::string& w : lex.positive) {
    if (lex.negative.count(w) != 0) {
      throw ParseError(path, 0, "token '" + w + "' listed as both pos and neg");
    }
  }
  return lex;
}

void Lexicon::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write lexicon: " + path);
  std::vector<std::string> pos(positive.begin(), positive.end());
  std::vector<std::string> neg(negative.begin(), negative.end());
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  for (const std::string& w : pos) out << w << "\tpos\n";
  for (const std::string& w : neg) out << w << "\tneg\n";
}

Lexicon Lexicon::builtin() {
  Lexicon lex;
  lex.positive = {"good",  "great", "happy", "bright", "joy",
                  "calm",  "sweet", "fine",  "warm",   "lucky"};
  lex.negative = {"bad",   "sad",   "poor",  "dark",   "pain",
                  "harsh", "rough", "grim",  "cold",   "bitter"};
  return lex;
}

namespace {

Sentiment parse_label_or_throw(const json& j, const std::string& path, int line_no) {
  if (!j.is_string()) {
    throw ParseError(path, line_no, "key 'sentiments': labels must be strings");
  }
  const auto s = sentiment_from_string(j.get<std::string>());
  if (!s) {
    throw ParseError(path, line_no,
                     "key 'sentiments': unknown label '" + j.get<std::string>() + "'");
  }
  return *s;
}

std::vector<std::string> parse_string_list(const json& j, const std::string& path,
                                           int line_no, const char* key) {
  if (!j.is_array()) {
    throw ParseError(path, line_no, std::string("key '") + key + "': expected a list");
  }
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const json& e : j) {
    if (!e.is_string()) {
      throw ParseError(path, line_no,
                       std::string("key '") + key + "': expected string entries");
    }
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

std::vector<EssayRecord> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus: " + path);
  std::vector<EssayRecord> records;
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
    if (!j.is_object()) throw ParseError(path, line_no, "expected a JSON object");
    if (!j.contains("topics")) throw ParseError(path, line_no, "missing key 'topics'");
    if (!j.contains("sentences")) throw ParseError(path, line_no, "missing key 'sentences'");

    EssayRecord rec;
    rec.topics = parse_string_list(j["topics"], path, line_no, "topics");
    if (rec.topics.empty()) {
      throw ParseError(path, line_no, "key 'topics': must be non-empty");
    }
    const json& sents = j["sentences"];
    if (!sents.is_array() || sents.empty()) {
      throw ParseError(path, line_no, "key 'sentences': must be a non-empty list");
    }
    for (const json& s : sents) {
      rec.sentences.push_back(parse_string_list(s, path, line_no, "sentences"));
    }
    if (j.contains("sentiments") && !j["sentiments"].is_null()) {
      const json& labels = j["sentiments"];
      if (!labels.is_array()) {
        throw ParseError(path, line_no, "key 'sentiments': expected a list");
      }
      if (labels.size() != rec.sentences.size()) {
        throw ParseError(path, line_no,
                         "key 'sentiments': " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(rec.sentences.size()) +
                             " sentences");
      }
      for (const json& l : labels) {
        rec.sentiments.push_back(parse_label_or_throw(l, path, line_no));
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_corpus(std::span<const EssayRecord> records, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write corpus: " + path);
  for (const EssayRecord& rec : records) {
    json j;
    j["topics"] = rec.topics;
    j["sentences"] = rec.sentences;
    if (!rec.sentiments.empty()) {
      std::vector<std::string> labels;
      labels.reserve(rec.sentiments.size());
      for (Sentiment s : rec.sentiments) labels.emplace_back(to_string(s));
      j["sentiments"] = labels;
    }
    out << j.dump() << "\n";
  }
}

namespace {

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> kFiller = {
      "the",   "a",     "of",    "in",   "on",    "with", "about", "day",
      "time",  "thing", "way",   "place", "people", "idea", "work",  "life",
      "world", "part",  "question", "story"};
  return kFiller;
}

const std::vector<std::string>& content_suffixes() {
  static const std::vector<std::string> kSuffixes = {"study", "view", "plan",
                                                     "rule", "note"};
  return kSuffixes;
}

}  // namespace

const std::vector<std::string>& default_topic_pool() {
  static const std::vector<std::string> kPool = {
      "law",     "education", "music",  "travel", "health",  "science",
      "sports",  "family",    "nature", "money",  "history", "food",
      "weather", "art",       "city",   "ocean",  "books",   "garden",
      "school",  "friendship"};
  return kPool;
}

std::vector<std::string> topic_content_words(const std::string& topic) {
  std::vector<std::string> words;
  words.reserve(content_suffixes().size());
  for (const std::string& s : content_suffixes()) {
    words.push_back(topic + "_" + s);
  }
  return words;
}

std::vector<Triple> toy_knowledge_triples(const std::vector<std::string>& topic_pool) {
  // Relation choice fixes which side of the triple the topic occupies, so
  // both neighbor positions occur in retrieved graphs.
  std::vector<Triple> triples;
  for (const std::string& topic : topic_pool) {
    const std::vector<std::string> words = topic_content_words(topic);
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i % 2 == 0) {
        triples.push_back({topic, "related_to", words[i]});
      } else {
        triples.push_back({words[i], "part_of", topic});
      }
    }
  }
  return triples;
}

std::vector<EssayRecord> synthesize_toy_corpus(std::uint64_t seed, int n_essays,
                                               const std::vector<std::string>& topic_pool,
                                               const Lexicon& lexicon) {
  if (topic_pool.empty()) {
    throw std::invalid_argument("synthesize_toy_corpus: empty topic pool");
  }
  if (n_essays < 1) {
    throw std::invalid_argument("synthesize_toy_corpus: n_essays must be >= 1");
  }
  std::vector<std::string> pos(lexicon.positive.begin(), lexicon.positive.end());
  std::vector<std::string> neg(lexicon.negative.begin(), lexicon.negative.end());
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  if (pos.empty() || neg.empty()) {
    throw std::invalid_argument("synthesize_toy_corpus: lexicon needs both polarities");
  }
  const auto is_marked = [&lexicon](const std::string& w) {
    return lexicon.positive.count(w) != 0 || lexicon.negative.count(w) != 0;
  };
  // Filler and content words must stay sentiment-free or the stored labels
  // would disagree with the lexicon count.
  std::vector<std::string> filler;
  for (const std::string& w : filler_words()) {
    if (!is_marked(w)) filler.push_back(w);
  }
  if (filler.empty()) {
    throw std::invalid_argument("synthesize_toy_corpus: lexicon swallows all filler words");
  }

  Rng rng(seed);
  std::vector<EssayRecord> records;
  records.reserve(static_cast<std::size_t>(n_essays));
  for (int e = 0; e < n_essays; ++e) {
    EssayRecord rec;
    const int n_topics = 1 + rng.uniform_int(
        std::min<int>(5, static_cast<int>(topic_pool.size())));
    std::vector<int> topic_idx(topic_pool.size());
    for (std::size_t i = 0; i < topic_idx.size(); ++i) topic_idx[i] = static_cast<int>(i);
    rng.shuffle(topic_idx);
    for (int i = 0; i < n_topics; ++i) {
      rec.topics.push_back(topic_pool[static_cast<std::size_t>(topic_idx[i])]);
    }

    std::vector<std::string> content;
    for (const std::string& t : rec.topics) {
      for (std::string& w : topic_content_words(t)) {
        if (!is_marked(w)) content.push_back(std::move(w));
      }
    }
    if (content.empty()) content.push_back(filler.front());

    const int n_sentences = 3 + rng.uniform_int(4);
    for (int s = 0; s < n_sentences; ++s) {
      const Sentiment label = static_cast<Sentiment>(rng.uniform_int(3));
      const int length = 5 + rng.uniform_int(11);

      std::vector<std::string> sentence;
      // Sentiment evidence first: enough marked words to dominate the count.
      if (label == Sentiment::kPositive) {
        const int k = 2 + rng.uniform_int(2);
        for (int i = 0; i < k; ++i) {
          sentence.push_back(pos[static_cast<std::size_t>(rng.uniform_int(
              static_cast<int>(pos.size())))]);
        }
      } else if (label == Sentiment::kNegative) {
        const int k = 2 + rng.uniform_int(2);
        for (int i = 0; i < k; ++i) {
          sentence.push_back(neg[static_cast<std::size_t>(rng.uniform_int(
              static_cast<int>(neg.size())))]);
        }
      }
      // Topic-correlated content words.
      const int n_content = std::min(2 + rng.uniform_int(2),
                                     length - static_cast<int>(sentence.size()));
      for (int i = 0; i < n_content; ++i) {
        sentence.push_back(content[static_cast<std::size_t>(
            rng.uniform_int(static_cast<int>(content.size())))]);
      }
      // Neutral filler up to the drawn length.
      while (static_cast<int>(sentence.size()) < length) {
        sentence.push_back(filler[static_cast<std::size_t>(
            rng.uniform_int(static_cast<int>(filler.size())))]);
      }
      rng.shuffle(sentence);
      rec.sentences.push_back(std::move(sentence));
      rec.sentiments.push_back(label);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

Vocabulary build_vocab(std::span<const EssayRecord> records, int cap) {
  if (cap < 5) throw std::invalid_argument("build_vocab: cap must be >= 5");
  std::map<std::string, long> counts;
  for (const EssayRecord& rec : records) {
    for (const auto& sentence : rec.sentences) {
      for (const std::string& tok : sentence) ++counts[tok];
    }
    for (const std::string& topic : rec.topics) ++counts[topic];
  }
  for (const std::string& reserved : Vocabulary::reserved_tokens()) {
    counts.erase(reserved);
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens = Vocabulary::reserved_tokens();
  for (const auto& [tok, n] : ranked) {
    if (static_cast<int>(tokens.size()) >= cap) break;
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

Sentiment lexicon_sentiment(std::span<const std::string> sentence, const Lexicon& lexicon) {
  int pos = 0;
  int neg = 0;
  for (const std::string& tok : sentence) {
    if (lexicon.positive.count(tok) != 0) ++pos;
    if (lexicon.negative.count(tok) != 0) ++neg;
  }
  if (pos > neg) return Sentiment::kPositive;
  if (neg > pos) return Sentiment::kNegative;
  return Sentiment::kNeutral;
}

std::vector<TrainingExample> make_examples(std::span<const EssayRecord> records) {
  std::vector<TrainingExample> examples;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const EssayRecord& rec = records[r];
    if (rec.sentiments.size() != rec.sentences.size()) {
      throw std::invalid_argument("make_examples: record " + std::to_string(r) +
                                  " is missing sentiments");
    }
    for (std::size_t i = 0; i < rec.sentences.size(); ++i) {
      TrainingExample ex;
      ex.topics = rec.topics;
      ex.context.assign(rec.sentences.begin(),
                        rec.sentences.begin() + static_cast<std::ptrdiff_t>(i));
      ex.target = rec.sentences[i];
      ex.sentiment = rec.sentiments[i];
      examples.push_back(std::move(ex));
    }
  }
  return examples;
}

}  // namespace sctkg
