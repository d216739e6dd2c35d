#include "sctkg/kg.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>

#include "sctkg/error.hpp"

namespace sctkg {

namespace {

std::string lowercase_ascii(std::string s) {
  for (char& c : s) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

bool has_space(const std::string& s) {
  return s.find_first_of(" \t\r\n") != std::string::npos;
}

}  // namespace

TripleStore::TripleStore(std::vector<Triple> triples) : triples_(std::move(triples)) {
  for (int i = 0; i < static_cast<int>(triples_.size()); ++i) {
    const Triple& t = triples_[static_cast<std::size_t>(i)];
    index_[t.head].push_back(i);
    if (t.tail != t.head) index_[t.tail].push_back(i);
    if (relation_ids_.emplace(t.relation, static_cast<int>(relations_.size())).second) {
      relations_.push_back(t.relation);
    }
  }
}

int TripleStore::relation_id(const std::string& relation) const {
  auto it = relation_ids_.find(relation);
  return it == relation_ids_.end() ? -1 : it->second;
}

const std::vector<int>* TripleStore::positions(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? nullptr : &it->second;
}

TripleStore load_triples(const std::string& path, double min_weight) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open triple file: " + path);
  std::vector<Triple> kept;
  std::set<std::array<std::string, 3>> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw ParseError(path, line_no,
                       "expected 4 tab-separated fields, got " +
                           std::to_string(fields.size()));
    }
    double weight = 0.0;
    const char* begin = fields[3].data();
    const char* end = begin + fields[3].size();
    const auto [ptr, ec] = std::from_chars(begin, end, weight);
    if (ec != std::errc{} || ptr != end) {
      throw ParseError(path, line_no, "non-numeric weight '" + fields[3] + "'");
    }
    Triple t{lowercase_ascii(fields[0]), fields[1], lowercase_ascii(fields[2])};
    if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
      throw ParseError(path, line_no, "empty field in triple");
    }
    if (has_space(t.head) || has_space(t.relation) || has_space(t.tail)) {
      throw ParseError(path, line_no, "whitespace inside triple field");
    }
    if (weight < min_weight) continue;
    if (seen.insert({t.head, t.relation, t.tail}).second) {
      kept.push_back(std::move(t));
    }
  }
  return TripleStore(std::move(kept));
}

TopicKnowledgeGraph build_topic_graph(const TripleStore& store,
                                      const std::vector<std::string>& topics,
                                      int max_per_topic) {
  if (max_per_topic < 1) {
    throw std::invalid_argument("build_topic_graph: max_per_topic must be >= 1");
  }
  TopicKnowledgeGraph graph;
  graph.topics = topics;
  for (const std::string& topic : topics) {
    const std::vector<int>* pos = store.positions(topic);
    if (pos == nullptr) continue;
    int taken = 0;
    for (int idx : *pos) {
      if (taken >= max_per_topic) break;
      const Triple& t = store.triples()[static_cast<std::size_t>(idx)];
      GraphEntry e;
      e.relation_id = store.relation_id(t.relation);
      e.source_topic = topic;
      if (t.head == topic) {
        e.neighbor = t.tail;
        e.flag = PositionFlag::kTailNeighbor;
      } else {
        e.neighbor = t.head;
        e.flag = PositionFlag::kHeadNeighbor;
      }
      graph.entries.push_back(std::move(e));
      ++taken;
    }
  }
  return graph;
}

GraphView graph_view(const TopicKnowledgeGraph& graph, const Vocabulary& vocab) {
  GraphView view;
  view.neighbor_ids.reserve(graph.entries.size());
  view.relation_ids.reserve(graph.entries.size());
  view.flags.reserve(graph.entries.size());
  for (const GraphEntry& e : graph.entries) {
    view.neighbor_ids.push_back(vocab.id(e.neighbor));
    view.relation_ids.push_back(e.relation_id);
    view.flags.push_back(e.flag);
  }
  return view;
}

}  // namespace sctkg
