#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "sctkg/vocab.hpp"

namespace sctkg {

// One commonsense fact. Fields are non-empty and contain no whitespace;
// multiword concepts are underscore-joined.
struct Triple {
  std::string head;
  std::string relation;
  std::string tail;

  bool operator==(const Triple& o) const {
    return head == o.head && relation == o.relation && tail == o.tail;
  }
};

// Immutable triple collection with a concept index and a dense relation
// vocabulary. Safe for concurrent reads once constructed.
class TripleStore {
 public:
  TripleStore() = default;
  explicit TripleStore(std::vector<Triple> triples);

  const std::vector<Triple>& triples() const { return triples_; }
  const std::vector<std::string>& relation_vocab() const { return relations_; }
  int relation_id(const std::string& relation) const;  // -1 when absent

  // Positions of triples containing `concept` as head or tail, in store
  // order; nullptr when the concept never occurs.
  const std::vector<int>* positions(const std::string& token) const;

 private:
  std::vector<Triple> triples_;
  std::unordered_map<std::string, std::vector<int>> index_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, int> relation_ids_;
};

// Reads a 4-column TSV `head<TAB>relation<TAB>tail<TAB>weight`, keeps rows
// with weight >= min_weight, de-duplicates on (head, relation, tail) and
// lowercases concepts. Malformed rows raise ParseError with the 1-based
// line number. An empty file yields an empty store.
TripleStore load_triples(const std::string& path, double min_weight);

// Whether a retrieved neighbor sits in the head or the tail slot of its
// source triple. Head-position and tail-position neighbors are scored
// with different projections downstream.
enum class PositionFlag : std::uint8_t { kHeadNeighbor, kTailNeighbor };

struct GraphEntry {
  std::string neighbor;
  int relation_id;
  PositionFlag flag;
  std::string source_topic;
};

// One-hop neighborhood of the topic words, grouped by topic in topic-list
// order, each group truncated to max_per_topic in store order.
struct TopicKnowledgeGraph {
  std::vector<std::string> topics;
  std::vector<GraphEntry> entries;
};

TopicKnowledgeGraph build_topic_graph(const TripleStore& store,
                                      const std::vector<std::string>& topics,
                                      int max_per_topic);

// Aligned id arrays for one topic graph, ready for attention. Neighbors
// missing from the vocabulary map to the UNK id.
struct GraphView {
  std::vector<int> neighbor_ids;
  std::vector<int> relation_ids;
  std::vector<PositionFlag> flags;

  int size() const { return static_cast<int>(neighbor_ids.size()); }
};

GraphView graph_view(const TopicKnowledgeGraph& graph, const Vocabulary& vocab);

}  // namespace sctkg
