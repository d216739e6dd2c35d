#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sctkg {

// Token table with four reserved entries at fixed ids. Serialized as one
// token per line; the line number is the id.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  static const std::vector<std::string>& reserved_tokens();

  Vocabulary();  // reserved tokens only
  explicit Vocabulary(std::vector<std::string> tokens);

  int id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const { return tokens_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> lookup_;
};

}  // namespace sctkg
